//! ROC curves and AUC: the tie-aware staircase, its agreement with the
//! pairwise (Mann–Whitney) definition, and CSV export.
//!
//!     cargo run --example roc_auc

use transnet::metrics::{auc_from_pairs, roc_curve, roc_to_csv};
use transnet::Rng;

pub fn run_example() -> transnet::Result<()> {
    let curve = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])?;
    println!("four samples: AUC {}", curve.auc);
    print!("{}", roc_to_csv(&curve)?);

    // Noisy scores that favour the positive class, with ties.
    let mut rng = Rng::new(9);
    let labels: Vec<usize> = (0..500).map(|i| i % 2).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&l| ((l as f64 * 0.6 + rng.standard_normal()) * 4.0).round() / 4.0)
        .collect();
    let curve = roc_curve(&scores, &labels)?;
    println!(
        "500 samples: staircase AUC {:.6}, pairwise AUC {:.6}, {} ROC points",
        curve.auc,
        auc_from_pairs(&scores, &labels)?,
        curve.points.len()
    );

    match roc_curve(&[0.3, 0.7], &[1, 1]) {
        Ok(_) => println!("unexpected: single-class ROC"),
        Err(e) => println!("single class: {e}"),
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
