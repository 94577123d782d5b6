//! k-fold cross-validation: fold arithmetic, patient-grouped folds, and a
//! small cross-validated training run with per-fold accuracy and AUC.
//!
//!     cargo run --example cross_validation

use transnet::cli::{run_fold, summary_csv, Prepared};
use transnet::data::{kfold_split, kfold_split_grouped, synth_generate};
use transnet::graph::Preset;
use transnet::optim::TrainConfig;

pub fn run_example() -> transnet::Result<()> {
    println!(
        "1229 rows, k=5: {:?}",
        kfold_split(1229, 5, 0)?.fold_sizes()
    );
    println!(
        "11800 rows, k=2: {:?}",
        kfold_split(11_800, 2, 0)?.fold_sizes()
    );

    // Patches from the same patient never straddle folds.
    let patients = ["p1", "p1", "p1", "p2", "p2", "p3", "p4", "p4", "p4", "p4"];
    let groups: Vec<Option<&str>> = patients.iter().map(|p| Some(*p)).collect();
    let plan = kfold_split_grouped(&groups, 2, 0)?;
    for fold in 0..plan.k() {
        let members: Vec<&str> = plan
            .test_indices(fold)
            .iter()
            .map(|&i| patients[i])
            .collect();
        println!("grouped fold {fold}: {members:?}");
    }

    let dataset = synth_generate(20, 32, 4)?;
    let folds = kfold_split(dataset.len(), 2, 4)?;
    let data = Prepared { dataset, folds };
    let preset: Preset = "alexnet_mini+transition".parse()?;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 5,
        seed: 4,
        ..TrainConfig::default()
    };
    let results = (0..data.folds.k())
        .map(|fold| run_fold(&preset, &data, &cfg, fold, None))
        .collect::<transnet::Result<Vec<_>>>()?;
    print!("{}", summary_csv(&results));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
