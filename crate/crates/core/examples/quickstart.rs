//! Train an AlexNet-style network with a transition module on the synthetic
//! texture benchmark and report held-out accuracy.
//!
//!     cargo run --example quickstart

use transnet::data::synth_generate;
use transnet::graph::{init_parameters, Preset};
use transnet::optim::{evaluate, fit_with, TrainConfig};
use transnet::Rng;

pub fn run_example() -> transnet::Result<()> {
    let data = synth_generate(30, 32, 1)?;
    let train_rows: Vec<usize> = (0..40).collect();
    let val_rows: Vec<usize> = (40..60).collect();
    let (train, val) = (data.subset(&train_rows), data.subset(&val_rows));

    let preset: Preset = "alexnet_mini+transition".parse()?;
    let g = preset.build(data.num_classes(), data.sample_shape())?;
    println!("{preset}: {} parameters", g.param_count());

    let mut store = init_parameters(&g, &mut Rng::new(1))?;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 8,
        ..TrainConfig::default()
    };
    fit_with(&g, &mut store, &train, &val, &cfg, |r| {
        println!(
            "epoch {:>2}  train loss {:.4} acc {:.3}  val loss {:.4} acc {:.3}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
    })?;
    let eval = evaluate(&g, &mut store, &val, 10)?;
    println!("held-out accuracy {:.3}", eval.accuracy);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
