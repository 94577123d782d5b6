//! Save a trained network's parameters and batchnorm statistics, load them
//! into a fresh store, and confirm inference is unchanged.
//!
//!     cargo run --example checkpoint

use std::fs;

use transnet::data::synth_generate;
use transnet::graph::{init_parameters, Preset};
use transnet::optim::{evaluate, fit, TrainConfig};
use transnet::{Error, Rng};

pub fn run_example() -> transnet::Result<()> {
    let data = synth_generate(10, 32, 2)?;
    let preset: Preset = "zfnet_mini+transition".parse()?;
    let g = preset.build(2, data.sample_shape())?;
    let mut store = init_parameters(&g, &mut Rng::new(2))?;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 2,
        ..TrainConfig::default()
    };
    fit(&g, &mut store, &data, &data, &cfg)?;

    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let ckpt = dir.path().join("ckpt");
    store.save_checkpoint(&ckpt)?;
    let index = fs::read_to_string(ckpt.join("index.txt")).map_err(|e| Error::io(&ckpt, e))?;
    println!("{} entries, e.g.", index.lines().count());
    for line in index.lines().take(4) {
        println!("  {line}");
    }

    let mut restored = init_parameters(&g, &mut Rng::new(99))?;
    restored.load_checkpoint(&ckpt)?;
    let a = evaluate(&g, &mut store, &data, 10)?;
    let b = evaluate(&g, &mut restored, &data, 10)?;
    let diff = a
        .probs
        .as_slice()
        .iter()
        .zip(b.probs.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    // Values are stored as f32, so agreement is to single precision.
    println!("max probability difference after reload: {diff:.2e}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
