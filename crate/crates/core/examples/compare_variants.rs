//! Baseline, transition, dropout, LRN and no-GAP variants trained on the
//! same folds, written as `compare.csv`. This runs a reduced configuration;
//! the desk-scale run is
//! `transnet compare --preset alexnet_mini --synth n=200,size=32 --k 2 --epochs 30 --lr 0.01`.
//!
//!     cargo run --example compare_variants [out_dir]

use std::path::PathBuf;

use transnet::cli::{cmd_compare, DataSource, RunConfig};
use transnet::data::SynthSpec;
use transnet::optim::TrainConfig;
use transnet::Error;

fn run_in(out: PathBuf) -> transnet::Result<()> {
    let cfg = RunConfig {
        preset: "alexnet_mini".parse()?,
        data: DataSource::Synth(SynthSpec {
            n_per_class: 20,
            size: 32,
            seed: 7,
        }),
        k: 2,
        train: TrainConfig {
            learning_rate: 0.01,
            epochs: 3,
            seed: 7,
            ..TrainConfig::default()
        },
        out: out.clone(),
        grouped: false,
        parallel: false,
    };
    let rows = cmd_compare(&cfg, &mut std::io::stdout())?;
    let csv = out.join("compare.csv");
    println!("{} variants written to {}", rows.len(), csv.display());
    Ok(())
}

pub fn run_example() -> transnet::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    run_in(dir.path().to_path_buf())
}

fn main() {
    let result = match std::env::args_os().nth(1) {
        Some(out) => run_in(out.into()),
        None => run_example(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
