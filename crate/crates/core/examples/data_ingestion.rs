//! Patch ingestion: write PGM and RAWF32 files, describe them in a manifest,
//! load them back as a dataset, and resample an oversized patch.
//!
//!     cargo run --example data_ingestion

use std::fs;

use transnet::data::{
    load_manifest, read_patch, read_rawf32, resample_patch, write_pnm, write_rawf32, ResampleMode,
};
use transnet::{sample_normal, Error, Rng, Shape4};

pub fn run_example() -> transnet::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let root = dir.path();
    let mut rng = Rng::new(5);
    let mut manifest = String::from("path,label,group\n");
    for i in 0..6 {
        let shade = if i % 2 == 0 { 0.3 } else { 0.7 };
        let img = sample_normal(&mut rng, Shape4::new(1, 1, 16, 16), shade, 0.05)?
            .map(|v| v.clamp(0.0, 1.0));
        let name = if i < 3 {
            let name = format!("patch{i}.pgm");
            write_pnm(&root.join(&name), &img)?;
            name
        } else {
            let name = format!("patch{i}.rawf32");
            write_rawf32(&root.join(&name), &img)?;
            name
        };
        manifest.push_str(&format!("{name},{},patient{}\n", i % 2, i / 2));
    }
    let manifest_path = root.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let m = load_manifest(&manifest_path)?;
    println!("{} rows, class histogram {:?}", m.len(), m.histogram());
    let ds = m.load_dataset(Shape4::new(1, 1, 16, 16))?;
    println!("dataset: {} samples of {}", ds.len(), ds.sample_shape());
    println!(
        "grouped 3-fold sizes: {:?}",
        m.folds(3, 0, true)?.fold_sizes()
    );

    // RAWF32 is bit-exact; PGM quantizes to 8 bits.
    let raw = read_rawf32(&root.join("patch3.rawf32"))?;
    let pgm = read_patch(&root.join("patch0.pgm"))?;
    println!("rawf32 {} / pgm {} values read back", raw.len(), pgm.len());

    let big = sample_normal(&mut rng, Shape4::new(1, 3, 46, 70), 0.5, 0.1)?;
    for mode in [
        ResampleMode::CenterCrop,
        ResampleMode::TileGrid,
        ResampleMode::Bilinear,
    ] {
        let out = resample_patch(&big, 23, 23, mode)?;
        println!("{mode:?}: {} patch(es) of {}", out.len(), out[0].shape());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
