//! Finite-difference verification of every layer's backward rule and of a
//! whole network, plus the GEMM-versus-direct convolution oracle. The full
//! suite (all presets) is `transnet gradcheck`.
//!
//!     cargo run --example gradient_check

use transnet::graph::{init_parameters, Preset};
use transnet::verify::{
    check_graph_gradients, clone_input, conv_oracle, layer_checks, GradcheckOptions,
    CLONE_WIDTH_CAP,
};
use transnet::{sample_normal, Rng};

pub fn run_example() -> transnet::Result<()> {
    let opts = GradcheckOptions::default();
    for check in layer_checks(&opts)? {
        println!("{check}");
    }

    // End to end on a narrow clone of a preset.
    let preset: Preset = "zfnet_mini+transition+lrn".parse()?;
    let g = preset
        .capped(CLONE_WIDTH_CAP)
        .build(2, clone_input(preset.arch))?;
    let store = init_parameters(&g, &mut Rng::new(3))?;
    let x = sample_normal(&mut Rng::new(4), g.input_shape().with_n(3), 0.0, 1.0)?;
    let err = check_graph_gradients(&g, &store, &x, &[0, 1, 1], 3, 5)?;
    println!("{preset} (capped at {CLONE_WIDTH_CAP}): max relative error {err:.3e}");

    println!(
        "conv GEMM vs direct loop, 50 specs: {:.3e}",
        conv_oracle(50, 1)?
    );

    // The harness catches a broken rule and names it.
    let broken = GradcheckOptions {
        corrupt: Some("conv2d".into()),
        ..GradcheckOptions::default()
    };
    for check in layer_checks(&broken)?.iter().filter(|c| !c.passed()) {
        println!("with a skewed conv backward: {check}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
