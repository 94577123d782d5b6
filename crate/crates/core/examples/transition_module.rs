//! The transition module: parallel 3x3, 5x5 and 7x7 stride-2 convolutions,
//! each collapsed by its own global average pool, concatenated into the
//! first fully connected layer. Shows the FC-input arithmetic with and
//! without the pooling.
//!
//!     cargo run --example transition_module

use transnet::graph::{
    build_transition_module, Arch, GraphBuilder, LayerKind, Preset, TransitionSpec, Variant,
    FIRST_FC, INPUT, TRANSITION_KERNELS,
};
use transnet::Shape4;

pub fn run_example() -> transnet::Result<()> {
    // A stand-alone block on a 256-channel 13x13 feature map.
    for filters in [1024, 2048] {
        let mut b = GraphBuilder::new(Shape4::new(1, 256, 13, 13));
        let out = build_transition_module(
            &mut b,
            "transition",
            INPUT,
            256,
            &TransitionSpec::new(filters, &TRANSITION_KERNELS, 2),
        )?;
        b.add("fc", LayerKind::Dense { units: 2 }, &[&out]);
        b.add("loss", LayerKind::SoftmaxCe, &["fc"]);
        let g = b.build("loss")?;
        let fc_in = g.input_shape_of("fc").map(|s| s.sample_len());
        println!("F = {filters}: first FC input {fc_in:?} (3 x F)");
    }

    // The same block inside the mini preset, with and without pooling.
    let input = Shape4::new(1, 3, 32, 32);
    for variant in [Variant::TRANSITION, Variant::TRANSITION_NOGAP] {
        let g = Preset::new(Arch::AlexNetMini, variant).build(2, input)?;
        let fc_in = g.input_shape_of(FIRST_FC).map(|s| s.sample_len());
        println!(
            "alexnet_mini+{variant}: first FC input {fc_in:?}, {} parameters",
            g.param_count()
        );
    }
    let g = Preset::new(Arch::AlexNetMini, Variant::TRANSITION).build(2, input)?;
    print!("{}", g.summary());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
