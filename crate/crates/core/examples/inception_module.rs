//! Build a GoogLeNet-style inception block (1x1, 1x1->3x3, 1x1->5x5 and
//! pool->1x1 branches), run a forward pass and print its layer table.
//!
//!     cargo run --example inception_module

use transnet::graph::{
    build_inception_module, forward_pass, init_parameters, GraphBuilder, InceptionWidths,
    LayerKind, INPUT,
};
use transnet::layers::Mode;
use transnet::{sample_normal, Rng, Shape4};

pub fn run_example() -> transnet::Result<()> {
    // Widths of GoogLeNet's first inception block ("3a"), on a small map.
    let widths = InceptionWidths {
        b1x1: 64,
        r3x3: 96,
        b3x3: 128,
        r5x5: 16,
        b5x5: 32,
        pool_proj: 32,
    };
    let mut b = GraphBuilder::new(Shape4::new(1, 192, 8, 8));
    let (out, channels) = build_inception_module(&mut b, "inception3a", INPUT, 192, widths)?;
    let gap = b.add("gap", LayerKind::Gap, &[&out]);
    let fc = b.add("fc", LayerKind::Dense { units: 2 }, &[&gap]);
    b.add("loss", LayerKind::SoftmaxCe, &[&fc]);
    let g = b.build("loss")?;
    println!("inception output channels: {channels}");
    print!("{}", g.summary());

    let mut store = init_parameters(&g, &mut Rng::new(0))?;
    let x = sample_normal(&mut Rng::new(1), Shape4::new(2, 192, 8, 8), 0.0, 1.0)?;
    let fwd = forward_pass(&g, &mut store, &x, None, Mode::Inference, &mut Rng::new(2))?;
    println!("class probabilities: {:?}", fwd.probs.as_slice());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
