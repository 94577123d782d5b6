//! Nesterov momentum by explicit lookahead: evaluate the gradient at
//! theta + mu v, restore theta, then v <- mu v - lr g and theta <- theta + v.
//! Traced on f(theta) = theta^2 with lr 0.1, mu 0.9.
//!
//!     cargo run --example nesterov

use transnet::graph::ParameterStore;
use transnet::optim::{begin_lookahead, end_lookahead, nesterov_step};
use transnet::{Shape4, Tensor};

pub fn run_example() -> transnet::Result<()> {
    let mut store = ParameterStore::default();
    store.insert("theta", Tensor::full(Shape4::new(1, 1, 1, 1), 1.0));
    let get = |s: &ParameterStore, f: fn(&transnet::graph::ParamSlot) -> &Tensor| {
        s.get("theta")
            .map(|slot| f(slot).as_slice()[0])
            .unwrap_or(f64::NAN)
    };
    println!("step 0: theta {}", get(&store, |s| &s.value));
    for step in 1..=6 {
        let look = begin_lookahead(&mut store, 0.9);
        let ahead = get(&store, |s| &s.value);
        if let Some(slot) = store.get_mut("theta") {
            slot.grad.as_mut_slice()[0] = 2.0 * ahead;
        }
        end_lookahead(&mut store, look);
        nesterov_step(&mut store, 0.1, 0.9);
        println!(
            "step {step}: lookahead {ahead:.6}  velocity {:.6}  theta {:.6}",
            get(&store, |s| &s.velocity),
            get(&store, |s| &s.value)
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
