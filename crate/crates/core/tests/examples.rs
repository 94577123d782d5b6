//! Runs every example's `run_example` so the examples stay working.

#[allow(dead_code)]
#[path = "../examples/quickstart.rs"]
mod quickstart;

#[test]
fn example_quickstart() {
    quickstart::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/transition_module.rs"]
mod transition_module;

#[test]
fn example_transition_module() {
    transition_module::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/inception_module.rs"]
mod inception_module;

#[test]
fn example_inception_module() {
    inception_module::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/gradient_check.rs"]
mod gradient_check;

#[test]
fn example_gradient_check() {
    gradient_check::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/nesterov.rs"]
mod nesterov;

#[test]
fn example_nesterov() {
    nesterov::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/roc_auc.rs"]
mod roc_auc;

#[test]
fn example_roc_auc() {
    roc_auc::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/cross_validation.rs"]
mod cross_validation;

#[test]
fn example_cross_validation() {
    cross_validation::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/data_ingestion.rs"]
mod data_ingestion;

#[test]
fn example_data_ingestion() {
    data_ingestion::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/compare_variants.rs"]
mod compare_variants;

#[test]
fn example_compare_variants() {
    compare_variants::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/checkpoint.rs"]
mod checkpoint;

#[test]
fn example_checkpoint() {
    checkpoint::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/synthetic_benchmark.rs"]
mod synthetic_benchmark;

#[test]
fn example_synthetic_benchmark() {
    synthetic_benchmark::run_example().unwrap();
}
