//! Layer graphs: construction and validation, composite modules, the
//! experiment presets, parameter storage and execution.

mod exec;
mod modules;
pub mod net;
mod params;
mod presets;

pub use exec::{backward_pass, forward_pass, ForwardResult, Tape};
pub use modules::{
    build_inception_module, build_transition_module, InceptionWidths, TransitionSpec,
};
pub use net::{GraphBuilder, LayerKind, LayerNode, NetGraph, INPUT};
pub use params::{init_parameters, ParamSlot, ParameterStore};
pub use presets::{build_preset, Arch, Preset, Variant, FIRST_FC, TRANSITION_KERNELS};
