//! Model definitions and resource accounting.

pub mod network;
pub mod resources;
pub mod spec;

pub use network::{argmax, Network, Prediction};
pub use resources::{count_macs, count_params, reduction_ratio, ResourceReport, Scope};
pub use spec::{build_sepconv, build_stdconv, ModelSpec, DEFAULT_LAMBDA, FEATURE_DIM};
