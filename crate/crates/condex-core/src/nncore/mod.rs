//! Neural-network core: tensors, a reverse-mode autodiff tape, checkpoint
//! I/O, and Adam. Dense f64 math on one thread; big enough for conv nets
//! over depth patches, nothing more.

mod adam;
mod graph;
mod params;

pub use adam::Adam;
pub use graph::{Graph, NodeId, CE_EPS};
pub use params::{uniform_fan_in, ModelParams, Tensor};
