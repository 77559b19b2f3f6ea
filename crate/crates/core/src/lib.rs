//! Recurrent networks with elastic, input-dependent recurrence depth.
//!
//! The centerpiece is [`cells::EirehnCell`]: a highway-style recurrent cell
//! whose number of micro-layers per timestep is set by a rectified,
//! exponentially decreasing gate, and whose micro-layer weights are updated
//! by a small hypernetwork. Baseline cells, a reverse-mode autodiff tape,
//! data generators and loaders, and a training harness live alongside it.

pub mod cells;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod models;
pub mod params;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use params::{Bound, ParamId, ParamStore};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
