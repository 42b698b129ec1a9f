//! Operational neural networks: layers of neurons whose per-connection
//! operator is a (pool, activation, nodal) triple drawn from a library,
//! trained by back-propagation with an adaptive learning rate and
//! configured by greedy iterative search over operator sets.

pub mod backprop;
pub mod cli;
pub mod data;
pub mod error;
pub mod gis;
pub mod gradcheck;
pub mod metrics;
pub mod model_io;
pub mod network;
pub mod operators;
pub mod tensor;
pub mod train;

pub use backprop::{Gradients, Sample};
pub use error::{OnnError, Result};
pub use network::{LayerSpec, NetworkModel, NetworkSpec, Sampling};
pub use operators::{Activation, Nodal, OperatorParams, OperatorSet, Pool};
pub use tensor::{Cache4D, Map2D, PaddingMode};
pub use train::{BatchPolicy, TrainConfig, TrainOutcome};
