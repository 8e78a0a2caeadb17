//! Kernel machines trained in the dual by randomized block coordinate descent
//! with a trust-region inner solver, optionally on random Fourier features.

pub mod cli;
pub mod data;
pub mod error;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod modelio;
pub mod real;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
pub use losses::LossKind;
pub use model::{Mode, TrainedModel};
pub use modelio::{load_model, save_model};
pub use real::{Precision, Real};
pub use train::{train_model, TrainConfig};
