//! Return probabilities of Markov-modulated fluid queues.

pub mod analysis;
pub mod cli;
pub mod doubling;
pub mod error;
pub mod model;
pub mod numerics;
pub mod oracles;
pub mod qbd;

pub use error::{Error, Result};
pub use model::FluidModel;
pub use numerics::Matrix;
