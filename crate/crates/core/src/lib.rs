pub mod analysis;
pub mod automaton;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod eval;
pub mod generation;
pub mod linalg;
pub mod regression;
pub mod results;
pub mod rng;
pub mod rnn;

pub use error::{Error, Result};
