pub mod autograd;
pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod layers;
pub mod modelfile;
pub mod rng;
pub mod tagger;

pub use error::{Error, Result};
