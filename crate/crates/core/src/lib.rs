pub mod autoenc;
pub mod cluster;
pub mod corpus;
pub mod defrag;
pub mod denoise;
pub mod embed;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod rank;
pub mod synth;

pub use error::{Error, Result};
