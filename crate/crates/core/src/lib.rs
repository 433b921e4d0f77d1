pub mod bench;
pub mod cache;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod events;
pub mod likelihood;
pub mod model;
pub mod pipeline;
pub mod spotter;
pub mod synth;

pub use error::{KwsError, Result};
