pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod engine;
pub mod error;
pub mod guesser;
pub mod numkernel;
pub mod oracle;
pub mod questioner;
pub mod training;
pub mod world;

pub use error::{Error, Result};
