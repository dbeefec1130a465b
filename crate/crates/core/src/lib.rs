pub mod aggregation;
pub mod clustering;
pub mod config;
pub mod corpus;
pub mod coverage;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod fixtures;
pub mod gateway;
pub mod index;
pub mod jsonl;
pub mod pipeline;
pub mod pool;
pub mod text;
pub mod tree;

pub use error::{Error, Result};
