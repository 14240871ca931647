//! Episodic few-shot sequence labeling for document-level event argument
//! extraction.
//!
//! The pipeline runs: [`corpus`] ingestion and leakage-safe splitting,
//! N-way D-doc episode [`sampler`], token [`encoder`], metric-learning
//! [`heads`] (prototypes, nearest neighbour, multiple NOTA vectors),
//! episodic [`trainer`] and span-exact [`evaluation`].

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod rng;
pub mod sampler;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
