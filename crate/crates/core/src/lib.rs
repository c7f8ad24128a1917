//! Question-answering based summary evaluation (APES) with ROUGE, cloze
//! question generation, salience-aware beam-search scoring, and
//! entity-attention loss kernels.

pub mod apes;
pub mod attnloss;
pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod qgen;
pub mod reader;
pub mod report;
pub mod rouge;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
