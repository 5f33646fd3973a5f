//! Product attribute value identification by retrieval-augmented generation.
//!
//! The flow for one product: render its `title description` query, retrieve
//! the top-k taxonomy values per attribute and the top-m similar products of
//! the same category, assemble a five-section prompt, let a [`Generator`]
//! answer, and parse the answer into per-attribute outcomes. The
//! [`evaluation`] module scores outcomes against ground truth.
//!
//! [`Generator`]: generation::Generator

pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod fsio;
pub mod generation;
pub mod http;
pub mod promptgen;
pub mod retrieval;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, ErrorClass, Result};
