//! hybel — hybrid entity-linking candidate generation and evaluation.
//!
//! Candidate generation for entity linking over a knowledge base of entity
//! records, with three interchangeable backends and their union:
//!
//! - **lookup**: exact-match alias table ranked by p(entity | surface form)
//! - **dense**: dot-product retrieval over mention and entity embeddings
//! - **bm25**: Okapi BM25 over entity abstracts
//! - **hybrid**: the set union of lookup and dense candidates
//!
//! Lookup excels when the surface form is an exact alias; dense retrieval
//! excels when the surrounding context carries the signal. Because their
//! hits are largely complementary on short noisy text, the hybrid union
//! recalls strictly more than either backend alone.
//!
//! The crate also ships the measurement harness: recall@K per data split,
//! recall curves, unique-correct counts, method-overlap contingency tables,
//! a linear feature-based disambiguator, and a long-vs-short description
//! ablation, all driven by a config file through the `hybel` CLI.

pub mod candidate;
pub mod dense;
pub mod disambig;
pub mod encode;
pub mod error;
pub mod eval;
pub mod kb;
pub mod retrieve;
pub mod sparse;

pub use candidate::{Method, ScoredCandidate};
pub use error::{Error, Result};
