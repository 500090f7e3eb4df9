//! Detection and repair of API misuses in data-science code.
//!
//! The pipeline renders a prompt that combines the code under review with
//! runtime facts about its data and documented usage directives, asks a
//! language model for a verdict, applies the proposed unified-diff patch, and
//! validates it by re-running the snippet. [`eval`] aggregates these runs
//! into detection and fix metrics with bootstrap and rank-based comparisons.

pub mod domain;
pub mod patch;
pub mod prompt;
pub mod verdict;
pub mod digest;
pub mod docs;
pub mod runtime;
pub mod gateway;
pub mod agent;
pub mod stats;
pub mod pipeline;
pub mod eval;
