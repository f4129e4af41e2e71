//! Commit message generation from git diffs.

pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod metrics;
pub mod numerics;
pub mod preprocess;
pub mod seq2seq;
pub mod trainer;
pub mod vocab;
