//! File formats, dataset ingestion and the `vqace` command-line pipeline.
//!
//! Each pipeline stage reads and writes files: dataset caches (`cache`),
//! generic transaction JSONL (`jsonl`), VQA v2 sources (`vqa`), itemset,
//! rule, split and prediction files (`formats`), and a run manifest per
//! artifact (`manifest`).

pub mod cache;
pub mod cli;
pub mod error;
pub mod formats;
pub mod jsonl;
pub mod manifest;
pub mod report;
pub mod vqa;

pub use error::{Error, Result};
