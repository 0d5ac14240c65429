//! Batch analytics over file-based Ethereum builder-market datasets.
//!
//! The crate reconstructs block-builder economics from flat files (JSONL /
//! CSV), groups swap transactions into per-contract order flows, and derives
//! the downstream metrics used to study the builder market:
//!
//! * [`revenue`] — per-block builder revenue and profit,
//! * [`flows`] — per-epoch, per-builder bribe matrices for every order flow,
//! * [`exclusivity`] — KL-divergence exclusivity scores and the F1-optimal
//!   threshold classifier for exclusive order flows,
//! * [`edr`] — the per-block EOF dependency ratio and its ordinal histogram,
//! * [`features`] / [`forest`] — nine-dimensional contract descriptors and a
//!   from-scratch random-forest classifier for non-atomic MEV,
//! * [`pipeline`] — the two-stage mechanism classification of the top bribe
//!   contributors,
//! * [`concentration`] — weekly HHI, builder categories, phase composition,
//!   and share-vs-EOF correlation,
//! * [`tailfit`] — continuous power-law MLE with KS-minimizing tail start.
//!
//! All monetary arithmetic is carried out in integer wei; ETH floats appear
//! only at reporting boundaries. Every public computation is deterministic:
//! given the same input files (and, where applicable, the same seed) the
//! outputs are bitwise identical, regardless of thread count.
//!
//! [`synth`] generates seeded synthetic datasets together with a manifest of
//! planted ground truth, which the test suites use as an independent oracle.

pub mod concentration;
pub mod edr;
pub mod error;
pub mod exclusivity;
pub mod features;
pub mod flows;
pub mod forest;
pub mod ingest;
pub mod pipeline;
pub mod revenue;
pub mod synth;
pub mod tailfit;
pub mod units;

pub use error::ModuleError;
pub use ingest::{Address, BuilderId, Dataset, TxHash};
