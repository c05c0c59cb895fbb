//! Local-to-central aggregation of RAPPOR reports.
//!
//! Clients encode a value into `(cohort, prr, irr)` reports ([`rappor`]).
//! The aggregator reduces each labeled report to a quantized weighted sum of
//! its on-bit counts ([`constants`], [`weighting`]) and keeps only
//! per-label counts at each sum ([`store`]). Unlabeled batches are then
//! matched against that store to recover the majority value ([`analysis`]).
//! [`fleet`] generates seeded corpora and reads/writes the report CSV.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod fleet;
pub mod rappor;
pub mod store;
pub mod weighting;

pub use analysis::{
    analyze_batch, match_report, run_experiment, AnalysisReport, Experiment, ExperimentRow,
};
pub use constants::{build_constant_table, ConstantTable, RRSurvey, SamplingCheck};
pub use error::{Error, Result};
pub use fleet::{generate_corpus, read_csv, write_csv, FleetConfig};
pub use rappor::{Bitset, ClientReport, CohortAssignment, EncodingParams};
pub use store::{CentralStore, StoreEntry};
pub use weighting::{weighted_sum, weighted_sum_of_report, WeightKey, WeightedSum};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator for sub-task `index` of a run seeded with `seed`.
pub(crate) fn derived_rng(tag: &str, seed: u64, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update([0]);
    hasher.update(seed.to_be_bytes());
    hasher.update(index.to_be_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&hasher.finalize());
    ChaCha8Rng::from_seed(key)
}
