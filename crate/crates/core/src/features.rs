//! Per-contract feature extraction for mechanism classification.
//!
//! Every contract that receives at least one transaction is summarized as a
//! nine-dimensional vector of continuous features over *all* its incoming
//! transactions (swaps and non-swaps alike):
//!
//! | # | name              | meaning                                    |
//! |---|-------------------|--------------------------------------------|
//! | 1 | `avg_swap_events` | mean swap events triggered per tx          |
//! | 2 | `avg_gas`         | mean gas used per tx                       |
//! | 3 | `avg_priority_tip`| mean priority tip per tx, in ETH           |
//! | 4 | `avg_index`       | mean position within the block             |
//! | 5 | `mev_label_freq`  | fraction of txs carrying an MEV label      |
//! | 6 | `private_freq`    | fraction of txs never seen in the mempool  |
//! | 7 | `unique_senders`  | distinct sender count                      |
//! | 8 | `txs_per_sender`  | tx count ÷ unique senders                  |
//! | 9 | `tx_count`        | total incoming txs                         |
//!
//! Features 1–4 describe what the transactions do; 5–9 describe who sends
//! them and how. All nine stay continuous — no binarization — and the
//! vector is a pure function of the transaction multiset, so ingestion
//! order cannot change it. Contracts below a configurable transaction
//! budget (default 10) are flagged low-confidence but still vectorized.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::error::ModuleError;
use crate::ingest::{Address, Dataset, MevLabel};
use crate::units::wei_to_eth;

/// Dimension of the feature space.
pub const FEATURE_COUNT: usize = 9;

/// Column names, aligned with [`FeatureVector::values`].
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "avg_swap_events",
    "avg_gas",
    "avg_priority_tip",
    "avg_index",
    "mev_label_freq",
    "private_freq",
    "unique_senders",
    "txs_per_sender",
    "tx_count",
];

/// Minimum transactions for a full-confidence vector.
pub const DEFAULT_MIN_TXS: u64 = 10;

/// One contract's feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub contract: Address,
    /// The nine features, in [`FEATURE_NAMES`] order.
    pub values: [f64; FEATURE_COUNT],
    pub tx_count: u64,
    /// Set when the contract has fewer than the configured minimum txs;
    /// sparse contracts produce noisy means.
    pub low_confidence: bool,
}

impl FeatureVector {
    /// Feature by column name; panics on an unknown name (test helper).
    pub fn by_name(&self, name: &str) -> f64 {
        let idx = FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .unwrap_or_else(|| panic!("unknown feature {name}"));
        self.values[idx]
    }
}

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("contract {contract} received no transactions")]
    UnknownContract { contract: Address },
}

impl ModuleError for FeaturesError {
    fn module(&self) -> &'static str {
        "features"
    }

    fn code(&self) -> &'static str {
        match self {
            FeaturesError::UnknownContract { .. } => "unknown_contract",
        }
    }
}

/// Extracts the feature vector of one contract with the default
/// low-confidence budget.
pub fn extract_features(
    dataset: &Dataset,
    contract: &Address,
) -> Result<FeatureVector, FeaturesError> {
    extract_features_with_min(dataset, contract, DEFAULT_MIN_TXS)
}

/// Extracts the feature vector of one contract, flagging it low-confidence
/// below `min_txs` transactions.
pub fn extract_features_with_min(
    dataset: &Dataset,
    contract: &Address,
    min_txs: u64,
) -> Result<FeatureVector, FeaturesError> {
    let indices = dataset
        .contract_tx_indices(contract)
        .ok_or_else(|| FeaturesError::UnknownContract { contract: contract.clone() })?;

    let mut swap_events: u64 = 0;
    let mut gas: u64 = 0;
    let mut tip_wei: u128 = 0;
    let mut index_sum: u64 = 0;
    let mut labeled: u64 = 0;
    let mut private: u64 = 0;
    let mut senders: BTreeSet<&Address> = BTreeSet::new();
    for &i in indices {
        let tx = &dataset.txs()[i];
        swap_events += tx.swap_count as u64;
        gas += tx.gas_used;
        tip_wei += tx.priority_tip;
        index_sum += tx.index as u64;
        labeled += (tx.mev_label != MevLabel::None) as u64;
        private += tx.is_private as u64;
        senders.insert(&tx.sender);
    }

    let n = indices.len() as u64;
    let nf = n as f64;
    let unique = senders.len() as f64;
    let values = [
        swap_events as f64 / nf,
        gas as f64 / nf,
        wei_to_eth(tip_wei) / nf,
        index_sum as f64 / nf,
        labeled as f64 / nf,
        private as f64 / nf,
        unique,
        nf / unique,
        nf,
    ];
    Ok(FeatureVector {
        contract: contract.clone(),
        values,
        tx_count: n,
        low_confidence: n < min_txs,
    })
}

/// Extracts every contract's vector, in contract address order.
pub fn extract_all(dataset: &Dataset, min_txs: u64) -> Vec<FeatureVector> {
    dataset
        .contracts()
        .map(|c| {
            extract_features_with_min(dataset, c, min_txs)
                .expect("iterated contracts have transactions")
        })
        .collect()
}
