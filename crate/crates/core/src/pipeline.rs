//! Two-stage mechanism classification of the top bribe-contributing flows.
//!
//! Flows are ranked by lifetime bribe volume (descending, ties broken by
//! contract address) and the top K enter the pipeline:
//!
//! 1. Contracts with a manual mechanism label keep it — curated labels
//!    outrank any model. A manual `other` maps to `miscellaneous`.
//! 2. Unlabeled contracts get the forest's verdict on their feature
//!    vector. A `non_atomic` vote is final.
//! 3. Contracts the forest calls `other` are disambiguated: a contract
//!    whose transactions carry MEV labels more than half the time is
//!    `atomic`; anything left is `miscellaneous`.
//!
//! Every ranked contract therefore receives exactly one mechanism, and the
//! whole pass is a deterministic function of (dataset, forest, labels, K).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{extract_features, FeatureVector};
use crate::flows::FlowTable;
use crate::forest::{predict, Forest, ForestClass};
use crate::ingest::{Address, Dataset, Mechanism};
use crate::units::Wei;

/// Final mechanism taxonomy of the revenue report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismClass {
    Protocol,
    Atomic,
    NonAtomic,
    Miscellaneous,
}

impl MechanismClass {
    /// Stable report order.
    pub const ALL: [MechanismClass; 4] = [
        MechanismClass::Protocol,
        MechanismClass::Atomic,
        MechanismClass::NonAtomic,
        MechanismClass::Miscellaneous,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MechanismClass::Protocol => "protocol",
            MechanismClass::Atomic => "atomic",
            MechanismClass::NonAtomic => "non_atomic",
            MechanismClass::Miscellaneous => "miscellaneous",
        }
    }
}

/// How an assignment was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Manual label from the label file.
    Manual,
    /// Forest majority vote.
    Forest,
    /// Forest said `other`; the MEV-label frequency heuristic promoted it.
    LabelHeuristic,
    /// Forest said `other` and no heuristic applied.
    Fallback,
}

/// One ranked contract's verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub contract: Address,
    /// 1-based position in the bribe ranking.
    pub rank: usize,
    pub total_bribe: Wei,
    pub mechanism: MechanismClass,
    pub origin: Origin,
    /// Winning vote count when the forest was consulted.
    pub votes: Option<u32>,
    /// Low-confidence feature flag (sparse contract), when extracted.
    pub low_confidence: bool,
}

/// Default ranking depth.
pub const DEFAULT_TOP_K: usize = 1000;

fn manual_mechanism(m: Mechanism) -> MechanismClass {
    match m {
        Mechanism::Protocol => MechanismClass::Protocol,
        Mechanism::Atomic => MechanismClass::Atomic,
        Mechanism::NonAtomic => MechanismClass::NonAtomic,
        // A curated "other" asserts the flow is none of the three named
        // mechanisms, which is exactly the miscellaneous bucket.
        Mechanism::Other => MechanismClass::Miscellaneous,
    }
}

/// Classifies the top-K flows by total bribe.
///
/// K is capped at the flow count. The result is ordered by rank: bribe
/// volume descending, ties by contract address ascending.
pub fn classify_top_flows(
    dataset: &Dataset,
    flows: &FlowTable,
    forest: &Forest,
    k: usize,
) -> Vec<Assignment> {
    let mut ranked: Vec<(&Address, Wei)> =
        flows.flows.iter().map(|(c, f)| (c, f.total_bribe)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);

    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (contract, total_bribe))| {
            let (mechanism, origin, votes, low_confidence) = decide(dataset, forest, contract);
            Assignment {
                contract: contract.clone(),
                rank: i + 1,
                total_bribe,
                mechanism,
                origin,
                votes,
                low_confidence,
            }
        })
        .collect()
}

fn decide(
    dataset: &Dataset,
    forest: &Forest,
    contract: &Address,
) -> (MechanismClass, Origin, Option<u32>, bool) {
    if let Some(manual) = dataset.labels().mechanism(contract) {
        return (manual_mechanism(manual), Origin::Manual, None, false);
    }
    let vector: FeatureVector = extract_features(dataset, contract)
        .expect("ranked flows come from dataset transactions");
    let prediction = predict(forest, &vector.values);
    if prediction.class == ForestClass::NonAtomic {
        return (
            MechanismClass::NonAtomic,
            Origin::Forest,
            Some(prediction.votes),
            vector.low_confidence,
        );
    }
    // Forest said "other": promote to atomic when MEV labels cover more
    // than half of the contract's transactions.
    let mev_label_freq = vector.by_name("mev_label_freq");
    if mev_label_freq > 0.5 {
        (
            MechanismClass::Atomic,
            Origin::LabelHeuristic,
            Some(prediction.votes),
            vector.low_confidence,
        )
    } else {
        (
            MechanismClass::Miscellaneous,
            Origin::Fallback,
            Some(prediction.votes),
            vector.low_confidence,
        )
    }
}

/// Contracts per mechanism, for report summaries.
pub fn mechanism_counts(assignments: &[Assignment]) -> BTreeMap<MechanismClass, usize> {
    let mut counts = BTreeMap::new();
    for a in assignments {
        *counts.entry(a.mechanism).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{build_flows, Granularity};
    use crate::forest::{DecisionTree, TreeNode, TREE_COUNT};
    use crate::ingest::{load_dataset, DatasetPaths};
    use std::io::Write;
    use std::path::Path;

    fn addr(n: u8) -> String {
        format!("0x{}", hex::encode([n; 20]))
    }

    fn txh(n: u8) -> String {
        format!("0x{}", hex::encode([n; 32]))
    }

    fn write_file(dir: &Path, name: &str, content: &str) {
        let mut f = std::fs::File::create(dir.join(name)).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    /// A forest of constant-vote stumps.
    fn constant_forest(class: ForestClass) -> Forest {
        let counts = match class {
            ForestClass::NonAtomic => [1, 0],
            ForestClass::Other => [0, 1],
        };
        Forest {
            trees: vec![DecisionTree { root: TreeNode::Leaf { counts } }; TREE_COUNT],
            seed: 0,
            validation_accuracy: vec![None; TREE_COUNT],
        }
    }

    /// Contracts by bribe volume: 0x51 (150 wei, manual non_atomic),
    /// 0x52 (120, unlabeled, 80% MEV-labeled txs), 0x53 (90, unlabeled,
    /// no MEV labels), 0x54 (10, manual other).
    fn fixture(dir: &Path) {
        write_file(
            dir,
            "blocks.jsonl",
            &[serde_json::json!({"number": 1, "timestamp": 0, "fee_recipient": addr(0xAA), "bid": "0"})]
                .map(|v| v.to_string())
                .join("\n"),
        );
        let tx = |h: u8, idx: u32, to: u8, tip: u64, label: Option<&str>| {
            let mut v = serde_json::json!({"hash": txh(h), "block": 1, "index": idx, "from": addr(1),
                "to": addr(to), "gas_used": 21000, "priority_tip": tip.to_string(),
                "direct_bribe": "0", "swap_count": 1});
            if let Some(l) = label {
                v["mev_label"] = serde_json::json!(l);
            }
            v.to_string()
        };
        write_file(
            dir,
            "txs.jsonl",
            &[
                tx(1, 0, 0x51, 150, None),
                tx(2, 1, 0x52, 30, Some("sandwich")),
                tx(3, 2, 0x52, 30, Some("atomic_arb")),
                tx(4, 3, 0x52, 30, Some("liquidation")),
                tx(5, 4, 0x52, 30, Some("backrun")),
                tx(6, 5, 0x52, 0, None),
                tx(7, 6, 0x53, 90, None),
                tx(8, 7, 0x54, 10, None),
            ]
            .join("\n"),
        );
        write_file(dir, "swaps.jsonl", "");
        write_file(dir, "mempool.txt", "");
        write_file(dir, "builders.csv", &format!("address,builder_id,name\n{},alpha,Alpha\n", addr(0xAA)));
        write_file(
            dir,
            "labels.csv",
            &format!(
                "contract,mechanism,known_eof\n{},non_atomic,\n{},other,\n",
                addr(0x51),
                addr(0x54)
            ),
        );
    }

    fn load(dir: &Path) -> Dataset {
        load_dataset(&DatasetPaths::in_dir(dir)).unwrap()
    }

    #[test]
    fn ranking_is_bribe_descending_with_address_ties() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load(dir.path());
        let flows = build_flows(&ds, Granularity::Weekly);
        let out = classify_top_flows(&ds, &flows, &constant_forest(ForestClass::Other), 10);
        let order: Vec<&str> = out.iter().map(|a| a.contract.as_str()).collect();
        assert_eq!(
            order,
            vec![addr(0x51), addr(0x52), addr(0x53), addr(0x54)]
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>()
        );
        assert_eq!(out[0].rank, 1);
        assert_eq!(out[0].total_bribe, 150);
    }

    #[test]
    fn k_truncates_and_caps() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load(dir.path());
        let flows = build_flows(&ds, Granularity::Weekly);
        let forest = constant_forest(ForestClass::Other);
        assert_eq!(classify_top_flows(&ds, &flows, &forest, 2).len(), 2);
        assert_eq!(classify_top_flows(&ds, &flows, &forest, 99).len(), 4);
    }

    #[test]
    fn manual_labels_outrank_the_forest() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load(dir.path());
        let flows = build_flows(&ds, Granularity::Weekly);
        // Forest votes "other" for everything, yet 0x51 keeps non_atomic.
        let out = classify_top_flows(&ds, &flows, &constant_forest(ForestClass::Other), 10);
        assert_eq!(out[0].mechanism, MechanismClass::NonAtomic);
        assert_eq!(out[0].origin, Origin::Manual);
        assert_eq!(out[0].votes, None);
        // Manual "other" lands in miscellaneous.
        assert_eq!(out[3].mechanism, MechanismClass::Miscellaneous);
        assert_eq!(out[3].origin, Origin::Manual);
    }

    #[test]
    fn forest_other_with_frequent_mev_labels_is_atomic() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load(dir.path());
        let flows = build_flows(&ds, Granularity::Weekly);
        let out = classify_top_flows(&ds, &flows, &constant_forest(ForestClass::Other), 10);
        // 0x52: 4 of 5 txs MEV-labeled (f5 = 0.8 > 0.5) → atomic.
        assert_eq!(out[1].mechanism, MechanismClass::Atomic);
        assert_eq!(out[1].origin, Origin::LabelHeuristic);
        // 0x53: no labels → miscellaneous.
        assert_eq!(out[2].mechanism, MechanismClass::Miscellaneous);
        assert_eq!(out[2].origin, Origin::Fallback);
        assert_eq!(out[2].votes, Some(7));
    }

    #[test]
    fn forest_non_atomic_vote_is_final() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load(dir.path());
        let flows = build_flows(&ds, Granularity::Weekly);
        let out = classify_top_flows(&ds, &flows, &constant_forest(ForestClass::NonAtomic), 10);
        // Unlabeled contracts all get the forest verdict, even 0x52 whose
        // label frequency would otherwise promote it.
        assert_eq!(out[1].mechanism, MechanismClass::NonAtomic);
        assert_eq!(out[1].origin, Origin::Forest);
        // Manual labels still win.
        assert_eq!(out[3].mechanism, MechanismClass::Miscellaneous);
    }

    #[test]
    fn every_contract_gets_exactly_one_mechanism_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load(dir.path());
        let flows = build_flows(&ds, Granularity::Weekly);
        let forest = constant_forest(ForestClass::Other);
        let a = classify_top_flows(&ds, &flows, &forest, 10);
        let b = classify_top_flows(&ds, &flows, &forest, 10);
        assert_eq!(a, b);
        assert_eq!(a.len(), flows.len());
        let counts = mechanism_counts(&a);
        assert_eq!(counts.values().sum::<usize>(), a.len());
    }
}
