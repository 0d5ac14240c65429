//! Exclusivity scoring of order flows.
//!
//! For epoch t, the market distribution S_t assigns each active builder its
//! block share s_{t,i} = Q_{t,i}/Q_t. A flow j's bribe distribution in that
//! epoch is P_{t,j}, the fraction of its epoch bribe R_{t,j} paid to each
//! builder. The divergence of routing from the market baseline,
//!
//! ```text
//! D_KL(P_{t,j} ‖ S_t) = Σ_i p_{t,j→i} · ln(p_{t,j→i} / s_{t,i})
//! ```
//!
//! is accumulated into the exclusivity score
//!
//! ```text
//! E(j) = Σ_t D_KL(P_{t,j} ‖ S_t) · √(R_{t,j} in ETH),
//! ```
//!
//! so that persistent, high-volume routing bias scores far above both
//! proportional routing (KL = 0 regardless of volume) and noisy low-volume
//! flows. Logarithms are natural (scores are in nats), and the volume weight
//! uses ETH units under the square root.
//!
//! A threshold τ over E separates exclusive order flows from public ones;
//! [`optimize_threshold`] recovers the F1-optimal τ from ground-truth labels
//! by a complete, deterministic sweep.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::error::ModuleError;
use crate::flows::{Epoch, Epochs, OrderFlow};
use crate::ingest::{Address, BuilderId, Dataset, LabelSet};
use crate::units::{wei_to_eth, Wei};

/// Builder block shares of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDistribution {
    pub epoch: Epoch,
    /// Q_t: total blocks in the epoch.
    pub total_blocks: u64,
    /// Q_{t,i}: blocks per builder (only builders with ≥1 block appear).
    pub counts: BTreeMap<BuilderId, u64>,
    /// s_{t,i} = Q_{t,i}/Q_t; sums to 1 within float tolerance.
    pub shares: BTreeMap<BuilderId, f64>,
}

/// Exclusivity score of one flow, with the per-epoch decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusivityScore {
    pub contract: Address,
    /// E(j), the volume-weighted divergence total.
    pub total: f64,
    /// Per active epoch: the KL term and its √ETH weight.
    pub per_epoch: BTreeMap<u32, EpochTerm>,
    /// Number of epochs with R_{t,j} > 0.
    pub active_epochs: u32,
    /// Unweighted mean of the per-epoch KL terms over active epochs.
    pub avg_kl: f64,
    /// Σ_t R_{t,j} in wei.
    pub total_bribe: Wei,
}

/// One epoch's contribution to a flow's score.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTerm {
    /// D_KL(P_{t,j} ‖ S_t) in nats.
    pub kl: f64,
    /// √(R_{t,j} in ETH).
    pub weight: f64,
    /// R_{t,j} in wei.
    pub bribe: Wei,
}

/// Result of the F1 threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    /// F1-optimal threshold (smallest candidate on ties).
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Every candidate cut evaluated, ascending by threshold.
    pub curve: Vec<SweepPoint>,
}

/// One evaluated candidate threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Error)]
pub enum ExclusivityError {
    #[error("epoch {index} contains no blocks")]
    EmptyEpoch { index: u32 },
    #[error("distribution support violation: {component} has probability mass but zero market share")]
    SupportViolation { component: String },
    #[error("ground truth must contain at least one positive and one negative contract")]
    DegenerateGroundTruth,
}

impl ModuleError for ExclusivityError {
    fn module(&self) -> &'static str {
        "exclusivity"
    }

    fn code(&self) -> &'static str {
        match self {
            ExclusivityError::EmptyEpoch { .. } => "empty_epoch",
            ExclusivityError::SupportViolation { .. } => "support_violation",
            ExclusivityError::DegenerateGroundTruth => "degenerate_ground_truth",
        }
    }
}

/// Computes the builder share distribution of one epoch, including the
/// `proposer` pseudo-builder for unattributed blocks.
pub fn market_distribution(
    dataset: &Dataset,
    epoch: Epoch,
) -> Result<MarketDistribution, ExclusivityError> {
    let mut counts: BTreeMap<BuilderId, u64> = BTreeMap::new();
    for block in dataset.blocks() {
        if block.timestamp >= epoch.start && block.timestamp < epoch.end {
            *counts.entry(block.builder.clone()).or_insert(0) += 1;
        }
    }
    finish_market(epoch, counts)
}

/// Computes market distributions for every epoch that contains at least one
/// block, in a single pass over the dataset.
pub fn market_series(dataset: &Dataset, epochs: Epochs) -> BTreeMap<u32, MarketDistribution> {
    let mut counts: BTreeMap<u32, BTreeMap<BuilderId, u64>> = BTreeMap::new();
    for block in dataset.blocks() {
        let idx = epochs.index_of(block.timestamp);
        *counts.entry(idx).or_default().entry(block.builder.clone()).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(idx, c)| {
            let market = finish_market(epochs.epoch(idx), c)
                .expect("epochs collected from blocks are nonempty");
            (idx, market)
        })
        .collect()
}

fn finish_market(
    epoch: Epoch,
    counts: BTreeMap<BuilderId, u64>,
) -> Result<MarketDistribution, ExclusivityError> {
    let total_blocks: u64 = counts.values().sum();
    if total_blocks == 0 {
        return Err(ExclusivityError::EmptyEpoch { index: epoch.index });
    }
    let shares = counts
        .iter()
        .map(|(b, &q)| (b.clone(), q as f64 / total_blocks as f64))
        .collect();
    Ok(MarketDistribution { epoch, total_blocks, counts, shares })
}

/// Kullback–Leibler divergence Σ p_i ln(p_i/s_i) in nats over two aligned
/// distributions, with the 0·ln(0/s) = 0 convention.
///
/// `p` must sum to 1 and its support must lie inside the support of `s`;
/// mass on a zero-share component signals corrupted input and errors rather
/// than being smoothed away.
pub fn kl_divergence(p: &[f64], s: &[f64]) -> Result<f64, ExclusivityError> {
    assert_eq!(p.len(), s.len(), "distributions must be aligned");
    let mut total = 0.0;
    for (i, (&pi, &si)) in p.iter().zip(s).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if si == 0.0 {
            return Err(ExclusivityError::SupportViolation { component: format!("index {i}") });
        }
        total += pi * (pi / si).ln();
    }
    Ok(total)
}

/// Scores one flow against the per-epoch market distributions.
///
/// Epochs with R_{t,j} = 0 contribute nothing; by construction the flow
/// matrix only stores positive cells, so every stored epoch is active.
pub fn exclusivity_score(
    flow: &OrderFlow,
    markets: &BTreeMap<u32, MarketDistribution>,
) -> Result<ExclusivityScore, ExclusivityError> {
    let mut per_epoch = BTreeMap::new();
    let mut total = 0.0;
    let mut kl_sum = 0.0;
    for (&epoch, row) in &flow.cells {
        let bribe: Wei = row.values().copied().sum();
        if bribe == 0 {
            continue;
        }
        let market = markets
            .get(&epoch)
            .ok_or(ExclusivityError::EmptyEpoch { index: epoch })?;
        // Align P and S over the market's builder order. Builders that the
        // flow never paid carry p = 0 and drop out of the sum.
        let mut p = Vec::with_capacity(market.shares.len());
        let mut s = Vec::with_capacity(market.shares.len());
        for (builder, &share) in &market.shares {
            let paid = row.get(builder).copied().unwrap_or(0);
            p.push(paid as f64 / bribe as f64);
            s.push(share);
        }
        // Mass on a builder outside the epoch's market support is
        // impossible for well-formed flows (bribes are realized in the
        // recipient's own blocks) — catch it rather than smooth it.
        for builder in row.keys() {
            if !market.shares.contains_key(builder) {
                return Err(ExclusivityError::SupportViolation {
                    component: format!("builder {builder} in epoch {epoch}"),
                });
            }
        }
        let kl = kl_divergence(&p, &s)?;
        let weight = wei_to_eth(bribe).sqrt();
        total += kl * weight;
        kl_sum += kl;
        per_epoch.insert(epoch, EpochTerm { kl, weight, bribe });
    }
    let active_epochs = per_epoch.len() as u32;
    let avg_kl = if active_epochs > 0 { kl_sum / active_epochs as f64 } else { 0.0 };
    Ok(ExclusivityScore {
        contract: flow.contract.clone(),
        total,
        per_epoch,
        active_epochs,
        avg_kl,
        total_bribe: flow.total_bribe,
    })
}

/// Sweeps candidate thresholds over the scored contracts and returns the
/// F1-optimal cut against the `known_eof` ground truth.
///
/// Candidates are the midpoints between consecutive distinct score values
/// plus one cut below the minimum (everything positive) and one at the
/// maximum (nothing positive), which makes the sweep complete: every
/// achievable confusion matrix is evaluated. Ties in F1 resolve to the
/// smallest threshold. Contracts without a ground-truth row are ignored.
pub fn optimize_threshold(
    scores: &[ExclusivityScore],
    ground_truth: &LabelSet,
) -> Result<ThresholdResult, ExclusivityError> {
    let mut labeled: Vec<(f64, bool)> = scores
        .iter()
        .filter_map(|sc| ground_truth.known_eof(&sc.contract).map(|pos| (sc.total, pos)))
        .collect();
    let positives = labeled.iter().filter(|(_, pos)| *pos).count();
    let negatives = labeled.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ExclusivityError::DegenerateGroundTruth);
    }
    labeled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite"));

    let mut distinct: Vec<f64> = labeled.iter().map(|(v, _)| *v).collect();
    distinct.dedup();
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(distinct[0] - 1.0);
    for pair in distinct.windows(2) {
        candidates.push(pair[0] + (pair[1] - pair[0]) / 2.0);
    }
    candidates.push(*distinct.last().expect("nonempty"));

    let mut curve = Vec::with_capacity(candidates.len());
    let mut best: Option<SweepPoint> = None;
    for &tau in &candidates {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for &(score, pos) in &labeled {
            let predicted = score > tau;
            match (predicted, pos) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = ratio_or_zero(tp, tp + fp);
        let recall = ratio_or_zero(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let point = SweepPoint { threshold: tau, precision, recall, f1 };
        // Strictly-greater keeps the smallest threshold on ties because
        // candidates are visited in ascending order.
        if best.as_ref().map_or(true, |b| point.f1 > b.f1) {
            best = Some(point.clone());
        }
        curve.push(point);
    }
    let best = best.expect("candidate list is nonempty");
    Ok(ThresholdResult {
        threshold: best.threshold,
        precision: best.precision,
        recall: best.recall,
        f1: best.f1,
        curve,
    })
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The EOF set at threshold τ: contracts with E(j) strictly above τ.
pub fn classify_eof(scores: &[ExclusivityScore], tau: f64) -> BTreeSet<Address> {
    assert!(tau.is_finite(), "threshold must be finite");
    scores
        .iter()
        .filter(|sc| sc.total > tau)
        .map(|sc| sc.contract.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::Granularity;
    use crate::units::WEI_PER_ETH;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bid(name: &str) -> BuilderId {
        BuilderId::parse(name).unwrap()
    }

    fn contract(n: u8) -> Address {
        Address::parse(&format!("0x{}", hex::encode([n; 20]))).unwrap()
    }

    fn epoch0() -> Epoch {
        Epoch { index: 0, start: 0, end: 604_800, granularity: Granularity::Weekly }
    }

    fn market_of(pairs: &[(&str, u64)]) -> MarketDistribution {
        let counts: BTreeMap<BuilderId, u64> =
            pairs.iter().map(|(n, q)| (bid(n), *q)).collect();
        super::finish_market(epoch0(), counts).unwrap()
    }

    fn flow_with_cells(cells: &[(u32, &str, Wei)]) -> OrderFlow {
        let mut flow = OrderFlow {
            contract: contract(1),
            tx_count: cells.len() as u64,
            total_bribe: 0,
            cells: BTreeMap::new(),
            pool_usd: BTreeMap::new(),
        };
        for &(epoch, builder, wei) in cells {
            *flow.cells.entry(epoch).or_default().entry(bid(builder)).or_insert(0) += wei;
            flow.total_bribe += wei;
        }
        flow
    }

    fn score_of(n: u8, total: f64) -> ExclusivityScore {
        ExclusivityScore {
            contract: contract(n),
            total,
            per_epoch: BTreeMap::new(),
            active_epochs: 1,
            avg_kl: 0.0,
            total_bribe: 0,
        }
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = [0.25, 0.25, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_closed_form_ln2() {
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d - std::f64::consts::LN_2).abs() < 1e-15, "got {d}");
    }

    #[test]
    fn kl_support_violation() {
        let err = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert_eq!(err.code(), "support_violation");
    }

    #[test]
    fn kl_matches_compensated_oracle_on_random_pairs() {
        // Independent high-precision route: Neumaier-compensated summation
        // of the same per-component terms.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let (ps, ss) = (p.iter().sum::<f64>(), s.iter().sum::<f64>());
            p.iter_mut().for_each(|v| *v /= ps);
            s.iter_mut().for_each(|v| *v /= ss);

            let got = kl_divergence(&p, &s).unwrap();

            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for i in 0..n {
                if p[i] == 0.0 {
                    continue;
                }
                let term = p[i] * (p[i] / s[i]).ln();
                let t = sum + term;
                comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
                sum = t;
            }
            let oracle = sum + comp;
            assert!((got - oracle).abs() < 1e-12, "got {got}, oracle {oracle}");
        }
    }

    #[test]
    fn market_distribution_counts_blocks() {
        // Trivial shares: one builder takes all blocks → share 1.0.
        let m = market_of(&[("alpha", 10)]);
        assert_eq!(m.total_blocks, 10);
        assert_eq!(m.shares[&bid("alpha")], 1.0);

        let m = market_of(&[("alpha", 5), ("beta", 5)]);
        assert_eq!(m.shares[&bid("alpha")], 0.5);
        assert_eq!(m.shares[&bid("beta")], 0.5);
        let sum: f64 = m.shares.values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_epoch_errors() {
        let err = super::finish_market(epoch0(), BTreeMap::new()).unwrap_err();
        assert_eq!(err.code(), "empty_epoch");
    }

    #[test]
    fn score_closed_form_4_eth_half_share() {
        // Single epoch, 4 ETH all to a builder holding half the blocks:
        // E = ln(2) · √4 = 2·ln 2.
        let flow = flow_with_cells(&[(0, "alpha", 4 * WEI_PER_ETH)]);
        let markets = BTreeMap::from([(0u32, market_of(&[("alpha", 5), ("beta", 5)]))]);
        let score = exclusivity_score(&flow, &markets).unwrap();
        let expected = 2.0 * std::f64::consts::LN_2;
        assert!((score.total - expected).abs() < 1e-12, "got {}", score.total);
        assert_eq!(score.active_epochs, 1);
        assert!((score.avg_kl - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn proportional_routing_scores_exactly_zero() {
        // Bribes proportional to block counts (cell = c·Q_i with a common
        // c) make P and S bitwise equal, so every KL term is exactly 0.
        let markets = BTreeMap::from([(0u32, market_of(&[("alpha", 7), ("beta", 3)]))]);
        let c: Wei = 123_456_789;
        let flow = flow_with_cells(&[(0, "alpha", 7 * c), (0, "beta", 3 * c)]);
        let score = exclusivity_score(&flow, &markets).unwrap();
        assert_eq!(score.total, 0.0);
        assert_eq!(score.per_epoch[&0].kl, 0.0);
    }

    #[test]
    fn weight_scaling_by_k_squared() {
        // Multiplying one epoch's R by k² (k a power of two) scales the
        // epoch contribution by exactly k.
        let markets = BTreeMap::from([(0u32, market_of(&[("alpha", 1), ("beta", 1)]))]);
        let base = flow_with_cells(&[(0, "alpha", WEI_PER_ETH)]);
        let scaled = flow_with_cells(&[(0, "alpha", 16 * WEI_PER_ETH)]);
        let e_base = exclusivity_score(&base, &markets).unwrap().total;
        let e_scaled = exclusivity_score(&scaled, &markets).unwrap().total;
        assert_eq!(e_scaled, 4.0 * e_base);
    }

    #[test]
    fn permutation_equivariance() {
        // Relabeling builders consistently in P and S leaves E unchanged.
        let markets_ab = BTreeMap::from([(0u32, market_of(&[("alpha", 8), ("beta", 2)]))]);
        let markets_ba = BTreeMap::from([(0u32, market_of(&[("beta", 8), ("alpha", 2)]))]);
        let flow_ab = flow_with_cells(&[(0, "alpha", 5 * WEI_PER_ETH), (0, "beta", WEI_PER_ETH)]);
        let flow_ba = flow_with_cells(&[(0, "beta", 5 * WEI_PER_ETH), (0, "alpha", WEI_PER_ETH)]);
        let a = exclusivity_score(&flow_ab, &markets_ab).unwrap().total;
        let b = exclusivity_score(&flow_ba, &markets_ba).unwrap().total;
        assert_eq!(a, b);
    }

    #[test]
    fn flow_paying_inactive_builder_is_support_violation() {
        let markets = BTreeMap::from([(0u32, market_of(&[("alpha", 10)]))]);
        let flow = flow_with_cells(&[(0, "ghost", WEI_PER_ETH)]);
        let err = exclusivity_score(&flow, &markets).unwrap_err();
        assert_eq!(err.code(), "support_violation");
    }

    #[test]
    fn threshold_sweep_separable() {
        // Scores {neg: 1, 2; pos: 10, 20} → the only F1 = 1 candidate is
        // the midpoint 6, inside (2, 10].
        let scores = vec![
            score_of(1, 1.0),
            score_of(2, 2.0),
            score_of(3, 10.0),
            score_of(4, 20.0),
        ];
        let mut truth = LabelSet::new();
        truth.insert(contract(1), None, Some(false)).unwrap();
        truth.insert(contract(2), None, Some(false)).unwrap();
        truth.insert(contract(3), None, Some(true)).unwrap();
        truth.insert(contract(4), None, Some(true)).unwrap();
        let result = optimize_threshold(&scores, &truth).unwrap();
        assert_eq!(result.threshold, 6.0);
        assert_eq!(result.f1, 1.0);
        assert_eq!(result.precision, 1.0);
        assert_eq!(result.recall, 1.0);
        assert_eq!(result.curve.len(), 5); // min−1, 3 midpoints, max
    }

    #[test]
    fn threshold_sweep_matches_brute_force_oracle() {
        // Exhaustive oracle: evaluate F1 at *every* candidate and pick the
        // best by (f1 desc, threshold asc) — recomputed independently here.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(4..30);
            let scores: Vec<ExclusivityScore> = (0..n)
                .map(|i| score_of(i as u8, (rng.random_range(0..40) as f64) / 4.0))
                .collect();
            let mut truth = LabelSet::new();
            let mut pos = 0;
            for (i, _) in scores.iter().enumerate() {
                let is_pos = rng.random_range(0..2) == 1;
                pos += is_pos as usize;
                truth.insert(contract(i as u8), None, Some(is_pos)).unwrap();
            }
            if pos == 0 || pos == scores.len() {
                continue;
            }
            let result = optimize_threshold(&scores, &truth).unwrap();

            let f1_at = |tau: f64| {
                let (mut tp, mut fp, mut fn_) = (0f64, 0f64, 0f64);
                for sc in &scores {
                    let is_pos = truth.known_eof(&sc.contract).unwrap();
                    match (sc.total > tau, is_pos) {
                        (true, true) => tp += 1.0,
                        (true, false) => fp += 1.0,
                        (false, true) => fn_ += 1.0,
                        _ => {}
                    }
                }
                if tp == 0.0 {
                    0.0
                } else {
                    let p = tp / (tp + fp);
                    let r = tp / (tp + fn_);
                    2.0 * p * r / (p + r)
                }
            };
            for point in &result.curve {
                assert!((point.f1 - f1_at(point.threshold)).abs() < 1e-12);
                assert!(result.f1 >= point.f1);
                if point.f1 == result.f1 {
                    assert!(result.threshold <= point.threshold);
                }
            }
        }
    }

    #[test]
    fn degenerate_ground_truth_rejected() {
        let scores = vec![score_of(1, 1.0), score_of(2, 2.0)];
        let mut truth = LabelSet::new();
        truth.insert(contract(1), None, Some(true)).unwrap();
        truth.insert(contract(2), None, Some(true)).unwrap();
        let err = optimize_threshold(&scores, &truth).unwrap_err();
        assert_eq!(err.code(), "degenerate_ground_truth");
    }

    #[test]
    fn classify_eof_is_strict() {
        let scores = vec![score_of(1, 108.03), score_of(2, 108.030001)];
        let eofs = classify_eof(&scores, 108.03);
        assert!(!eofs.contains(&contract(1))); // E = τ exactly → not EOF
        assert!(eofs.contains(&contract(2))); // E = τ + ε → EOF
    }

    #[test]
    fn extreme_scores_clear_any_moderate_cutoff() {
        // Scores orders of magnitude above the threshold classify
        // positively regardless of the exact cut.
        let scores = vec![score_of(9, 2982.85)];
        let eofs = classify_eof(&scores, 108.03);
        assert_eq!(eofs.len(), 1);
    }
}
