//! Property-based checks of the numeric invariants the analytics rely on:
//! divergence non-negativity, bin partition monotonicity, share bounds,
//! correlation symmetries, and exact power-of-two scale invariance of the
//! tail fit.

use flowscope_core::edr::{edr_bin, EdrBin};
use flowscope_core::exclusivity::{kl_divergence, optimize_threshold};
use flowscope_core::tailfit::{concentration_summary, fit_power_law};
use flowscope_core::units::{eth_to_wei, wei_to_eth};
use proptest::prelude::*;

/// A normalized distribution with full support.
fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1.0f64, n).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|v| v / sum).collect()
    })
}

proptest! {
    // D_KL(P ‖ S) ≥ 0 for any pair of distributions over a common support
    // (Gibbs' inequality), and it vanishes when the inputs are identical.
    #[test]
    fn kl_is_non_negative(n in 2usize..12, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1e-6..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|v| v / sum).collect::<Vec<f64>>()
        };
        let p = draw(&mut rng);
        let s = draw(&mut rng);
        let d = kl_divergence(&p, &s).unwrap();
        // A tiny negative float can only come from summation error on
        // nearly identical inputs; Gibbs' bound leaves no real slack.
        prop_assert!(d >= -1e-12, "negative divergence {d}");
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    // Permuting the components jointly leaves the divergence unchanged up
    // to summation order.
    #[test]
    fn kl_is_permutation_invariant(p in distribution(8), s in distribution(8), rot in 0usize..8) {
        let d = kl_divergence(&p, &s).unwrap();
        let mut p2 = p.clone();
        let mut s2 = s.clone();
        p2.rotate_left(rot);
        s2.rotate_left(rot);
        let d2 = kl_divergence(&p2, &s2).unwrap();
        prop_assert!((d - d2).abs() <= 1e-12 * (1.0 + d.abs()), "{d} vs {d2}");
    }

    // For fixed profit, a larger dependency numerator can never move the
    // observation into a lower bin.
    #[test]
    fn edr_bin_is_monotone_in_the_bribe(
        profit in 1i128..1_000_000_000_000,
        bribe in 0u128..1_000_000_000_000,
        bump in 0u128..1_000_000_000_000,
    ) {
        let before = edr_bin(profit, bribe);
        let after = edr_bin(profit, bribe + bump);
        prop_assert!(after.position() >= before.position());
    }

    // Negative profit always lands in the negative bin regardless of the
    // bribe; zero profit never does.
    #[test]
    fn edr_bin_sign_rules(profit in 1i128..1_000_000_000, bribe in 0u128..1_000_000_000) {
        prop_assert_eq!(edr_bin(-profit, bribe), EdrBin::Negative);
        prop_assert!(edr_bin(0, bribe) != EdrBin::Negative);
    }

    // A share vector built from any positive counts keeps the
    // Herfindahl-Hirschman index inside [1/n, 1].
    #[test]
    fn hhi_stays_in_bounds(counts in prop::collection::vec(1u64..10_000, 1..20)) {
        let total: u64 = counts.iter().sum();
        let hhi: f64 = counts
            .iter()
            .map(|&c| {
                let s = c as f64 / total as f64;
                s * s
            })
            .sum();
        let n = counts.len() as f64;
        prop_assert!(hhi <= 1.0 + 1e-12);
        prop_assert!(hhi >= 1.0 / n - 1e-12);
    }

    // Rescaling every sample by a power of two leaves the fitted exponent
    // and KS distance bit-identical and scales the cutoff exactly.
    #[test]
    fn tail_fit_is_scale_invariant(
        samples in prop::collection::vec(0.1f64..1e6, 15..60),
        k in -8i32..8,
    ) {
        prop_assume!(samples.windows(2).any(|w| w[0] != w[1]));
        let factor = (2.0f64).powi(k);
        let scaled: Vec<f64> = samples.iter().map(|v| v * factor).collect();
        let base = fit_power_law(&samples).unwrap();
        let rescaled = fit_power_law(&scaled).unwrap();
        prop_assert_eq!(base.alpha.to_bits(), rescaled.alpha.to_bits());
        prop_assert_eq!(base.ks_statistic.to_bits(), rescaled.ks_statistic.to_bits());
        prop_assert_eq!((base.x_min * factor).to_bits(), rescaled.x_min.to_bits());
        prop_assert_eq!(base.tail_len, rescaled.tail_len);
    }

    // The top-k bribe fraction is a valid fraction and grows with k.
    #[test]
    fn concentration_fraction_is_monotone(bribes in prop::collection::vec(1u128..1_000_000, 1..50)) {
        let mut last = 0.0;
        for k in 1..=bribes.len() {
            let f = concentration_summary(&bribes, k);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
            prop_assert!(f >= last - 1e-12);
            last = f;
        }
        prop_assert!((concentration_summary(&bribes, bribes.len()) - 1.0).abs() <= 1e-12);
    }

    // Wei survives the float round trip while the mantissa has room.
    #[test]
    fn wei_round_trip_is_exact_below_2_to_50(w in 0u128..(1u128 << 50)) {
        prop_assert_eq!(eth_to_wei(wei_to_eth(w)), w);
    }

    // The sweep's reported optimum really is the best candidate: no other
    // evaluated threshold achieves a higher F1, and the smallest threshold
    // wins ties.
    #[test]
    fn threshold_sweep_reports_the_argmax(
        scores in prop::collection::vec((0.0f64..100.0, any::<bool>()), 3..12),
    ) {
        use flowscope_core::exclusivity::{ExclusivityError, ExclusivityScore};
        use flowscope_core::ingest::{Address, LabelSet};
        use std::collections::BTreeMap;

        let entries: Vec<(ExclusivityScore, bool)> = scores
            .iter()
            .enumerate()
            .map(|(i, &(total, label))| {
                let hex = format!("0x{:040x}", i + 1);
                let score = ExclusivityScore {
                    contract: Address::parse(&hex).unwrap(),
                    total,
                    per_epoch: BTreeMap::new(),
                    active_epochs: 0,
                    avg_kl: 0.0,
                    total_bribe: 0,
                };
                (score, label)
            })
            .collect();
        let mut truth = LabelSet::new();
        for (score, label) in &entries {
            truth.insert(score.contract.clone(), None, Some(*label)).unwrap();
        }
        let only_scores: Vec<ExclusivityScore> = entries.iter().map(|(s, _)| s.clone()).collect();

        match optimize_threshold(&only_scores, &truth) {
            Err(ExclusivityError::DegenerateGroundTruth) => {
                let positives = entries.iter().filter(|(_, l)| *l).count();
                prop_assert!(positives == 0 || positives == entries.len());
            }
            Err(other) => return Err(TestCaseError::fail(format!("unexpected error {other}"))),
            Ok(result) => {
                for point in &result.curve {
                    prop_assert!(point.f1 <= result.f1 + 1e-15);
                    if point.f1 == result.f1 {
                        prop_assert!(result.threshold <= point.threshold);
                    }
                }
                let best = result
                    .curve
                    .iter()
                    .find(|p| p.threshold == result.threshold)
                    .expect("optimum is an evaluated candidate");
                prop_assert_eq!(best.f1, result.f1);
            }
        }
    }
}
