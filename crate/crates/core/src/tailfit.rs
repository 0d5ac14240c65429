//! Continuous power-law tail fitting and concentration summaries for
//! per-flow bribe distributions.
//!
//! For a tail sample x₁ ≤ … ≤ xₙ with x ≥ x_min, the continuous maximum-
//! likelihood exponent is α̂ = 1 + n / Σᵢ ln(xᵢ/x_min), and goodness of fit
//! is the Kolmogorov–Smirnov statistic D against the fitted CDF
//! F(x) = 1 − (x/x_min)^(1−α̂). x_min itself is chosen by evaluating every
//! distinct sample value whose tail keeps at least [`MIN_TAIL`] samples and
//! taking the D-minimizing candidate (smallest x_min on ties).
//!
//! All tail arithmetic is performed on the *ratios* xᵢ ⊘ x_min: the log
//! ratios feed the MLE and are reused for the fitted CDF via
//! exp((1−α̂)·ln r). Because only ratios enter, rescaling every sample by a
//! common factor that is exact in floating point (any power of two; any
//! factor when sample mantissas leave headroom) reproduces α̂ and D to the
//! bit, with x_min scaling along.

use rayon::prelude::*;
use thiserror::Error;

use crate::error::ModuleError;
use crate::units::Wei;

/// Minimum tail size for a candidate x_min.
pub const MIN_TAIL: usize = 10;

/// A fitted power-law tail.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    /// MLE exponent α̂ > 1.
    pub alpha: f64,
    /// Chosen tail cutoff (one of the sample values).
    pub x_min: f64,
    /// KS distance D ∈ [0, 1] between empirical and fitted tail CDFs.
    pub ks_statistic: f64,
    /// Samples at or above x_min.
    pub tail_len: usize,
    /// Candidate cutoffs that admitted a valid fit.
    pub candidates_evaluated: usize,
}

#[derive(Debug, Error)]
pub enum TailfitError {
    #[error(
        "no tail cutoff keeps at least {MIN_TAIL} samples with positive log-spread \
         ({available} samples available)"
    )]
    InsufficientTail { available: usize },
    #[error("samples must be positive finite numbers, found {value}")]
    InvalidSample { value: f64 },
}

impl ModuleError for TailfitError {
    fn module(&self) -> &'static str {
        "tailfit"
    }

    fn code(&self) -> &'static str {
        match self {
            TailfitError::InsufficientTail { .. } => "insufficient_tail",
            TailfitError::InvalidSample { .. } => "invalid_sample",
        }
    }
}

fn validate(samples: &[f64]) -> Result<(), TailfitError> {
    for &v in samples {
        if !(v > 0.0 && v.is_finite()) {
            return Err(TailfitError::InvalidSample { value: v });
        }
    }
    Ok(())
}

/// MLE + KS evaluation of one tail against its cutoff. `None` when the
/// log-spread is degenerate (all tail samples equal).
fn fit_tail(tail: &[f64], x_min: f64) -> Option<(f64, f64)> {
    let ln_ratios: Vec<f64> = tail.iter().map(|&x| (x / x_min).ln()).collect();
    let sum: f64 = ln_ratios.iter().sum();
    if sum == 0.0 {
        return None;
    }
    let n = tail.len() as f64;
    let alpha = 1.0 + n / sum;
    let mut d = 0.0f64;
    for (i, &l) in ln_ratios.iter().enumerate() {
        // Fitted CDF from the stored log ratio, so the KS pass shares the
        // MLE's arithmetic exactly.
        let fitted = 1.0 - ((1.0 - alpha) * l).exp();
        let below = i as f64 / n;
        let above = (i + 1) as f64 / n;
        d = d.max((fitted - below).max(above - fitted));
    }
    Some((alpha, d))
}

/// Fits the tail at a fixed, caller-chosen cutoff.
pub fn fit_with_xmin(samples: &[f64], x_min: f64) -> Result<TailFit, TailfitError> {
    validate(samples)?;
    if !(x_min > 0.0 && x_min.is_finite()) {
        return Err(TailfitError::InvalidSample { value: x_min });
    }
    let mut tail: Vec<f64> = samples.iter().copied().filter(|&v| v >= x_min).collect();
    tail.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    if tail.len() < MIN_TAIL {
        return Err(TailfitError::InsufficientTail { available: samples.len() });
    }
    let (alpha, ks_statistic) = fit_tail(&tail, x_min)
        .ok_or(TailfitError::InsufficientTail { available: samples.len() })?;
    Ok(TailFit {
        alpha,
        x_min,
        ks_statistic,
        tail_len: tail.len(),
        candidates_evaluated: 1,
    })
}

/// Fits a power law with x_min selected by KS minimization over every
/// distinct sample value (ties break to the smallest cutoff).
pub fn fit_power_law(samples: &[f64]) -> Result<TailFit, TailfitError> {
    validate(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    let mut candidates = sorted.clone();
    candidates.dedup();

    // Candidates evaluate independently; the ordered collect keeps the
    // ascending-x_min order so the sequential argmin below is
    // deterministic regardless of thread count.
    let evaluations: Vec<Option<(f64, f64, f64, usize)>> = candidates
        .par_iter()
        .map(|&cutoff| {
            let start = sorted.partition_point(|&v| v < cutoff);
            let tail = &sorted[start..];
            if tail.len() < MIN_TAIL {
                return None;
            }
            fit_tail(tail, cutoff).map(|(alpha, d)| (cutoff, alpha, d, tail.len()))
        })
        .collect();

    let mut best: Option<TailFit> = None;
    let mut evaluated = 0;
    for (cutoff, alpha, d, tail_len) in evaluations.into_iter().flatten() {
        evaluated += 1;
        // Strict improvement keeps the smallest x_min on exact D ties.
        if best.as_ref().map_or(true, |b| d < b.ks_statistic) {
            best = Some(TailFit {
                alpha,
                x_min: cutoff,
                ks_statistic: d,
                tail_len,
                candidates_evaluated: 0,
            });
        }
    }
    match best {
        Some(mut fit) => {
            fit.candidates_evaluated = evaluated;
            Ok(fit)
        }
        None => Err(TailfitError::InsufficientTail { available: samples.len() }),
    }
}

/// Cumulative bribe share of the top-k flows (k capped at the flow count).
pub fn concentration_summary(bribes: &[Wei], k: usize) -> f64 {
    assert!(!bribes.is_empty(), "concentration of an empty set is undefined");
    let mut sorted = bribes.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = k.min(sorted.len());
    let top: Wei = sorted[..k].iter().sum();
    let total: Wei = sorted.iter().sum();
    if total == 0 {
        return 0.0;
    }
    top as f64 / total as f64
}
