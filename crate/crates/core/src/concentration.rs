//! Longitudinal market-structure analytics.
//!
//! Four views of builder-market concentration over time:
//!
//! - **Weekly HHI**: the Herfindahl–Hirschman index Σᵢ s²ᵢ of weekly block
//!   shares (unattributed blocks participate as the `proposer`
//!   pseudo-builder), one point per week with at least one block.
//! - **Builder categories**: `dominant` for a peak weekly share above 0.5,
//!   `influential` for a peak in (0.1, 0.5], `niche` otherwise; assigned to
//!   attributed builders only.
//! - **Phase composition**: trading bribes split by mechanism class inside
//!   configured calendar phases (half-open boundaries; the final end date
//!   is inclusive through its whole day).
//! - **EOF-share correlation**: per builder, the Pearson correlation
//!   between its daily block share and its daily EOF bribe contribution
//!   relative to that day's total trading revenue. Days without trading
//!   revenue are dropped from the paired series and counted.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::error::ModuleError;
use crate::exclusivity::market_series;
use crate::flows::{Epochs, Granularity};
use crate::ingest::{Address, BuilderId, Dataset};
use crate::pipeline::MechanismClass;
use crate::units::Wei;

const SECS_PER_DAY: i64 = 86_400;

/// One week's concentration index.
#[derive(Debug, Clone, PartialEq)]
pub struct HhiPoint {
    /// Week index on the dataset's weekly grid.
    pub week: u32,
    /// Week start (unix seconds, UTC midnight-aligned).
    pub start: i64,
    /// Σᵢ s²ᵢ over that week's builder block shares; in (0, 1].
    pub hhi: f64,
}

/// Builder market-position category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BuilderCategory {
    Niche,
    Influential,
    Dominant,
}

impl BuilderCategory {
    pub fn label(self) -> &'static str {
        match self {
            BuilderCategory::Dominant => "dominant",
            BuilderCategory::Influential => "influential",
            BuilderCategory::Niche => "niche",
        }
    }
}

/// Calendar phases cut by a sorted boundary date list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phases {
    /// Boundary instants (unix seconds). `boundaries[i]..boundaries[i+1]`
    /// is phase i, half-open; the final boundary is extended through the
    /// end of its calendar day.
    boundaries: Vec<i64>,
}

impl Phases {
    /// Builds phases from boundary dates (each taken at UTC midnight).
    /// Needs at least two strictly increasing dates.
    pub fn from_dates(dates: &[NaiveDate]) -> Result<Self, ConcentrationError> {
        if dates.len() < 2 {
            return Err(ConcentrationError::InvalidPhases {
                detail: format!("need at least 2 boundary dates, got {}", dates.len()),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConcentrationError::InvalidPhases {
                detail: "boundary dates must be strictly increasing".into(),
            });
        }
        let boundaries = dates
            .iter()
            .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp())
            .collect();
        Ok(Phases { boundaries })
    }

    /// The default four-phase segmentation of the builder market era.
    pub fn default_phases() -> Self {
        let dates = ["2022-09-01", "2023-01-01", "2023-10-01", "2024-10-01", "2025-08-31"]
            .map(|d| d.parse::<NaiveDate>().expect("valid literal date"));
        Phases::from_dates(&dates).expect("default boundaries are valid")
    }

    /// Number of phases.
    pub fn count(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// `[start, end)` of phase `index`.
    pub fn range(&self, index: usize) -> (i64, i64) {
        let start = self.boundaries[index];
        let end = if index + 1 == self.count() {
            // The last boundary date is part of the study period: include
            // its whole day.
            self.boundaries[index + 1] + SECS_PER_DAY
        } else {
            self.boundaries[index + 1]
        };
        (start, end)
    }

    /// Phase containing `ts`, if any.
    pub fn index_of(&self, ts: i64) -> Option<usize> {
        (0..self.count()).find(|&i| {
            let (start, end) = self.range(i);
            ts >= start && ts < end
        })
    }
}

/// Bribe totals and fractions of one phase, split by mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseComposition {
    pub index: usize,
    pub start: i64,
    pub end: i64,
    /// Integer-wei totals per mechanism (all four classes present).
    pub totals: BTreeMap<MechanismClass, Wei>,
    /// `totals / phase_total` per mechanism; sums to 1 ± 1e-9.
    pub fractions: BTreeMap<MechanismClass, f64>,
    pub total: Wei,
}

/// Paired-series correlation result for one builder.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub builder: BuilderId,
    /// Pearson r over the paired daily series.
    pub r: f64,
    /// Days entering the paired series (blocks present, revenue > 0).
    pub paired_days: usize,
    /// Days with blocks but zero trading revenue, dropped from the series.
    pub dropped_days: usize,
    /// Paired days on which the builder produced at least one block.
    pub active_days: usize,
}

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("invalid phase boundaries: {detail}")]
    InvalidPhases { detail: String },
    #[error("phase {index} contains no flow bribes")]
    EmptyPhase { index: usize },
    #[error("correlation series for builder {builder} is constant; r is undefined")]
    ConstantSeries { builder: BuilderId },
    #[error("builder {builder} is active on {found} day(s); at least {required} required")]
    InsufficientDays { builder: BuilderId, found: usize, required: usize },
}

impl ModuleError for ConcentrationError {
    fn module(&self) -> &'static str {
        "concentration"
    }

    fn code(&self) -> &'static str {
        match self {
            ConcentrationError::InvalidPhases { .. } => "invalid_phases",
            ConcentrationError::EmptyPhase { .. } => "empty_phase",
            ConcentrationError::ConstantSeries { .. } => "constant_series",
            ConcentrationError::InsufficientDays { .. } => "insufficient_days",
        }
    }
}

/// Weekly HHI over every week with at least one block.
pub fn hhi_series(dataset: &Dataset) -> Vec<HhiPoint> {
    let epochs = Epochs::for_dataset(dataset, Granularity::Weekly);
    market_series(dataset, epochs)
        .into_iter()
        .map(|(week, market)| HhiPoint {
            week,
            start: market.epoch.start,
            hhi: market.shares.values().map(|s| s * s).sum(),
        })
        .collect()
}

/// Category for a peak weekly share.
pub fn category_for_peak(peak: f64) -> BuilderCategory {
    if peak > 0.5 {
        BuilderCategory::Dominant
    } else if peak > 0.1 {
        BuilderCategory::Influential
    } else {
        BuilderCategory::Niche
    }
}

/// Categorizes every attributed builder by its peak weekly share. The
/// `proposer` pseudo-builder aggregates unknown parties and gets no
/// category.
pub fn categorize_builders(dataset: &Dataset) -> BTreeMap<BuilderId, BuilderCategory> {
    let epochs = Epochs::for_dataset(dataset, Granularity::Weekly);
    let markets = market_series(dataset, epochs);
    dataset
        .registry()
        .builder_ids()
        .map(|builder| {
            let peak = markets
                .values()
                .filter_map(|m| m.shares.get(builder).copied())
                .fold(0.0f64, f64::max);
            (builder.clone(), category_for_peak(peak))
        })
        .collect()
}

/// Splits trading bribes into phases by mechanism.
///
/// `mechanisms` usually comes from the classification pipeline; ranked
/// contracts missing from it fall into `miscellaneous`. Transactions
/// outside every phase are ignored. Every phase must receive at least one
/// wei of bribes.
pub fn phase_composition(
    dataset: &Dataset,
    mechanisms: &BTreeMap<Address, MechanismClass>,
    phases: &Phases,
) -> Result<Vec<PhaseComposition>, ConcentrationError> {
    let mut totals: Vec<BTreeMap<MechanismClass, Wei>> = (0..phases.count())
        .map(|_| MechanismClass::ALL.iter().map(|&m| (m, 0)).collect())
        .collect();
    for tx in dataset.txs() {
        if !tx.is_swap() {
            continue;
        }
        let contribution = tx.revenue_contribution();
        if contribution == 0 {
            continue;
        }
        let ts = dataset
            .block_by_number(tx.block)
            .expect("loaded txs reference loaded blocks")
            .timestamp;
        let Some(phase) = phases.index_of(ts) else { continue };
        let mechanism = mechanisms
            .get(&tx.to)
            .copied()
            .unwrap_or(MechanismClass::Miscellaneous);
        *totals[phase].get_mut(&mechanism).expect("all classes present") += contribution;
    }

    totals
        .into_iter()
        .enumerate()
        .map(|(index, by_mechanism)| {
            let total: Wei = by_mechanism.values().sum();
            if total == 0 {
                return Err(ConcentrationError::EmptyPhase { index });
            }
            let fractions = by_mechanism
                .iter()
                .map(|(&m, &wei)| (m, wei as f64 / total as f64))
                .collect();
            let (start, end) = phases.range(index);
            Ok(PhaseComposition { index, start, end, totals: by_mechanism, fractions, total })
        })
        .collect()
}

/// Two-pass Pearson correlation of two equal-length series.
///
/// Errors with `ConstantSeries` (attributed to no builder) when either
/// series has zero variance; callers with builder context re-attribute.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, ConcentrationError> {
    assert_eq!(xs.len(), ys.len(), "paired series must be equal length");
    assert!(!xs.is_empty(), "paired series must be nonempty");
    let n = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / n;
    let mean_y: f64 = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(ConcentrationError::ConstantSeries { builder: BuilderId::proposer() });
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Minimum paired days with builder activity for a defined correlation.
pub const MIN_ACTIVE_DAYS: usize = 3;

/// Correlates one builder's daily block share with its daily EOF bribe
/// contribution (relative to all builders' trading revenue that day).
pub fn eof_share_correlation(
    dataset: &Dataset,
    eofs: &std::collections::BTreeSet<Address>,
    builder: &BuilderId,
) -> Result<CorrelationReport, ConcentrationError> {
    struct DayAgg {
        total_blocks: u64,
        builder_blocks: u64,
        trading_revenue: Wei,
        builder_eof: Wei,
    }
    let days = Epochs::daily();
    let mut agg: BTreeMap<u32, DayAgg> = BTreeMap::new();
    for block in dataset.blocks() {
        let day = agg.entry(days.index_of(block.timestamp)).or_insert(DayAgg {
            total_blocks: 0,
            builder_blocks: 0,
            trading_revenue: 0,
            builder_eof: 0,
        });
        day.total_blocks += 1;
        let ours = block.builder == *builder;
        day.builder_blocks += ours as u64;
        for tx in dataset.txs_in_block(block.number) {
            if !tx.is_swap() {
                continue;
            }
            day.trading_revenue += tx.revenue_contribution();
            if ours && eofs.contains(&tx.to) {
                day.builder_eof += tx.revenue_contribution();
            }
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped_days = 0;
    let mut active_days = 0;
    for day in agg.values() {
        if day.trading_revenue == 0 {
            dropped_days += 1;
            continue;
        }
        active_days += (day.builder_blocks > 0) as usize;
        xs.push(day.builder_blocks as f64 / day.total_blocks as f64);
        ys.push(day.builder_eof as f64 / day.trading_revenue as f64);
    }
    if active_days < MIN_ACTIVE_DAYS {
        return Err(ConcentrationError::InsufficientDays {
            builder: builder.clone(),
            found: active_days,
            required: MIN_ACTIVE_DAYS,
        });
    }
    let r = pearson(&xs, &ys).map_err(|_| ConcentrationError::ConstantSeries {
        builder: builder.clone(),
    })?;
    Ok(CorrelationReport {
        builder: builder.clone(),
        r,
        paired_days: xs.len(),
        dropped_days,
        active_days,
    })
}
