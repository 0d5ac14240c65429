//! Order-flow construction.
//!
//! An order flow is the set of all swap transactions (swap_count > 0) that
//! invoke the same destination contract. For every flow this module builds
//! the per-epoch, per-builder bribe matrix R_{t,j→i}: transaction t's
//! max(d_t, 0) is attributed to the builder of its containing block, in the
//! epoch of that block's timestamp. The matrix is what the exclusivity,
//! dependency, and concentration modules consume.
//!
//! Epochs partition time into fixed windows: weekly epochs are 7-day UTC
//! windows anchored at a configurable epoch zero (by default the dataset's
//! first block timestamp truncated to 00:00 UTC); daily epochs are UTC
//! calendar days.

use std::collections::BTreeMap;

use crate::ingest::{Address, BuilderId, Dataset};
use crate::units::Wei;

const SECS_PER_DAY: i64 = 86_400;
const SECS_PER_WEEK: i64 = 7 * SECS_PER_DAY;

/// Epoch granularity for bribe binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Weekly,
    Daily,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Weekly => "weekly",
            Granularity::Daily => "daily",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "weekly" => Ok(Granularity::Weekly),
            "daily" => Ok(Granularity::Daily),
            _ => Err(format!("unknown granularity {s:?} (expected weekly or daily)")),
        }
    }
}

/// A fixed, gap-free partition of the time axis into equal windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epochs {
    granularity: Granularity,
    /// Start of epoch 0, UTC seconds, midnight-aligned.
    anchor: i64,
    span: i64,
}

/// One concrete epoch window (half-open `[start, end)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch {
    pub index: u32,
    pub start: i64,
    pub end: i64,
    pub granularity: Granularity,
}

/// Truncates a UTC timestamp down to 00:00 UTC of its calendar day.
pub fn truncate_to_utc_midnight(ts: i64) -> i64 {
    ts - ts.rem_euclid(SECS_PER_DAY)
}

impl Epochs {
    /// Weekly epochs anchored at an explicit midnight-aligned epoch zero.
    pub fn weekly(anchor: i64) -> Self {
        let anchor = truncate_to_utc_midnight(anchor);
        Epochs { granularity: Granularity::Weekly, anchor, span: SECS_PER_WEEK }
    }

    /// Daily epochs: UTC calendar days (anchor is the Unix epoch, itself a
    /// UTC midnight).
    pub fn daily() -> Self {
        Epochs { granularity: Granularity::Daily, anchor: 0, span: SECS_PER_DAY }
    }

    /// The conventional grid for a dataset: weekly windows anchored at the
    /// first block's day, or calendar days.
    pub fn for_dataset(dataset: &Dataset, granularity: Granularity) -> Self {
        match granularity {
            Granularity::Weekly => {
                let first = dataset.blocks().first().map(|b| b.timestamp).unwrap_or(0);
                Epochs::weekly(first)
            }
            Granularity::Daily => Epochs::daily(),
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn anchor(&self) -> i64 {
        self.anchor
    }

    /// Epoch index of a timestamp. Timestamps always fall in exactly one
    /// epoch; anything before the anchor would indicate a misconfigured
    /// anchor, so it is rejected loudly.
    pub fn index_of(&self, ts: i64) -> u32 {
        assert!(
            ts >= self.anchor,
            "timestamp {ts} precedes epoch anchor {}",
            self.anchor
        );
        ((ts - self.anchor) / self.span) as u32
    }

    /// The concrete window of epoch `index`.
    pub fn epoch(&self, index: u32) -> Epoch {
        let start = self.anchor + index as i64 * self.span;
        Epoch {
            index,
            start,
            end: start + self.span,
            granularity: self.granularity,
        }
    }
}

/// One order flow: every swap transaction invoking `contract`, with the
/// bribe matrix over (epoch × builder) and per-pool USD volume.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFlow {
    pub contract: Address,
    /// Number of constituent swap transactions (including zero-bribe ones).
    pub tx_count: u64,
    /// Σ_t R_{t,j} in wei.
    pub total_bribe: Wei,
    /// R_{t,j→i}: epoch → builder → wei. Only positive cells are stored,
    /// so every recorded builder really received bribes in that epoch.
    pub cells: BTreeMap<u32, BTreeMap<BuilderId, Wei>>,
    /// Cumulative USD volume per pool the flow trades on.
    pub pool_usd: BTreeMap<Address, f64>,
}

impl OrderFlow {
    /// R_{t,j}: the flow's total bribe in one epoch.
    pub fn epoch_bribe(&self, epoch: u32) -> Wei {
        self.cells
            .get(&epoch)
            .map(|row| row.values().copied().sum())
            .unwrap_or(0)
    }

    /// Epochs with R_{t,j} > 0, ascending.
    pub fn active_epochs(&self) -> impl Iterator<Item = u32> + '_ {
        self.cells.keys().copied()
    }
}

/// All order flows of a dataset under one epoch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    pub epochs: Epochs,
    /// Keyed by contract address (ascending), which fixes output order.
    pub flows: BTreeMap<Address, OrderFlow>,
}

impl FlowTable {
    /// Σ over flows of total_bribe. Conservation fixes this to equal
    /// [`crate::revenue::trading_revenue_total`].
    pub fn total_bribes(&self) -> Wei {
        self.flows.values().map(|f| f.total_bribe).sum()
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// Groups the dataset's swap transactions into order flows and fills the
/// per-epoch, per-builder bribe matrices.
pub fn build_flows(dataset: &Dataset, granularity: Granularity) -> FlowTable {
    build_flows_on(dataset, Epochs::for_dataset(dataset, granularity))
}

/// Same as [`build_flows`] but on an explicit epoch grid (used by tests and
/// by callers that need a shared anchor across datasets).
pub fn build_flows_on(dataset: &Dataset, epochs: Epochs) -> FlowTable {
    let mut flows: BTreeMap<Address, OrderFlow> = BTreeMap::new();
    for (i, tx) in dataset.txs().iter().enumerate() {
        if !tx.is_swap() {
            continue;
        }
        let flow = flows.entry(tx.to.clone()).or_insert_with(|| OrderFlow {
            contract: tx.to.clone(),
            tx_count: 0,
            total_bribe: 0,
            cells: BTreeMap::new(),
            pool_usd: BTreeMap::new(),
        });
        flow.tx_count += 1;
        let contribution = tx.revenue_contribution();
        if contribution > 0 {
            let block = dataset
                .block_by_number(tx.block)
                .expect("ingest guarantees tx→block integrity");
            let epoch = epochs.index_of(block.timestamp);
            *flow
                .cells
                .entry(epoch)
                .or_default()
                .entry(block.builder.clone())
                .or_insert(0) += contribution;
            flow.total_bribe += contribution;
        }
        for swap in dataset.swaps_of_tx(i) {
            *flow.pool_usd.entry(swap.pool.clone()).or_insert(0.0) += swap.amount_usd;
        }
    }
    FlowTable { epochs, flows }
}

/// Pool-volume summary of one flow: deduplicated pool count plus mean and
/// median of the per-pool cumulative USD volumes (`None` when the flow's
/// transactions carry no swap rows).
#[derive(Debug, Clone, PartialEq)]
pub struct PoolProfile {
    pub pool_count: usize,
    pub mean_usd: Option<f64>,
    pub median_usd: Option<f64>,
}

/// Summarizes the per-pool volume distribution of one flow.
pub fn flow_pool_profile(flow: &OrderFlow) -> PoolProfile {
    let mut sums: Vec<f64> = flow.pool_usd.values().copied().collect();
    if sums.is_empty() {
        return PoolProfile { pool_count: 0, mean_usd: None, median_usd: None };
    }
    sums.sort_by(|a, b| a.partial_cmp(b).expect("pool sums are finite"));
    let n = sums.len();
    let mean = sums.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sums[n / 2]
    } else {
        (sums[n / 2 - 1] + sums[n / 2]) / 2.0
    };
    PoolProfile { pool_count: n, mean_usd: Some(mean), median_usd: Some(median) }
}
