//! Deterministic synthetic-dataset generation with planted ground truth.
//!
//! A scenario config plants builders with weekly share trajectories and
//! order flows with known mechanisms, routing biases, and bribe rates. The
//! generator emits the exact file set the ingestion layer reads — blocks,
//! transactions, swaps, mempool, builder registry, labels — plus a
//! `manifest.json` holding the *realized* aggregates (integer wei,
//! serialized as decimal strings) recomputed from the emitted rows by a
//! naive scan. The manifest is the independent oracle that analytics
//! results are checked against.
//!
//! Determinism contract: all randomness comes from ChaCha8 streams derived
//! from the scenario seed. Stream 0 drives blocks, background noise,
//! refunds, and bids, in that fixed order; each flow owns the stream named
//! by the first eight bytes (little-endian) of the SHA-256 of its name, so
//! a flow's transactions do not depend on how many other flows exist or in
//! what order they were declared. Identical configs produce byte-identical
//! files.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concentration::Phases;
use crate::error::ModuleError;
use crate::features::FEATURE_COUNT;
use crate::forest::{ForestClass, TrainingExample};
use crate::ingest::{BuilderId, MevLabel};
use crate::pipeline::MechanismClass;
use crate::units::{eth_to_wei, Wei};

const SECS_PER_WEEK: i64 = 604_800;

/// Preferred placement of a flow's transactions inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    /// Front of the block (searcher bundles).
    Top,
    /// Middle of the block.
    Mid,
    /// No preference; after top and mid traffic.
    #[default]
    Any,
}

impl Position {
    fn sort_key(self) -> u8 {
        match self {
            Position::Top => 0,
            Position::Mid => 1,
            Position::Any => 2,
        }
    }
}

/// One builder's planted market behavior.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderSpec {
    /// Registry identifier (also the manifest key when attributed).
    pub id: String,
    /// Display name; defaults to the id.
    #[serde(default)]
    pub name: Option<String>,
    /// Number of fee-recipient addresses the builder rotates through.
    #[serde(default = "default_one")]
    pub addresses: u32,
    /// Constant weekly block share (exclusive with `shares`).
    #[serde(default)]
    pub share: Option<f64>,
    /// Explicit per-week shares (exclusive with `share`).
    #[serde(default)]
    pub shares: Option<Vec<f64>>,
    /// Whether the builder appears in the registry; unattributed builders
    /// load as the `proposer` pseudo-builder.
    #[serde(default = "default_true")]
    pub attributed: bool,
}

/// One order flow's planted behavior.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    /// Unique name; seeds the flow's RNG stream and derived addresses.
    pub name: String,
    /// Planted mechanism: `protocol`, `atomic`, `non_atomic`, or `other`.
    pub mechanism: String,
    pub txs_per_week: u32,
    /// Mean bribe per transaction, in ETH (each tx draws ±50%).
    pub bribe_eth: f64,
    /// Builder receiving the exclusive routing bias.
    #[serde(default)]
    pub target_builder: Option<String>,
    /// Probability a tx is routed into the target builder's blocks.
    #[serde(default)]
    pub exclusivity: f64,
    #[serde(default = "default_one")]
    pub senders: u32,
    /// Swap events per tx, uniform in `[min, max]` (min ≥ 1).
    #[serde(default = "default_swap_events")]
    pub swap_events: [u32; 2],
    /// Probability a tx never appears in the public mempool.
    #[serde(default)]
    pub privacy: f64,
    #[serde(default = "default_one")]
    pub pools: u32,
    /// Mean per-swap USD volume (each swap draws ±50%).
    #[serde(default = "default_pool_usd")]
    pub pool_usd: f64,
    /// MEV label stamped on a fraction of txs.
    #[serde(default)]
    pub mev_label: Option<String>,
    #[serde(default)]
    pub mev_label_rate: f64,
    #[serde(default = "default_gas")]
    pub gas: u64,
    #[serde(default)]
    pub position: Position,
    /// Write the mechanism into the label file (manual-label ground truth).
    #[serde(default)]
    pub labeled: bool,
    /// Write an exclusivity ground-truth row into the label file.
    #[serde(default)]
    pub known_eof: Option<bool>,
    /// Inclusive `[first, last]` active week range; defaults to all weeks.
    #[serde(default)]
    pub active_weeks: Option<[u32; 2]>,
    /// Per-phase scaling of `bribe_eth` (requires `phase_starts`).
    #[serde(default)]
    pub phase_bribe_multipliers: Option<Vec<f64>>,
    /// Fraction of each bribe paid as priority tip; the rest is a direct
    /// transfer.
    #[serde(default = "default_tip_fraction")]
    pub tip_fraction: f64,
}

/// A complete scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub weeks: u32,
    /// Blocks per week; must divide the 604 800-second week evenly.
    pub blocks_per_week: u32,
    /// First block's UTC date (midnight-aligned).
    #[serde(default = "default_start_date")]
    pub start_date: String,
    /// Non-swap noise transactions appended to every block.
    #[serde(default)]
    pub background_txs_per_block: u32,
    /// Total negative-bribe (builder refund) transactions sprinkled in.
    #[serde(default)]
    pub refund_txs: u32,
    /// Block bid as a fraction of realized revenue, uniform in `[lo, hi]`.
    #[serde(default = "default_bid_fraction")]
    pub bid_fraction: [f64; 2],
    /// Phase boundary dates for per-phase bribe scaling.
    #[serde(default)]
    pub phase_starts: Vec<String>,
    pub builders: Vec<BuilderSpec>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

fn default_one() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

fn default_swap_events() -> [u32; 2] {
    [1, 1]
}

fn default_pool_usd() -> f64 {
    10_000.0
}

fn default_gas() -> u64 {
    150_000
}

fn default_tip_fraction() -> f64 {
    1.0
}

fn default_start_date() -> String {
    "2023-01-02".to_string()
}

fn default_bid_fraction() -> [f64; 2] {
    [0.8, 0.95]
}

impl ScenarioConfig {
    /// Parses a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::InvalidConfig { detail: e.to_string() })
    }

    /// Reads and parses a scenario file.
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// Ground truth for one generated flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTruth {
    pub name: String,
    pub contract: String,
    /// Planted mechanism as a [`MechanismClass`] label.
    pub mechanism: String,
    pub labeled: bool,
    pub known_eof: Option<bool>,
    pub target_builder: Option<String>,
    pub exclusivity: f64,
    pub tx_count: u64,
    pub active_weeks: [u32; 2],
}

/// Realized bribe totals of one phase, keyed by planted mechanism label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTruth {
    pub start: i64,
    pub end: i64,
    /// Mechanism label → wei (decimal string).
    pub totals: BTreeMap<String, String>,
}

/// Realized aggregates of a generated dataset, recomputed from the emitted
/// rows by a naive scan (independently of the analytics modules).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub weeks: u32,
    pub blocks: u64,
    pub txs: u64,
    /// Per-week block counts as the loader will see them: attributed
    /// builder ids plus `proposer` pooling every unattributed party.
    pub weekly_blocks: BTreeMap<String, Vec<u64>>,
    /// Σ max(d, 0) over all transactions (wei, decimal string).
    pub block_revenue_total: String,
    /// Σ max(d, 0) over swap transactions only.
    pub trading_revenue_total: String,
    /// Flow contract → lifetime bribe (wei, decimal string).
    pub flow_totals: BTreeMap<String, String>,
    /// Flow contract → week → builder label → bribe (positive cells only).
    pub flow_cells: BTreeMap<String, BTreeMap<u32, BTreeMap<String, String>>>,
    /// Planted per-flow ground truth, sorted by flow name.
    pub flows: Vec<FlowTruth>,
    /// Contracts planted with `known_eof = true`, sorted.
    pub eof_contracts: Vec<String>,
    /// Realized per-phase bribe mix (empty without `phase_starts`).
    pub phases: Vec<PhaseTruth>,
    pub background_txs: u64,
    pub refund_txs: u64,
}

impl Manifest {
    /// Writes the manifest as pretty JSON.
    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads a manifest written by [`Manifest::save`].
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| SynthError::Manifest { detail: e.to_string() })
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {detail}")]
    InvalidConfig { detail: String },
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {detail}")]
    Manifest { detail: String },
}

impl ModuleError for SynthError {
    fn module(&self) -> &'static str {
        "synth"
    }

    fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidConfig { .. } => "invalid_config",
            SynthError::Io { .. } => "io",
            SynthError::Manifest { .. } => "manifest",
        }
    }
}

fn invalid(detail: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig { detail: detail.into() }
}

/// 20-byte address derived from a stable tag path.
fn derive_address(kind: &str, name: &str, index: u32) -> String {
    let digest = Sha256::digest(format!("flowscope:addr:{kind}:{name}:{index}").as_bytes());
    format!("0x{}", hex::encode(&digest[..20]))
}

/// 32-byte transaction hash derived from a stable tag path.
fn derive_tx_hash(tag: &str, seq: u64) -> String {
    let digest = Sha256::digest(format!("flowscope:tx:{tag}:{seq}").as_bytes());
    format!("0x{}", hex::encode(digest))
}

/// The flow's dedicated RNG stream id.
fn flow_stream(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn parse_date(s: &str) -> Result<NaiveDate, SynthError> {
    s.parse::<NaiveDate>()
        .map_err(|e| invalid(format!("invalid date {s:?}: {e}")))
}

fn date_to_ts(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp()
}

fn parse_mechanism(s: &str) -> Result<MechanismClass, SynthError> {
    match s {
        "protocol" => Ok(MechanismClass::Protocol),
        "atomic" => Ok(MechanismClass::Atomic),
        "non_atomic" => Ok(MechanismClass::NonAtomic),
        "other" => Ok(MechanismClass::Miscellaneous),
        _ => Err(invalid(format!(
            "unknown mechanism {s:?} (expected protocol, atomic, non_atomic, or other)"
        ))),
    }
}

fn validate_rate(value: f64, what: &str) -> Result<(), SynthError> {
    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
        return Err(invalid(format!("{what} must lie in [0, 1], got {value}")));
    }
    Ok(())
}

struct PlannedBuilder {
    addresses: Vec<String>,
    /// Builder label as the loader will report it.
    label: String,
    weekly_shares: Vec<f64>,
}

struct PlannedFlow<'c> {
    spec: &'c FlowSpec,
    contract: String,
    senders: Vec<String>,
    pools: Vec<String>,
    tokens: [String; 2],
    mechanism: MechanismClass,
    target_index: Option<usize>,
    active: [u32; 2],
    stream: u64,
}

struct TxDraft {
    hash: String,
    block: u64,
    sort_key: (u8, String, u64),
    sender: String,
    to: String,
    gas: u64,
    tip: Wei,
    direct: i128,
    swaps: Vec<SwapDraft>,
    public: bool,
    mev_label: Option<&'static str>,
    /// Index into the planned flow list, for manifest attribution.
    flow: Option<usize>,
}

impl TxDraft {
    fn contribution(&self) -> Wei {
        (self.tip as i128 + self.direct).max(0) as Wei
    }

    fn is_swap(&self) -> bool {
        !self.swaps.is_empty()
    }
}

struct SwapDraft {
    pool: String,
    token_in: String,
    token_out: String,
    amount_usd: f64,
}

fn mev_label_str(label: MevLabel) -> &'static str {
    match label {
        MevLabel::None => "",
        MevLabel::Sandwich => "sandwich",
        MevLabel::AtomicArb => "atomic_arb",
        MevLabel::Liquidation => "liquidation",
        MevLabel::Frontrun => "frontrun",
        MevLabel::Backrun => "backrun",
    }
}

fn parse_mev_label(s: &str) -> Result<&'static str, SynthError> {
    for label in [
        MevLabel::Sandwich,
        MevLabel::AtomicArb,
        MevLabel::Liquidation,
        MevLabel::Frontrun,
        MevLabel::Backrun,
    ] {
        if mev_label_str(label) == s {
            return Ok(mev_label_str(label));
        }
    }
    Err(invalid(format!("unknown mev_label {s:?}")))
}

fn validate_builders(config: &ScenarioConfig) -> Result<Vec<PlannedBuilder>, SynthError> {
    if config.builders.is_empty() {
        return Err(invalid("at least one builder is required"));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut planned = Vec::new();
    for b in &config.builders {
        BuilderId::parse(&b.id).map_err(|e| invalid(format!("builder id {:?}: {e}", b.id)))?;
        if b.id == BuilderId::proposer().as_str() {
            return Err(invalid("builder id `proposer` is reserved for unattributed blocks"));
        }
        if !seen.insert(b.id.clone()) {
            return Err(invalid(format!("duplicate builder id {:?}", b.id)));
        }
        if b.addresses == 0 {
            return Err(invalid(format!("builder {:?} needs at least one address", b.id)));
        }
        let weekly_shares: Vec<f64> = match (b.share, &b.shares) {
            (Some(_), Some(_)) => {
                return Err(invalid(format!(
                    "builder {:?}: `share` and `shares` are mutually exclusive",
                    b.id
                )))
            }
            (Some(s), None) => vec![s; config.weeks as usize],
            (None, Some(v)) => {
                if v.len() != config.weeks as usize {
                    return Err(invalid(format!(
                        "builder {:?}: `shares` must list {} weeks, got {}",
                        b.id,
                        config.weeks,
                        v.len()
                    )));
                }
                v.clone()
            }
            (None, None) => {
                return Err(invalid(format!("builder {:?}: set `share` or `shares`", b.id)))
            }
        };
        for &s in &weekly_shares {
            if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
                return Err(invalid(format!("builder {:?}: share {s} outside [0, 1]", b.id)));
            }
        }
        planned.push(PlannedBuilder {
            addresses: (0..b.addresses).map(|i| derive_address("builder", &b.id, i)).collect(),
            label: if b.attributed { b.id.clone() } else { BuilderId::proposer().to_string() },
            weekly_shares,
        });
    }
    for week in 0..config.weeks as usize {
        let sum: f64 = planned.iter().map(|b| b.weekly_shares[week]).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("week {week}: builder shares sum to {sum}, expected 1")));
        }
    }
    Ok(planned)
}

fn validate_flows<'c>(
    config: &'c ScenarioConfig,
    phases: &Option<Phases>,
) -> Result<Vec<PlannedFlow<'c>>, SynthError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut planned = Vec::new();
    for f in &config.flows {
        if f.name.is_empty() {
            return Err(invalid("flow name must be non-empty"));
        }
        if !seen.insert(f.name.clone()) {
            return Err(invalid(format!("duplicate flow name {:?}", f.name)));
        }
        let mechanism = parse_mechanism(&f.mechanism)?;
        if f.txs_per_week == 0 {
            return Err(invalid(format!("flow {:?}: txs_per_week must be positive", f.name)));
        }
        if !(f.bribe_eth.is_finite() && f.bribe_eth >= 0.0) {
            return Err(invalid(format!("flow {:?}: bribe_eth must be non-negative", f.name)));
        }
        validate_rate(f.exclusivity, &format!("flow {:?} exclusivity", f.name))?;
        validate_rate(f.privacy, &format!("flow {:?} privacy", f.name))?;
        validate_rate(f.mev_label_rate, &format!("flow {:?} mev_label_rate", f.name))?;
        validate_rate(f.tip_fraction, &format!("flow {:?} tip_fraction", f.name))?;
        if f.senders == 0 || f.pools == 0 {
            return Err(invalid(format!("flow {:?}: senders and pools must be positive", f.name)));
        }
        if f.swap_events[0] < 1 || f.swap_events[0] > f.swap_events[1] {
            return Err(invalid(format!(
                "flow {:?}: swap_events must satisfy 1 ≤ min ≤ max",
                f.name
            )));
        }
        if !(f.pool_usd.is_finite() && f.pool_usd > 0.0) {
            return Err(invalid(format!("flow {:?}: pool_usd must be positive", f.name)));
        }
        if f.gas == 0 {
            return Err(invalid(format!("flow {:?}: gas must be positive", f.name)));
        }
        let target_index = match &f.target_builder {
            None => {
                if f.exclusivity > 0.0 {
                    return Err(invalid(format!(
                        "flow {:?}: exclusivity needs a target_builder",
                        f.name
                    )));
                }
                None
            }
            Some(target) => Some(
                config
                    .builders
                    .iter()
                    .position(|b| b.id == *target)
                    .ok_or_else(|| {
                        invalid(format!("flow {:?}: unknown target_builder {target:?}", f.name))
                    })?,
            ),
        };
        let label_value = f.mev_label.as_deref().map(parse_mev_label).transpose()?;
        if f.mev_label_rate > 0.0 && label_value.is_none() {
            return Err(invalid(format!(
                "flow {:?}: mev_label_rate needs a mev_label",
                f.name
            )));
        }
        let active = f.active_weeks.unwrap_or([0, config.weeks - 1]);
        if active[0] > active[1] || active[1] >= config.weeks {
            return Err(invalid(format!(
                "flow {:?}: active_weeks {:?} outside 0..{}",
                f.name, active, config.weeks
            )));
        }
        if let Some(mults) = &f.phase_bribe_multipliers {
            let phases = phases.as_ref().ok_or_else(|| {
                invalid(format!(
                    "flow {:?}: phase_bribe_multipliers requires phase_starts",
                    f.name
                ))
            })?;
            if mults.len() != phases.count() {
                return Err(invalid(format!(
                    "flow {:?}: expected {} phase multipliers, got {}",
                    f.name,
                    phases.count(),
                    mults.len()
                )));
            }
            if mults.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return Err(invalid(format!(
                    "flow {:?}: phase multipliers must be non-negative",
                    f.name
                )));
            }
        }
        planned.push(PlannedFlow {
            spec: f,
            contract: derive_address("contract", &f.name, 0),
            senders: (0..f.senders).map(|i| derive_address("sender", &f.name, i)).collect(),
            pools: (0..f.pools).map(|i| derive_address("pool", &f.name, i)).collect(),
            tokens: [derive_address("token", &f.name, 0), derive_address("token", &f.name, 1)],
            mechanism,
            target_index,
            active,
            stream: flow_stream(&f.name),
        });
    }
    // Stable generation order regardless of declaration order; per-flow
    // streams already make the draws order-independent.
    planned.sort_by(|a, b| a.spec.name.cmp(&b.spec.name));
    Ok(planned)
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Generates the dataset files and manifest for a scenario.
///
/// Emits `blocks.jsonl`, `txs.jsonl`, `swaps.jsonl`, `mempool.txt`,
/// `builders.csv`, `labels.csv`, and `manifest.json` under `out_dir`
/// (created if missing). Identical configs produce byte-identical files.
pub fn generate(config: &ScenarioConfig, out_dir: &Path) -> Result<Manifest, SynthError> {
    if config.weeks == 0 {
        return Err(invalid("weeks must be positive"));
    }
    if config.blocks_per_week == 0 || SECS_PER_WEEK % config.blocks_per_week as i64 != 0 {
        return Err(invalid(format!(
            "blocks_per_week must divide the {SECS_PER_WEEK}-second week, got {}",
            config.blocks_per_week
        )));
    }
    let [bid_lo, bid_hi] = config.bid_fraction;
    if !(bid_lo.is_finite() && bid_hi.is_finite() && 0.0 <= bid_lo && bid_lo <= bid_hi) {
        return Err(invalid(format!(
            "bid_fraction must satisfy 0 ≤ lo ≤ hi, got [{bid_lo}, {bid_hi}]"
        )));
    }
    let start_ts = date_to_ts(parse_date(&config.start_date)?);
    let phases = if config.phase_starts.is_empty() {
        None
    } else {
        let dates: Vec<NaiveDate> = config
            .phase_starts
            .iter()
            .map(|s| parse_date(s))
            .collect::<Result<_, _>>()?;
        Some(Phases::from_dates(&dates).map_err(|e| invalid(e.to_string()))?)
    };
    let builders = validate_builders(config)?;
    let flows = validate_flows(config, &phases)?;
    let spacing = SECS_PER_WEEK / config.blocks_per_week as i64;

    // ---- Stream 0: blocks. -------------------------------------------
    let mut rng0 = ChaCha8Rng::seed_from_u64(config.seed);
    rng0.set_stream(0);
    let total_blocks = config.weeks as u64 * config.blocks_per_week as u64;
    // Per block: (timestamp, builder index, fee recipient address).
    let mut block_builder: Vec<usize> = Vec::with_capacity(total_blocks as usize);
    let mut block_ts: Vec<i64> = Vec::with_capacity(total_blocks as usize);
    let mut block_recipient: Vec<&str> = Vec::with_capacity(total_blocks as usize);
    // (week, builder) → block numbers, for routing draws.
    let mut week_blocks: Vec<Vec<u64>> = vec![Vec::new(); config.weeks as usize];
    let mut week_builder_blocks: Vec<Vec<Vec<u64>>> =
        vec![vec![Vec::new(); builders.len()]; config.weeks as usize];
    for week in 0..config.weeks as usize {
        let shares: Vec<f64> = builders.iter().map(|b| b.weekly_shares[week]).collect();
        for slot in 0..config.blocks_per_week as i64 {
            let number = block_builder.len() as u64 + 1;
            let ts = start_ts + week as i64 * SECS_PER_WEEK + slot * spacing;
            let u: f64 = rng0.random_range(0.0..1.0);
            let mut chosen = shares.len() - 1;
            let mut acc = 0.0;
            for (i, &share) in shares.iter().enumerate() {
                acc += share;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            let recipient_index = if builders[chosen].addresses.len() == 1 {
                0
            } else {
                rng0.random_range(0..builders[chosen].addresses.len())
            };
            block_builder.push(chosen);
            block_ts.push(ts);
            block_recipient.push(&builders[chosen].addresses[recipient_index]);
            week_blocks[week].push(number);
            week_builder_blocks[week][chosen].push(number);
        }
    }

    // ---- Stream 0 continued: background noise. -----------------------
    let background_contracts: Vec<String> =
        (0..4).map(|i| derive_address("contract", "background", i)).collect();
    let background_senders: Vec<String> =
        (0..8).map(|i| derive_address("sender", "background", i)).collect();
    let mut txs: Vec<TxDraft> = Vec::new();
    let mut background_count = 0u64;
    for block in 1..=total_blocks {
        for i in 0..config.background_txs_per_block {
            let tip = eth_to_wei(0.0001 * uniform_in(&mut rng0, 0.5, 1.5));
            let to = rng0.random_range(0..background_contracts.len());
            let sender = rng0.random_range(0..background_senders.len());
            background_count += 1;
            txs.push(TxDraft {
                hash: derive_tx_hash("background", (block - 1) * 1_000 + i as u64),
                block,
                sort_key: (3, "background".to_string(), background_count),
                sender: background_senders[sender].clone(),
                to: background_contracts[to].clone(),
                gas: 21_000,
                tip,
                direct: 0,
                swaps: Vec::new(),
                public: true,
                mev_label: None,
                flow: None,
            });
        }
    }

    // ---- Stream 0 continued: refunds (negative net bribes). ----------
    let refund_contract = derive_address("contract", "refund", 0);
    let refund_sender = derive_address("sender", "refund", 0);
    for seq in 0..config.refund_txs {
        let block = rng0.random_range(0..total_blocks) + 1;
        let tip = eth_to_wei(0.0001);
        let penalty = eth_to_wei(0.001 * uniform_in(&mut rng0, 1.0, 3.0));
        txs.push(TxDraft {
            hash: derive_tx_hash("refund", seq as u64),
            block,
            sort_key: (4, "refund".to_string(), seq as u64),
            sender: refund_sender.clone(),
            to: refund_contract.clone(),
            gas: 21_000,
            tip,
            direct: -(penalty as i128),
            swaps: Vec::new(),
            public: true,
            mev_label: None,
            flow: None,
        });
    }

    // ---- Per-flow streams: flow transactions. -------------------------
    for (flow_index, flow) in flows.iter().enumerate() {
        let spec = flow.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(flow.stream);
        let mut seq = 0u64;
        for week in flow.active[0]..=flow.active[1] {
            for _ in 0..spec.txs_per_week {
                // Routing: target builder's blocks with probability
                // `exclusivity` (falling back to the whole week when the
                // target built nothing), otherwise any block of the week.
                let route: f64 = rng.random_range(0.0..1.0);
                let candidates: &[u64] = match flow.target_index {
                    Some(t) if route < spec.exclusivity
                        && !week_builder_blocks[week as usize][t].is_empty() =>
                    {
                        &week_builder_blocks[week as usize][t]
                    }
                    _ => &week_blocks[week as usize],
                };
                let block = candidates[rng.random_range(0..candidates.len())];

                let mut bribe_eth = spec.bribe_eth * uniform_in(&mut rng, 0.5, 1.5);
                if let (Some(phases), Some(mults)) = (&phases, &spec.phase_bribe_multipliers) {
                    if let Some(phase) = phases.index_of(block_ts[(block - 1) as usize]) {
                        bribe_eth *= mults[phase];
                    }
                }
                let tip_eth = bribe_eth * spec.tip_fraction;
                let tip = eth_to_wei(tip_eth);
                let direct = eth_to_wei(bribe_eth - tip_eth) as i128;

                let swap_count = if spec.swap_events[0] == spec.swap_events[1] {
                    spec.swap_events[0]
                } else {
                    rng.random_range(spec.swap_events[0]..=spec.swap_events[1])
                };
                let sender = rng.random_range(0..flow.senders.len());
                let public = rng.random_range(0.0..1.0) >= spec.privacy;
                let mev_label = match flow.spec.mev_label.as_deref() {
                    Some(_) if rng.random_range(0.0..1.0) < spec.mev_label_rate => {
                        Some(parse_mev_label(flow.spec.mev_label.as_deref().unwrap())?)
                    }
                    _ => None,
                };
                let swaps = (0..swap_count)
                    .map(|_| {
                        let pool = rng.random_range(0..flow.pools.len());
                        let amount = spec.pool_usd * uniform_in(&mut rng, 0.5, 1.5);
                        SwapDraft {
                            pool: flow.pools[pool].clone(),
                            token_in: flow.tokens[0].clone(),
                            token_out: flow.tokens[1].clone(),
                            amount_usd: amount,
                        }
                    })
                    .collect();
                txs.push(TxDraft {
                    hash: derive_tx_hash(&spec.name, seq),
                    block,
                    sort_key: (spec.position.sort_key(), spec.name.clone(), seq),
                    sender: flow.senders[sender].clone(),
                    to: flow.contract.clone(),
                    gas: spec.gas,
                    tip,
                    direct,
                    swaps,
                    public,
                    mev_label,
                    flow: Some(flow_index),
                });
                seq += 1;
            }
        }
    }

    // ---- Deterministic in-block ordering. -----------------------------
    let mut by_block: BTreeMap<u64, Vec<TxDraft>> = BTreeMap::new();
    for tx in txs {
        by_block.entry(tx.block).or_default().push(tx);
    }
    for block_txs in by_block.values_mut() {
        block_txs.sort_by(|a, b| a.sort_key.cmp(&b.sort_key));
    }

    // ---- Stream 0 continued: bids from realized revenue. --------------
    let mut bids: Vec<Wei> = Vec::with_capacity(total_blocks as usize);
    for block in 1..=total_blocks {
        let revenue: Wei = by_block
            .get(&block)
            .map(|v| v.iter().map(TxDraft::contribution).sum())
            .unwrap_or(0);
        let fraction = uniform_in(&mut rng0, bid_lo, bid_hi);
        bids.push((revenue as f64 * fraction).round() as Wei);
    }

    // ---- Manifest: naive scan over the realized rows. ------------------
    let mut weekly_blocks: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (i, &builder) in block_builder.iter().enumerate() {
        let week = i / config.blocks_per_week as usize;
        weekly_blocks
            .entry(builders[builder].label.clone())
            .or_insert_with(|| vec![0; config.weeks as usize])[week] += 1;
    }
    let mut block_revenue_total: Wei = 0;
    let mut trading_revenue_total: Wei = 0;
    let mut flow_totals: BTreeMap<String, Wei> = BTreeMap::new();
    let mut flow_cells: BTreeMap<String, BTreeMap<u32, BTreeMap<String, Wei>>> = BTreeMap::new();
    let mut flow_tx_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut phase_totals: Vec<BTreeMap<String, Wei>> = match &phases {
        Some(p) => vec![BTreeMap::new(); p.count()],
        None => Vec::new(),
    };
    let mut total_txs = 0u64;
    for (&block, block_txs) in &by_block {
        let ts = block_ts[(block - 1) as usize];
        let week = ((ts - start_ts) / SECS_PER_WEEK) as u32;
        let builder_label = &builders[block_builder[(block - 1) as usize]].label;
        for tx in block_txs {
            total_txs += 1;
            let contribution = tx.contribution();
            block_revenue_total += contribution;
            if !tx.is_swap() {
                continue;
            }
            trading_revenue_total += contribution;
            let Some(flow_index) = tx.flow else { continue };
            let flow = &flows[flow_index];
            *flow_tx_counts.entry(flow.contract.clone()).or_insert(0) += 1;
            *flow_totals.entry(flow.contract.clone()).or_insert(0) += contribution;
            if contribution > 0 {
                *flow_cells
                    .entry(flow.contract.clone())
                    .or_default()
                    .entry(week)
                    .or_default()
                    .entry(builder_label.clone())
                    .or_insert(0) += contribution;
            }
            if let Some(p) = &phases {
                if let Some(phase) = p.index_of(ts) {
                    *phase_totals[phase]
                        .entry(flow.mechanism.label().to_string())
                        .or_insert(0) += contribution;
                }
            }
        }
    }

    let manifest = Manifest {
        seed: config.seed,
        weeks: config.weeks,
        blocks: total_blocks,
        txs: total_txs,
        weekly_blocks,
        block_revenue_total: block_revenue_total.to_string(),
        trading_revenue_total: trading_revenue_total.to_string(),
        flow_totals: flow_totals.iter().map(|(c, w)| (c.clone(), w.to_string())).collect(),
        flow_cells: flow_cells
            .iter()
            .map(|(c, weeks)| {
                let weeks = weeks
                    .iter()
                    .map(|(&w, row)| {
                        (w, row.iter().map(|(b, wei)| (b.clone(), wei.to_string())).collect())
                    })
                    .collect();
                (c.clone(), weeks)
            })
            .collect(),
        flows: flows
            .iter()
            .map(|f| FlowTruth {
                name: f.spec.name.clone(),
                contract: f.contract.clone(),
                mechanism: f.mechanism.label().to_string(),
                labeled: f.spec.labeled,
                known_eof: f.spec.known_eof,
                target_builder: f.spec.target_builder.clone(),
                exclusivity: f.spec.exclusivity,
                tx_count: flow_tx_counts.get(&f.contract).copied().unwrap_or(0),
                active_weeks: f.active,
            })
            .collect(),
        eof_contracts: flows
            .iter()
            .filter(|f| f.spec.known_eof == Some(true))
            .map(|f| f.contract.clone())
            .collect(),
        phases: match &phases {
            Some(p) => phase_totals
                .iter()
                .enumerate()
                .map(|(i, totals)| {
                    let (start, end) = p.range(i);
                    PhaseTruth {
                        start,
                        end,
                        totals: totals
                            .iter()
                            .map(|(m, wei)| (m.clone(), wei.to_string()))
                            .collect(),
                    }
                })
                .collect(),
            None => Vec::new(),
        },
        background_txs: background_count,
        refund_txs: config.refund_txs as u64,
    };

    // ---- File emission. ------------------------------------------------
    std::fs::create_dir_all(out_dir).map_err(|source| SynthError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let write = |name: &str, content: String| -> Result<(), SynthError> {
        let path = out_dir.join(name);
        let mut file = std::fs::File::create(&path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(content.as_bytes()).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })
    };

    let mut blocks_out = String::new();
    for block in 1..=total_blocks {
        let i = (block - 1) as usize;
        let row = serde_json::json!({
            "number": block,
            "timestamp": block_ts[i],
            "fee_recipient": block_recipient[i],
            "bid": bids[i].to_string(),
        });
        blocks_out.push_str(&row.to_string());
        blocks_out.push('\n');
    }
    write("blocks.jsonl", blocks_out)?;

    let mut txs_out = String::new();
    let mut swaps_out = String::new();
    let mut mempool: Vec<&str> = Vec::new();
    for block_txs in by_block.values() {
        for (index, tx) in block_txs.iter().enumerate() {
            let mut row = serde_json::json!({
                "hash": tx.hash,
                "block": tx.block,
                "index": index as u32,
                "from": tx.sender,
                "to": tx.to,
                "gas_used": tx.gas,
                "priority_tip": tx.tip.to_string(),
                "direct_bribe": tx.direct.to_string(),
                "swap_count": tx.swaps.len() as u32,
            });
            if let Some(label) = tx.mev_label {
                row["mev_label"] = serde_json::json!(label);
            }
            txs_out.push_str(&row.to_string());
            txs_out.push('\n');
            for swap in &tx.swaps {
                let row = serde_json::json!({
                    "tx": tx.hash,
                    "pool": swap.pool,
                    "token_in": swap.token_in,
                    "token_out": swap.token_out,
                    "amount_usd": swap.amount_usd,
                });
                swaps_out.push_str(&row.to_string());
                swaps_out.push('\n');
            }
            if tx.public {
                mempool.push(&tx.hash);
            }
        }
    }
    write("txs.jsonl", txs_out)?;
    write("swaps.jsonl", swaps_out)?;
    mempool.sort_unstable();
    let mut mempool_out = mempool.join("\n");
    if !mempool_out.is_empty() {
        mempool_out.push('\n');
    }
    write("mempool.txt", mempool_out)?;

    let mut builders_out = String::from("address,builder_id,name\n");
    for (spec, planned) in config.builders.iter().zip(&builders) {
        if !spec.attributed {
            continue;
        }
        let display = spec.name.as_deref().unwrap_or(&spec.id);
        for address in &planned.addresses {
            builders_out.push_str(&format!("{address},{},{display}\n", spec.id));
        }
    }
    write("builders.csv", builders_out)?;

    let mut label_rows: Vec<(String, String, String)> = flows
        .iter()
        .filter(|f| f.spec.labeled || f.spec.known_eof.is_some())
        .map(|f| {
            let mechanism = if f.spec.labeled { f.spec.mechanism.clone() } else { String::new() };
            let eof = match f.spec.known_eof {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            (f.contract.clone(), mechanism, eof.to_string())
        })
        .collect();
    label_rows.sort();
    let mut labels_out = String::from("contract,mechanism,known_eof\n");
    for (contract, mechanism, eof) in label_rows {
        labels_out.push_str(&format!("{contract},{mechanism},{eof}\n"));
    }
    write("labels.csv", labels_out)?;

    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------
// Feature-level classifier fixtures.
// ---------------------------------------------------------------------

fn vector(
    rng: &mut ChaCha8Rng,
    f1: (f64, f64),
    gas: (f64, f64),
    tip: (f64, f64),
    index: (f64, f64),
    label_freq: (f64, f64),
    privacy: (f64, f64),
    senders: (u32, u32),
    txs_per_sender: (f64, f64),
) -> [f64; FEATURE_COUNT] {
    let f1 = uniform_in(rng, f1.0, f1.1);
    let f2 = uniform_in(rng, gas.0, gas.1);
    let f3 = uniform_in(rng, tip.0, tip.1);
    let f4 = uniform_in(rng, index.0, index.1);
    let f5 = uniform_in(rng, label_freq.0, label_freq.1);
    let f6 = uniform_in(rng, privacy.0, privacy.1);
    let f7 = rng.random_range(senders.0..=senders.1) as f64;
    let f8 = uniform_in(rng, txs_per_sender.0, txs_per_sender.1);
    let f9 = (f7 * f8).round().max(1.0);
    // Keep the structural identity f8 = f9 / f7 exact.
    [f1, f2, f3, f4, f5, f6, f7, f9 / f7, f9]
}

/// Separable classifier fixture: the swap-events-per-tx feature splits the
/// classes across a clean margin (bots hover at one swap per tx, everything
/// else well above), while every other feature overlaps and carries only a
/// soft signal. A forest should reach near-perfect test accuracy and rank
/// the swap-events feature first in importance.
pub fn separable_fixture(non_atomic: usize, other: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(non_atomic + other);
    for _ in 0..non_atomic {
        data.push(TrainingExample {
            features: vector(
                &mut rng,
                (0.95, 1.06),
                (90_000.0, 400_000.0),
                (0.001, 0.1),
                (0.0, 40.0),
                (0.0, 0.5),
                (0.3, 1.0),
                (1, 60),
                (5.0, 80.0),
            ),
            label: ForestClass::NonAtomic,
        });
    }
    for _ in 0..other {
        data.push(TrainingExample {
            features: vector(
                &mut rng,
                (2.0, 6.0),
                (150_000.0, 900_000.0),
                (0.0005, 0.2),
                (5.0, 120.0),
                (0.1, 0.9),
                (0.0, 0.85),
                (5, 220),
                (1.0, 40.0),
            ),
            label: ForestClass::Other,
        });
    }
    data
}

/// Overlap-calibrated classifier fixture: the class regions share mass on
/// every informative feature, so accuracy lands high but below perfect.
pub fn overlap_fixture(non_atomic: usize, other: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(non_atomic + other);
    for _ in 0..non_atomic {
        data.push(TrainingExample {
            features: vector(
                &mut rng,
                (0.9, 1.8),
                (90_000.0, 500_000.0),
                (0.001, 0.12),
                (0.0, 60.0),
                (0.0, 0.6),
                (0.25, 1.0),
                (1, 80),
                (3.0, 60.0),
            ),
            label: ForestClass::NonAtomic,
        });
    }
    for _ in 0..other {
        data.push(TrainingExample {
            features: vector(
                &mut rng,
                (1.2, 5.5),
                (120_000.0, 900_000.0),
                (0.0005, 0.25),
                (4.0, 150.0),
                (0.1, 0.95),
                (0.0, 0.8),
                (4, 200),
                (1.0, 35.0),
            ),
            label: ForestClass::Other,
        });
    }
    data
}
