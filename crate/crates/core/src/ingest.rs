//! Dataset ingestion: loading, validating, and indexing the input files.
//!
//! A dataset is six flat files in one directory:
//!
//! ```text
//! blocks.jsonl    {"number", "timestamp", "fee_recipient", "bid"}
//! txs.jsonl       {"hash", "block", "index", "from", "to", "gas_used",
//!                  "priority_tip", "direct_bribe", "swap_count"[, "mev_label"]}
//! swaps.jsonl     {"tx", "pool", "token_in", "token_out", "amount_usd"}
//! mempool.txt     one lowercase hex tx hash per line
//! builders.csv    address,builder_id,name
//! labels.csv      contract,mechanism,known_eof
//! ```
//!
//! Wei amounts are decimal strings (they do not fit in the 2^53 exact-integer
//! range of JSON numbers). Loading is all-or-nothing: the first schema
//! violation aborts with the offending file and line, and no partially
//! populated dataset ever escapes. The loaded [`Dataset`] is immutable and
//! carries cross-reference indices (block→txs, contract→txs, tx→swaps) so
//! every downstream module is a pure read.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModuleError;
use crate::units::{signed_wei_string, wei_string, SignedWei, Wei};

/// A 20-byte account or contract address, stored as normalized lowercase
/// `0x`-prefixed hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub struct Address(String);

impl Address {
    /// Parses and normalizes an address; accepts mixed-case hex input.
    pub fn parse(s: &str) -> Result<Self, String> {
        parse_hex_id(s, 40).map(Address)
    }

    /// Builds an address from raw bytes (used by the synthetic generator).
    pub fn from_bytes(bytes: &[u8; 20]) -> Self {
        Address(format!("0x{}", hex::encode(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Address {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        Address::parse(&s)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A 32-byte transaction hash, stored as normalized lowercase `0x`-hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub struct TxHash(String);

impl TxHash {
    pub fn parse(s: &str) -> Result<Self, String> {
        parse_hex_id(s, 64).map(TxHash)
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        TxHash(format!("0x{}", hex::encode(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TxHash {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        TxHash::parse(&s)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse_hex_id(s: &str, hex_len: usize) -> Result<String, String> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| format!("expected 0x-prefixed hex id, got {s:?}"))?;
    if body.len() != hex_len {
        return Err(format!(
            "expected {hex_len} hex chars after 0x, got {} in {s:?}",
            body.len()
        ));
    }
    if !body.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("non-hex character in id {s:?}"));
    }
    Ok(format!("0x{}", body.to_ascii_lowercase()))
}

/// Builder identity. Fee-recipient addresses that the registry cannot
/// attribute resolve to the reserved pseudo-builder [`BuilderId::proposer`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub struct BuilderId(String);

/// Reserved id for blocks whose fee recipient is not in the registry.
pub const PROPOSER_ID: &str = "proposer";

impl BuilderId {
    /// Validates a builder id: non-empty, printable, no CSV separators.
    pub fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("builder id must be non-empty".into());
        }
        if s.chars()
            .any(|c| c == ',' || c == '"' || c.is_control() || c.is_whitespace())
        {
            return Err(format!("builder id {s:?} contains separator or whitespace"));
        }
        Ok(BuilderId(s.to_string()))
    }

    /// The pseudo-builder used for unattributed fee recipients.
    pub fn proposer() -> Self {
        BuilderId(PROPOSER_ID.to_string())
    }

    pub fn is_proposer(&self) -> bool {
        self.0 == PROPOSER_ID
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for BuilderId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        BuilderId::parse(&s)
    }
}

impl fmt::Display for BuilderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-transaction MEV annotation carried in the optional `mev_label`
/// column of `txs.jsonl`; absent means [`MevLabel::None`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MevLabel {
    #[default]
    None,
    Sandwich,
    AtomicArb,
    Liquidation,
    Frontrun,
    Backrun,
}

impl MevLabel {
    pub fn is_labeled(self) -> bool {
        self != MevLabel::None
    }
}

/// Mechanism category recorded in `labels.csv`. Contracts without a row (or
/// with an empty / `unlabeled` mechanism column) are unlabeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Protocol,
    Atomic,
    NonAtomic,
    Other,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Protocol => "protocol",
            Mechanism::Atomic => "atomic",
            Mechanism::NonAtomic => "non_atomic",
            Mechanism::Other => "other",
        }
    }

    fn parse_column(s: &str) -> Result<Option<Self>, String> {
        match s {
            "" | "unlabeled" => Ok(None),
            "protocol" => Ok(Some(Mechanism::Protocol)),
            "atomic" => Ok(Some(Mechanism::Atomic)),
            "non_atomic" => Ok(Some(Mechanism::NonAtomic)),
            "other" => Ok(Some(Mechanism::Other)),
            _ => Err(format!("unknown mechanism {s:?}")),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One block header row.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub number: u64,
    /// UTC seconds.
    pub timestamp: i64,
    pub fee_recipient: Address,
    /// Bid paid to the proposer (b_B).
    pub bid: Wei,
    /// Builder resolved through the registry; `proposer` when unattributed.
    pub builder: BuilderId,
}

/// One confirmed transaction row.
#[derive(Debug, Clone, PartialEq)]
pub struct TxRecord {
    pub hash: TxHash,
    pub block: u64,
    pub index: u32,
    pub sender: Address,
    pub to: Address,
    pub gas_used: u64,
    pub priority_tip: Wei,
    /// Builder balance delta beyond the tip; the only way a transaction
    /// bribe can go negative (outgoing builder transfers).
    pub direct_bribe: SignedWei,
    pub swap_count: u32,
    /// Set by visibility marking: true iff the hash never appeared in the
    /// mempool file.
    pub is_private: bool,
    pub mev_label: MevLabel,
}

impl TxRecord {
    /// Transaction bribe d_t = priority_tip + direct_bribe.
    pub fn bribe(&self) -> SignedWei {
        self.priority_tip as SignedWei + self.direct_bribe
    }

    /// The revenue contribution max(d_t, 0).
    pub fn revenue_contribution(&self) -> Wei {
        self.bribe().max(0) as Wei
    }

    /// Whether the transaction performs at least one swap (and therefore
    /// belongs to an order flow).
    pub fn is_swap(&self) -> bool {
        self.swap_count > 0
    }
}

/// One decoded swap event row.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapRecord {
    pub tx: TxHash,
    pub pool: Address,
    pub token_in: Address,
    pub token_out: Address,
    pub amount_usd: f64,
}

/// Maps fee-recipient addresses to builder identities.
#[derive(Debug, Clone, PartialEq)]
pub struct BuilderRegistry {
    by_address: BTreeMap<Address, BuilderId>,
    names: BTreeMap<BuilderId, String>,
    proposer: BuilderId,
}

impl BuilderRegistry {
    pub fn new() -> Self {
        BuilderRegistry {
            by_address: BTreeMap::new(),
            names: BTreeMap::new(),
            proposer: BuilderId::proposer(),
        }
    }

    /// Registers one address for a builder. Returns an error message when
    /// the address is already claimed by a different builder.
    pub fn insert(
        &mut self,
        address: Address,
        builder: BuilderId,
        name: &str,
    ) -> Result<(), String> {
        if let Some(existing) = self.by_address.get(&address) {
            if *existing != builder {
                return Err(format!(
                    "address {address} claimed by both {existing} and {builder}"
                ));
            }
            return Err(format!("duplicate registry row for address {address}"));
        }
        self.names.entry(builder.clone()).or_insert_with(|| name.to_string());
        self.by_address.insert(address, builder);
        Ok(())
    }

    /// Resolves a fee recipient to its builder, or the `proposer`
    /// pseudo-builder when unattributed.
    pub fn resolve(&self, address: &Address) -> &BuilderId {
        self.by_address.get(address).unwrap_or(&self.proposer)
    }

    /// All attributed builder ids (excludes the proposer pseudo-builder),
    /// in sorted order.
    pub fn builder_ids(&self) -> impl Iterator<Item = &BuilderId> {
        self.names.keys()
    }

    pub fn display_name(&self, id: &BuilderId) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn address_count(&self) -> usize {
        self.by_address.len()
    }
}

/// Contract-level ground-truth labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSet {
    rows: BTreeMap<Address, LabelRow>,
}

#[derive(Debug, Clone, PartialEq)]
struct LabelRow {
    mechanism: Option<Mechanism>,
    known_eof: Option<bool>,
}

impl LabelSet {
    pub fn new() -> Self {
        LabelSet::default()
    }

    /// Adds a label row; errors on a duplicate contract (each contract has
    /// at most one mechanism label).
    pub fn insert(
        &mut self,
        contract: Address,
        mechanism: Option<Mechanism>,
        known_eof: Option<bool>,
    ) -> Result<(), String> {
        if self.rows.contains_key(&contract) {
            return Err(format!("duplicate label row for contract {contract}"));
        }
        self.rows.insert(contract, LabelRow { mechanism, known_eof });
        Ok(())
    }

    /// Mechanism label, `None` when the contract is unlabeled.
    pub fn mechanism(&self, contract: &Address) -> Option<Mechanism> {
        self.rows.get(contract).and_then(|r| r.mechanism)
    }

    /// Literature ground truth for EOF status; `None` when unknown.
    pub fn known_eof(&self, contract: &Address) -> Option<bool> {
        self.rows.get(contract).and_then(|r| r.known_eof)
    }

    /// All contracts carrying any label row, in address order.
    pub fn contracts(&self) -> impl Iterator<Item = &Address> {
        self.rows.keys()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Errors raised while loading a dataset.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing input file: {path}")]
    MissingFile { path: PathBuf },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {detail}")]
    SchemaViolation {
        file: String,
        line: u64,
        detail: String,
    },
    #[error("swap row references unknown transaction {tx_hash}")]
    DanglingReference { tx_hash: TxHash },
}

impl ModuleError for IngestError {
    fn module(&self) -> &'static str {
        "ingest"
    }

    fn code(&self) -> &'static str {
        match self {
            IngestError::MissingFile { .. } => "missing_file",
            IngestError::Io { .. } => "io",
            IngestError::SchemaViolation { .. } => "schema_violation",
            IngestError::DanglingReference { .. } => "dangling_reference",
        }
    }
}

/// Paths of the six input files.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub blocks: PathBuf,
    pub txs: PathBuf,
    pub swaps: PathBuf,
    pub mempool: PathBuf,
    pub builders: PathBuf,
    pub labels: PathBuf,
}

impl DatasetPaths {
    /// Conventional file names inside one dataset directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            blocks: dir.join("blocks.jsonl"),
            txs: dir.join("txs.jsonl"),
            swaps: dir.join("swaps.jsonl"),
            mempool: dir.join("mempool.txt"),
            builders: dir.join("builders.csv"),
            labels: dir.join("labels.csv"),
        }
    }
}

/// The fully loaded, immutable dataset with cross-reference indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    blocks: Vec<BlockRecord>,
    /// Sorted by (block, index).
    txs: Vec<TxRecord>,
    /// Sorted to group rows of the same transaction contiguously.
    swaps: Vec<SwapRecord>,
    /// block number → position in `blocks`.
    block_pos: BTreeMap<u64, usize>,
    /// Parallel to `blocks`: half-open range into `txs`.
    block_tx_ranges: Vec<(usize, usize)>,
    /// tx hash → position in `txs`.
    tx_pos: BTreeMap<TxHash, usize>,
    /// Parallel to `txs`: half-open range into `swaps`.
    tx_swap_ranges: Vec<(usize, usize)>,
    /// destination contract → positions in `txs`, ascending.
    contract_txs: BTreeMap<Address, Vec<usize>>,
    registry: BuilderRegistry,
    labels: LabelSet,
}

impl Dataset {
    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn txs(&self) -> &[TxRecord] {
        &self.txs
    }

    pub fn swaps(&self) -> &[SwapRecord] {
        &self.swaps
    }

    pub fn block_by_number(&self, number: u64) -> Option<&BlockRecord> {
        self.block_pos.get(&number).map(|&i| &self.blocks[i])
    }

    /// Transactions of one block in index order; empty for unknown blocks.
    pub fn txs_in_block(&self, number: u64) -> &[TxRecord] {
        match self.block_pos.get(&number) {
            Some(&i) => {
                let (start, end) = self.block_tx_ranges[i];
                &self.txs[start..end]
            }
            None => &[],
        }
    }

    pub fn tx_by_hash(&self, hash: &TxHash) -> Option<&TxRecord> {
        self.tx_pos.get(hash).map(|&i| &self.txs[i])
    }

    /// Swap rows of the transaction at `tx_index` (position in [`Self::txs`]).
    pub fn swaps_of_tx(&self, tx_index: usize) -> &[SwapRecord] {
        let (start, end) = self.tx_swap_ranges[tx_index];
        &self.swaps[start..end]
    }

    /// Positions (into [`Self::txs`]) of all transactions sent to `contract`.
    pub fn contract_tx_indices(&self, contract: &Address) -> Option<&[usize]> {
        self.contract_txs.get(contract).map(Vec::as_slice)
    }

    /// All destination contracts seen in the dataset, in address order.
    pub fn contracts(&self) -> impl Iterator<Item = &Address> {
        self.contract_txs.keys()
    }

    pub fn registry(&self) -> &BuilderRegistry {
        &self.registry
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }
}

/// Raw JSONL row shapes. Wei columns are decimal strings.
#[derive(Deserialize)]
struct RawBlock {
    number: u64,
    timestamp: i64,
    fee_recipient: Address,
    #[serde(with = "wei_string")]
    bid: Wei,
}

#[derive(Deserialize)]
struct RawTx {
    hash: TxHash,
    block: u64,
    index: u32,
    #[serde(rename = "from")]
    sender: Address,
    to: Address,
    gas_used: u64,
    #[serde(with = "wei_string")]
    priority_tip: Wei,
    #[serde(with = "signed_wei_string")]
    direct_bribe: SignedWei,
    swap_count: u32,
    #[serde(default)]
    mev_label: MevLabel,
}

#[derive(Deserialize)]
struct RawSwap {
    tx: TxHash,
    pool: Address,
    token_in: Address,
    token_out: Address,
    amount_usd: f64,
}

fn open_file(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IngestError::MissingFile { path: path.to_path_buf() }
        } else {
            IngestError::Io { path: path.to_path_buf(), source: e }
        }
    })
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads one JSONL file, tagging each parsed row with its 1-based line
/// number. Blank lines are skipped.
fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, IngestError> {
    let file = open_file(path)?;
    let label = file_label(path);
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str::<T>(&line).map_err(|e| IngestError::SchemaViolation {
            file: label.clone(),
            line: line_no,
            detail: e.to_string(),
        })?;
        rows.push((line_no, row));
    }
    Ok(rows)
}

fn load_builders(path: &Path) -> Result<BuilderRegistry, IngestError> {
    let file = open_file(path)?;
    let label = file_label(path);
    let mut rdr = csv::Reader::from_reader(file);
    let mut registry = BuilderRegistry::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_schema_error(&label, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let violation = |detail: String| IngestError::SchemaViolation {
            file: label.clone(),
            line,
            detail,
        };
        if record.len() != 3 {
            return Err(violation(format!("expected 3 columns, got {}", record.len())));
        }
        let address = Address::parse(&record[0]).map_err(&violation)?;
        let builder = BuilderId::parse(&record[1]).map_err(&violation)?;
        registry.insert(address, builder, &record[2]).map_err(&violation)?;
    }
    Ok(registry)
}

/// Loads a standalone label file (`contract,mechanism,known_eof` CSV), for
/// callers that need labels other than the dataset's own — ground-truth
/// overrides, externally curated training labels.
pub fn load_label_file(path: &Path) -> Result<LabelSet, IngestError> {
    let file = open_file(path)?;
    let label = file_label(path);
    let mut rdr = csv::Reader::from_reader(file);
    let mut labels = LabelSet::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_schema_error(&label, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let violation = |detail: String| IngestError::SchemaViolation {
            file: label.clone(),
            line,
            detail,
        };
        if record.len() != 3 {
            return Err(violation(format!("expected 3 columns, got {}", record.len())));
        }
        let contract = Address::parse(&record[0]).map_err(&violation)?;
        let mechanism = Mechanism::parse_column(record[1].trim()).map_err(&violation)?;
        let known_eof = match record[2].trim() {
            "" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => return Err(violation(format!("known_eof must be true/false/empty, got {other:?}"))),
        };
        labels.insert(contract, mechanism, known_eof).map_err(&violation)?;
    }
    Ok(labels)
}

fn csv_schema_error(file: &str, err: &csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    IngestError::SchemaViolation {
        file: file.to_string(),
        line,
        detail: err.to_string(),
    }
}

fn read_mempool(path: &Path) -> Result<BTreeSet<TxHash>, IngestError> {
    let file = open_file(path)?;
    let label = file_label(path);
    let mut hashes = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let hash = TxHash::parse(trimmed).map_err(|detail| IngestError::SchemaViolation {
            file: label.clone(),
            line: idx as u64 + 1,
            detail,
        })?;
        hashes.insert(hash);
    }
    Ok(hashes)
}

/// Loads all six input files, validates them, and assembles the indexed
/// dataset (including mempool visibility marking).
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset, IngestError> {
    let registry = load_builders(&paths.builders)?;
    let labels = load_label_file(&paths.labels)?;

    // Blocks: the file itself must be sorted by block number; that ordering
    // is an invariant of the format, not something we repair.
    let blocks_label = file_label(&paths.blocks);
    let mut blocks = Vec::new();
    let mut block_pos = BTreeMap::new();
    for (line, raw) in read_jsonl::<RawBlock>(&paths.blocks)? {
        let violation = |detail: String| IngestError::SchemaViolation {
            file: blocks_label.clone(),
            line,
            detail,
        };
        if raw.timestamp < 0 {
            return Err(violation(format!("negative timestamp {}", raw.timestamp)));
        }
        if let Some(last) = blocks.last() {
            let last: &BlockRecord = last;
            if raw.number <= last.number {
                return Err(violation(format!(
                    "block numbers must be strictly increasing: {} after {}",
                    raw.number, last.number
                )));
            }
            if raw.timestamp < last.timestamp {
                return Err(violation(format!(
                    "timestamps must be non-decreasing: {} after {}",
                    raw.timestamp, last.timestamp
                )));
            }
        }
        let builder = registry.resolve(&raw.fee_recipient).clone();
        block_pos.insert(raw.number, blocks.len());
        blocks.push(BlockRecord {
            number: raw.number,
            timestamp: raw.timestamp,
            fee_recipient: raw.fee_recipient,
            bid: raw.bid,
            builder,
        });
    }

    // Transactions: arbitrary file order; normalized to (block, index).
    let txs_label = file_label(&paths.txs);
    let mut txs = Vec::new();
    let mut seen_hash: BTreeMap<TxHash, u64> = BTreeMap::new();
    let mut seen_slot: BTreeSet<(u64, u32)> = BTreeSet::new();
    for (line, raw) in read_jsonl::<RawTx>(&paths.txs)? {
        let violation = |detail: String| IngestError::SchemaViolation {
            file: txs_label.clone(),
            line,
            detail,
        };
        if !block_pos.contains_key(&raw.block) {
            return Err(violation(format!(
                "transaction {} references unknown block {}",
                raw.hash, raw.block
            )));
        }
        if raw.gas_used == 0 {
            return Err(violation(format!("transaction {} has gas_used = 0", raw.hash)));
        }
        if let Some(first) = seen_hash.insert(raw.hash.clone(), line) {
            return Err(violation(format!(
                "duplicate transaction hash {} (first seen on line {first})",
                raw.hash
            )));
        }
        if !seen_slot.insert((raw.block, raw.index)) {
            return Err(violation(format!(
                "duplicate index_in_block {} within block {}",
                raw.index, raw.block
            )));
        }
        txs.push(TxRecord {
            hash: raw.hash,
            block: raw.block,
            index: raw.index,
            sender: raw.sender,
            to: raw.to,
            gas_used: raw.gas_used,
            priority_tip: raw.priority_tip,
            direct_bribe: raw.direct_bribe,
            swap_count: raw.swap_count,
            is_private: false,
            mev_label: raw.mev_label,
        });
    }
    txs.sort_unstable_by_key(|t| (t.block, t.index));

    let mut tx_pos = BTreeMap::new();
    for (i, tx) in txs.iter().enumerate() {
        tx_pos.insert(tx.hash.clone(), i);
    }

    // Per-block tx ranges over the sorted vector.
    let mut block_tx_ranges = vec![(0usize, 0usize); blocks.len()];
    {
        let mut i = 0;
        while i < txs.len() {
            let block = txs[i].block;
            let start = i;
            while i < txs.len() && txs[i].block == block {
                i += 1;
            }
            block_tx_ranges[block_pos[&block]] = (start, i);
        }
        // Blocks without txs keep an empty range; make the ranges
        // well-formed rather than (0, 0) aliases into foreign blocks.
        let mut cursor = 0;
        for (bi, _) in blocks.iter().enumerate() {
            let (start, end) = block_tx_ranges[bi];
            if start == 0 && end == 0 {
                block_tx_ranges[bi] = (cursor, cursor);
            } else {
                cursor = end;
            }
        }
    }

    // Swaps: every row must reference a known transaction.
    let mut swaps = Vec::new();
    let swaps_label = file_label(&paths.swaps);
    for (line, raw) in read_jsonl::<RawSwap>(&paths.swaps)? {
        let violation = |detail: String| IngestError::SchemaViolation {
            file: swaps_label.clone(),
            line,
            detail,
        };
        if !tx_pos.contains_key(&raw.tx) {
            return Err(IngestError::DanglingReference { tx_hash: raw.tx });
        }
        if raw.token_in == raw.token_out {
            return Err(violation(format!(
                "token_in equals token_out ({}) in swap of tx {}",
                raw.token_in, raw.tx
            )));
        }
        if !raw.amount_usd.is_finite() || raw.amount_usd < 0.0 {
            return Err(violation(format!(
                "amount_usd must be a non-negative decimal, got {}",
                raw.amount_usd
            )));
        }
        swaps.push(SwapRecord {
            tx: raw.tx,
            pool: raw.pool,
            token_in: raw.token_in,
            token_out: raw.token_out,
            amount_usd: raw.amount_usd,
        });
    }
    // Group swap rows by transaction position, preserving file order within
    // one transaction (stable sort).
    swaps.sort_by_key(|s| tx_pos[&s.tx]);

    let mut tx_swap_ranges = vec![(0usize, 0usize); txs.len()];
    {
        let mut i = 0;
        while i < swaps.len() {
            let pos = tx_pos[&swaps[i].tx];
            let start = i;
            while i < swaps.len() && tx_pos[&swaps[i].tx] == pos {
                i += 1;
            }
            tx_swap_ranges[pos] = (start, i);
        }
        let mut cursor = 0;
        for range in tx_swap_ranges.iter_mut() {
            if range.0 == 0 && range.1 == 0 {
                *range = (cursor, cursor);
            } else {
                cursor = range.1;
            }
        }
    }

    let mut contract_txs: BTreeMap<Address, Vec<usize>> = BTreeMap::new();
    for (i, tx) in txs.iter().enumerate() {
        contract_txs.entry(tx.to.clone()).or_default().push(i);
    }

    let dataset = Dataset {
        blocks,
        txs,
        swaps,
        block_pos,
        block_tx_ranges,
        tx_pos,
        tx_swap_ranges,
        contract_txs,
        registry,
        labels,
    };
    mark_visibility(dataset, &paths.mempool)
}

/// Re-marks transaction visibility from a mempool hash file: `is_private`
/// becomes true exactly for on-chain transactions absent from the set.
/// Hashes in the file that match no transaction are ignored.
pub fn mark_visibility(mut dataset: Dataset, mempool: &Path) -> Result<Dataset, IngestError> {
    let seen = read_mempool(mempool)?;
    for tx in dataset.txs.iter_mut() {
        tx.is_private = !seen.contains(&tx.hash);
    }
    Ok(dataset)
}
