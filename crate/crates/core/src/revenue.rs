//! Per-block builder economics.
//!
//! A builder's revenue from block B is the sum of the non-negative
//! per-transaction bribes, R_B = Σ max(d_t, 0), where d_t is the priority
//! tip plus the direct bribe of transaction t. Negative deltas (outgoing
//! builder transfers) contribute nothing to revenue but stay visible to the
//! dependency-ratio diagnostics through the profit column: profit = R_B − b_B
//! with b_B the bid paid to the proposer, and may well be negative.

use thiserror::Error;

use crate::error::ModuleError;
use crate::ingest::{BuilderId, Dataset};
use crate::units::{SignedWei, Wei};

/// Revenue, bid, and profit of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEconomics {
    pub block: u64,
    pub builder: BuilderId,
    /// R_B = Σ max(d_t, 0) over the block's transactions.
    pub revenue: Wei,
    /// b_B, the bid paid to the proposer.
    pub bid: Wei,
    /// R_B − b_B; negative when the builder overbid its revenue.
    pub profit: SignedWei,
}

#[derive(Debug, Error)]
pub enum RevenueError {
    #[error("unknown block {0}")]
    UnknownBlock(u64),
}

impl ModuleError for RevenueError {
    fn module(&self) -> &'static str {
        "revenue"
    }

    fn code(&self) -> &'static str {
        match self {
            RevenueError::UnknownBlock(_) => "unknown_block",
        }
    }
}

/// Computes revenue, bid, and profit for one block.
pub fn block_economics(dataset: &Dataset, block_number: u64) -> Result<BlockEconomics, RevenueError> {
    let block = dataset
        .block_by_number(block_number)
        .ok_or(RevenueError::UnknownBlock(block_number))?;
    let revenue: Wei = dataset
        .txs_in_block(block_number)
        .iter()
        .map(|t| t.revenue_contribution())
        .sum();
    Ok(BlockEconomics {
        block: block_number,
        builder: block.builder.clone(),
        revenue,
        bid: block.bid,
        profit: revenue as SignedWei - block.bid as SignedWei,
    })
}

/// Total trading-related revenue: Σ max(d_t, 0) over all swap transactions
/// (swap_count > 0) in the dataset.
pub fn trading_revenue_total(dataset: &Dataset) -> Wei {
    dataset
        .txs()
        .iter()
        .filter(|t| t.is_swap())
        .map(|t| t.revenue_contribution())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_dataset, DatasetPaths};
    use std::io::Write as _;
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

    /// One block (bid 4) with bribes {+3, −1, +2}; only the +2 tx swaps.
    fn fixture(dir: &Path) {
        write_file(
            dir,
            "blocks.jsonl",
            &format!(
                "{}\n{}\n",
                serde_json::json!({"number": 10, "timestamp": 100, "fee_recipient": addr(0xAA), "bid": "4"}),
                serde_json::json!({"number": 11, "timestamp": 112, "fee_recipient": addr(0xAA), "bid": "0"}),
            ),
        );
        let tx = |h: u8, idx: u32, tip: &str, bribe: &str, swaps: u32| {
            serde_json::json!({"hash": txh(h), "block": 10, "index": idx, "from": addr(1), "to": addr(2),
                "gas_used": 21000, "priority_tip": tip, "direct_bribe": bribe, "swap_count": swaps})
            .to_string()
        };
        write_file(
            dir,
            "txs.jsonl",
            &format!(
                "{}\n{}\n{}\n",
                tx(1, 0, "3", "0", 0),
                tx(2, 1, "0", "-1", 0),
                tx(3, 2, "0", "2", 1)
            ),
        );
        write_file(dir, "swaps.jsonl", "");
        write_file(dir, "mempool.txt", "");
        write_file(dir, "builders.csv", "address,builder_id,name\n");
        write_file(dir, "labels.csv", "contract,mechanism,known_eof\n");
    }

    #[test]
    fn revenue_clamps_negative_deltas() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let econ = block_economics(&ds, 10).unwrap();
        assert_eq!(econ.revenue, 5); // 3 + 0 + 2, the −1 clamps to zero
        assert_eq!(econ.bid, 4);
        assert_eq!(econ.profit, 1);
        assert!(econ.builder.is_proposer());
    }

    #[test]
    fn empty_block_has_zero_economics() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let econ = block_economics(&ds, 11).unwrap();
        assert_eq!(econ.revenue, 0);
        assert_eq!(econ.profit, 0);
    }

    #[test]
    fn unknown_block_errors() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let err = block_economics(&ds, 999).unwrap_err();
        assert_eq!(err.code(), "unknown_block");
    }

    #[test]
    fn trading_revenue_counts_swap_txs_only() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        // Only the swap_count=1 tx (bribe +2) is trading-related.
        assert_eq!(trading_revenue_total(&ds), 2);
    }

    #[test]
    fn adding_positive_tx_never_decreases_revenue() {
        // Monotonicity over the clamped sum: max(d,0) terms are ≥ 0, so a
        // d > 0 tx strictly increases the block sum.
        let base: Wei = [3i128, -1, 2].iter().map(|d| d.max(&0).unsigned_abs()).sum();
        let extended: Wei = [3i128, -1, 2, 7].iter().map(|d| d.max(&0).unsigned_abs()).sum();
        assert!(extended > base);
    }
}
