//! Exclusivity dependence ratios of block profits.
//!
//! For a block with profit π = R − bid and EOF bribe β (the revenue
//! contributed by swap transactions whose destination contract is in the
//! exclusive-order-flow set), the exclusivity dependence ratio EDR = β/π
//! measures how much of the builder's margin rests on exclusive flows.
//! Blocks are bucketed into six fixed bins:
//!
//! ```text
//! (−∞, 0)   [0, 0.5)   [0.5, 1)   [1, 10)   [10, 100)   [100, +∞)
//! ```
//!
//! Unprofitable blocks (π < 0) land in `(−∞, 0)` regardless of β. Zero
//! profit makes the ratio infinite when β > 0 (binned `[100, +∞)`) and
//! vacuously zero when β = 0 (binned `[0, 0.5)`). For π > 0 the bin is
//! decided by exact integer cross-multiplication in wei — no float ratio
//! ever decides a boundary, so β/π = 0.5 lands in `[0.5, 1)` exactly.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::error::ModuleError;
use crate::ingest::{Address, BuilderId, Dataset};
use crate::revenue::{block_economics, RevenueError};
use crate::units::Wei;

/// The six EDR bins, in ascending ratio order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdrBin {
    /// π < 0: the block lost money outright.
    Negative,
    /// 0 ≤ β/π < 0.5.
    ZeroToHalf,
    /// 0.5 ≤ β/π < 1.
    HalfToOne,
    /// 1 ≤ β/π < 10.
    OneToTen,
    /// 10 ≤ β/π < 100.
    TenToHundred,
    /// β/π ≥ 100, including β > 0 at π = 0.
    HundredPlus,
}

impl EdrBin {
    /// All bins in histogram order.
    pub const ALL: [EdrBin; 6] = [
        EdrBin::Negative,
        EdrBin::ZeroToHalf,
        EdrBin::HalfToOne,
        EdrBin::OneToTen,
        EdrBin::TenToHundred,
        EdrBin::HundredPlus,
    ];

    /// Interval label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            EdrBin::Negative => "(-inf,0)",
            EdrBin::ZeroToHalf => "[0,0.5)",
            EdrBin::HalfToOne => "[0.5,1)",
            EdrBin::OneToTen => "[1,10)",
            EdrBin::TenToHundred => "[10,100)",
            EdrBin::HundredPlus => "[100,+inf)",
        }
    }

    /// Index into [`EdrBin::ALL`]; orders bins from negative to highest.
    pub fn position(self) -> usize {
        EdrBin::ALL.iter().position(|&b| b == self).expect("bin is in ALL")
    }
}

/// One block's EDR decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct EdrObservation {
    pub block: u64,
    pub builder: BuilderId,
    /// π = R − bid, signed wei.
    pub profit: i128,
    /// β: revenue from swap txs whose contract is in the EOF set, wei.
    pub eof_bribe: Wei,
    /// β/π as an extended real (+∞ at π = 0 with β > 0). Reporting value
    /// only — bin boundaries are decided in integer arithmetic.
    pub edr: f64,
    pub bin: EdrBin,
}

/// Per-builder bin counts plus the pooled all-blocks row.
#[derive(Debug, Clone, PartialEq)]
pub struct EdrHistogram {
    /// One row per builder that produced at least one block (the
    /// `proposer` pseudo-builder included).
    pub rows: BTreeMap<BuilderId, EdrRow>,
    /// All blocks pooled together.
    pub global: EdrRow,
}

impl EdrHistogram {
    /// One builder's row; errors if the builder produced no blocks.
    pub fn builder_row(&self, builder: &BuilderId) -> Result<&EdrRow, EdrError> {
        self.rows
            .get(builder)
            .ok_or_else(|| EdrError::NoBlocks { builder: builder.clone() })
    }
}

/// Bin counts and fractions for one builder (or the pooled row).
#[derive(Debug, Clone, PartialEq)]
pub struct EdrRow {
    pub blocks: u64,
    /// Counts indexed in [`EdrBin::ALL`] order.
    pub counts: [u64; 6],
    /// `counts / blocks` per bin.
    pub fractions: [f64; 6],
}

impl EdrRow {
    fn from_counts(counts: [u64; 6]) -> Self {
        let blocks: u64 = counts.iter().sum();
        let fractions = counts.map(|c| c as f64 / blocks as f64);
        EdrRow { blocks, counts, fractions }
    }

    /// Count in one bin.
    pub fn count(&self, bin: EdrBin) -> u64 {
        self.counts[bin.position()]
    }

    /// Fraction in one bin.
    pub fn fraction(&self, bin: EdrBin) -> f64 {
        self.fractions[bin.position()]
    }
}

#[derive(Debug, Error)]
pub enum EdrError {
    #[error("block {number} is not in the dataset")]
    UnknownBlock { number: u64 },
    #[error("builder {builder} produced no blocks")]
    NoBlocks { builder: BuilderId },
}

impl ModuleError for EdrError {
    fn module(&self) -> &'static str {
        "edr"
    }

    fn code(&self) -> &'static str {
        match self {
            EdrError::UnknownBlock { .. } => "unknown_block",
            EdrError::NoBlocks { .. } => "no_blocks",
        }
    }
}

/// Bins a (profit, EOF bribe) pair without ever forming the float ratio.
///
/// For π > 0 each boundary β/π < c is decided as β·q < π·p with c = p/q in
/// lowest integer terms, which is exact in 128-bit arithmetic for any
/// realistic wei magnitudes.
pub fn edr_bin(profit: i128, eof_bribe: Wei) -> EdrBin {
    if profit < 0 {
        return EdrBin::Negative;
    }
    if profit == 0 {
        return if eof_bribe == 0 { EdrBin::ZeroToHalf } else { EdrBin::HundredPlus };
    }
    let profit = profit.unsigned_abs();
    debug_assert!(profit < Wei::MAX / 200 && eof_bribe < Wei::MAX / 200);
    if 2 * eof_bribe < profit {
        EdrBin::ZeroToHalf
    } else if eof_bribe < profit {
        EdrBin::HalfToOne
    } else if eof_bribe < 10 * profit {
        EdrBin::OneToTen
    } else if eof_bribe < 100 * profit {
        EdrBin::TenToHundred
    } else {
        EdrBin::HundredPlus
    }
}

/// Computes one block's EDR observation against an EOF set.
pub fn edr_for_block(
    dataset: &Dataset,
    number: u64,
    eofs: &BTreeSet<Address>,
) -> Result<EdrObservation, EdrError> {
    let econ = block_economics(dataset, number).map_err(|e| match e {
        RevenueError::UnknownBlock(number) => EdrError::UnknownBlock { number },
    })?;
    let eof_bribe: Wei = dataset
        .txs_in_block(number)
        .iter()
        .filter(|tx| tx.is_swap() && eofs.contains(&tx.to))
        .map(|tx| tx.revenue_contribution())
        .sum();
    Ok(EdrObservation {
        block: number,
        builder: econ.builder,
        profit: econ.profit,
        eof_bribe,
        edr: edr_value(econ.profit, eof_bribe),
        bin: edr_bin(econ.profit, eof_bribe),
    })
}

/// The ratio β/π as an extended real, using the limit convention at π = 0.
fn edr_value(profit: i128, eof_bribe: Wei) -> f64 {
    if profit == 0 {
        return if eof_bribe == 0 { 0.0 } else { f64::INFINITY };
    }
    eof_bribe as f64 / profit as f64
}

/// Builds the per-builder EDR histogram over every block in the dataset.
///
/// Every builder with at least one block gets a row (unattributed blocks
/// under `proposer`), and the `global` row pools all blocks, so each block
/// is counted exactly once per row it belongs to.
pub fn edr_histogram(dataset: &Dataset, eofs: &BTreeSet<Address>) -> EdrHistogram {
    let mut per_builder: BTreeMap<BuilderId, [u64; 6]> = BTreeMap::new();
    let mut global = [0u64; 6];
    for block in dataset.blocks() {
        let obs = edr_for_block(dataset, block.number, eofs)
            .expect("iterated blocks exist in the dataset");
        let slot = obs.bin.position();
        per_builder.entry(obs.builder).or_insert([0; 6])[slot] += 1;
        global[slot] += 1;
    }
    EdrHistogram {
        rows: per_builder.into_iter().map(|(b, c)| (b, EdrRow::from_counts(c))).collect(),
        global: EdrRow::from_counts(global),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_dataset, DatasetPaths};
    use std::io::Write;
    use std::path::Path;

    #[test]
    fn negative_profit_always_bins_negative() {
        assert_eq!(edr_bin(-1, 0), EdrBin::Negative);
        assert_eq!(edr_bin(-1, u128::MAX / 1000), EdrBin::Negative);
    }

    #[test]
    fn zero_profit_split_on_bribe() {
        assert_eq!(edr_bin(0, 0), EdrBin::ZeroToHalf);
        assert_eq!(edr_bin(0, 1), EdrBin::HundredPlus);
    }

    #[test]
    fn boundaries_are_exact_in_integer_arithmetic() {
        // β/π = 0.5 exactly → [0.5, 1), not [0, 0.5).
        assert_eq!(edr_bin(2, 1), EdrBin::HalfToOne);
        // One wei below the boundary stays in [0, 0.5).
        assert_eq!(edr_bin(2_000_000_000_000_000_000, 999_999_999_999_999_999), EdrBin::ZeroToHalf);
        // β/π = 1 exactly → [1, 10).
        assert_eq!(edr_bin(7, 7), EdrBin::OneToTen);
        assert_eq!(edr_bin(7, 6), EdrBin::HalfToOne);
        // β/π = 10 and 100 exactly.
        assert_eq!(edr_bin(3, 30), EdrBin::TenToHundred);
        assert_eq!(edr_bin(3, 29), EdrBin::OneToTen);
        assert_eq!(edr_bin(3, 300), EdrBin::HundredPlus);
        assert_eq!(edr_bin(3, 299), EdrBin::TenToHundred);
    }

    #[test]
    fn bins_partition_the_ratio_line() {
        // Every (π, β) pair lands in exactly one bin, and the bin is
        // monotone in β for fixed positive π.
        let profits: [i128; 4] = [-5, 0, 3, 1_000_000_000];
        for &p in &profits {
            for beta in 0..400u128 {
                let bin = edr_bin(p, beta);
                assert!(EdrBin::ALL.contains(&bin));
                if p > 0 && beta > 0 {
                    assert!(edr_bin(p, beta - 1) <= bin, "non-monotone at π={p}, β={beta}");
                }
            }
        }
    }

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

    /// One attributed block (number 1, bid 1 wei) holding an EOF swap tx
    /// (tip 2), a non-EOF swap tx (tip 1), and a non-swap tx to the EOF
    /// contract (tip 1); plus an unattributed block with one losing tx.
    fn fixture(dir: &Path) {
        write_file(
            dir,
            "blocks.jsonl",
            &[
                serde_json::json!({"number": 1, "timestamp": 0, "fee_recipient": addr(0xAA), "bid": "1"}),
                serde_json::json!({"number": 2, "timestamp": 12, "fee_recipient": addr(0xEE), "bid": "5"}),
            ]
            .map(|v| v.to_string())
            .join("\n"),
        );
        let tx = |h: u8, block: u64, idx: u32, to: u8, tip: &str, bribe: &str, swaps: u32| {
            serde_json::json!({"hash": txh(h), "block": block, "index": idx, "from": addr(1), "to": addr(to),
                "gas_used": 21000, "priority_tip": tip, "direct_bribe": bribe, "swap_count": swaps})
            .to_string()
        };
        write_file(
            dir,
            "txs.jsonl",
            &[
                tx(1, 1, 0, 50, "2", "0", 1), // EOF swap: β += 2
                tx(2, 1, 1, 60, "1", "0", 1), // non-EOF swap
                tx(3, 1, 2, 50, "1", "0", 0), // non-swap to EOF contract: excluded from β
                tx(4, 2, 0, 60, "1", "0", 1), // block 2 revenue 1 < bid 5 → π = −4
            ]
            .join("\n"),
        );
        write_file(dir, "swaps.jsonl", "");
        write_file(dir, "mempool.txt", "");
        write_file(dir, "builders.csv", &format!("address,builder_id,name\n{},alpha,Alpha\n", addr(0xAA)));
        write_file(dir, "labels.csv", "contract,mechanism,known_eof\n");
    }

    fn eof_set() -> BTreeSet<Address> {
        BTreeSet::from([Address::parse(&addr(50)).unwrap()])
    }

    #[test]
    fn eof_bribe_counts_only_swap_txs_to_eof_contracts() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let obs = edr_for_block(&ds, 1, &eof_set()).unwrap();
        // R = 2+1+1 = 4, bid 1 → π = 3; β = 2 (the EOF swap only).
        assert_eq!(obs.profit, 3);
        assert_eq!(obs.eof_bribe, 2);
        // 2/3 ∈ [0.5, 1).
        assert_eq!(obs.bin, EdrBin::HalfToOne);
        assert!((obs.edr - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn edr_value_diverges_at_zero_profit() {
        assert_eq!(edr_value(0, 5), f64::INFINITY);
        assert_eq!(edr_value(0, 0), 0.0);
        assert_eq!(edr_value(4, 6), 1.5);
    }

    #[test]
    fn unattributed_block_lands_under_proposer() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let obs = edr_for_block(&ds, 2, &eof_set()).unwrap();
        assert_eq!(obs.builder, BuilderId::proposer());
        assert_eq!(obs.profit, -4);
        assert_eq!(obs.bin, EdrBin::Negative);
    }

    #[test]
    fn unknown_block_errors() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let err = edr_for_block(&ds, 99, &eof_set()).unwrap_err();
        assert_eq!(err.code(), "unknown_block");
        assert_eq!(err.module(), "edr");
    }

    #[test]
    fn histogram_rows_partition_blocks() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path());
        let ds = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        let hist = edr_histogram(&ds, &eof_set());

        assert_eq!(hist.rows.len(), 2); // alpha + proposer
        let alpha = &hist.rows[&BuilderId::parse("alpha").unwrap()];
        assert_eq!(alpha.blocks, 1);
        assert_eq!(alpha.count(EdrBin::HalfToOne), 1);
        let proposer = &hist.rows[&BuilderId::proposer()];
        assert_eq!(proposer.count(EdrBin::Negative), 1);
        assert!(hist.builder_row(&BuilderId::parse("alpha").unwrap()).is_ok());
        let err = hist.builder_row(&BuilderId::parse("ghost").unwrap()).unwrap_err();
        assert_eq!(err.code(), "no_blocks");

        // Each row's counts sum to its block total; the global row pools
        // every per-builder row.
        for row in hist.rows.values() {
            assert_eq!(row.counts.iter().sum::<u64>(), row.blocks);
            let fsum: f64 = row.fractions.iter().sum();
            assert!((fsum - 1.0).abs() < 1e-12);
        }
        assert_eq!(hist.global.blocks, 2);
        for bin in EdrBin::ALL {
            let split: u64 = hist.rows.values().map(|r| r.count(bin)).sum();
            assert_eq!(split, hist.global.count(bin));
        }
    }
}
