//! `flowscope` — batch analytics over file-based builder-market datasets.
//!
//! One subcommand per analysis stage: dataset synthesis, block revenue,
//! order-flow assembly, exclusivity scoring, EOF dependency histograms,
//! feature extraction, forest training/classification, the top-K mechanism
//! pipeline, market concentration reports, and power-law tail fits.
//!
//! Conventions shared by every subcommand:
//! - outputs are deterministic: rows sorted by documented keys, floats in
//!   shortest round-trip notation, no timestamps;
//! - wei quantities are decimal strings (JSON) or integer columns (CSV);
//! - module errors exit 2 with one JSON line on stderr,
//!   `{"error":{"module":…,"code":…,"message":…}}`;
//! - usage errors exit 64.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowscope_core::concentration::{
    categorize_builders, eof_share_correlation, hhi_series, phase_composition,
    ConcentrationError, Phases,
};
use flowscope_core::edr::{edr_histogram, EdrBin};
use flowscope_core::error::ModuleError;
use flowscope_core::exclusivity::{
    classify_eof, exclusivity_score, market_series, optimize_threshold, ExclusivityScore,
};
use flowscope_core::features::{extract_all, extract_features_with_min, DEFAULT_MIN_TXS};
use flowscope_core::flows::{build_flows, FlowTable, Granularity};
use flowscope_core::forest::{
    feature_importance, predict, train_forest, Forest, ForestClass, TrainReport, TrainingExample,
};
use flowscope_core::ingest::{
    load_dataset, load_label_file, Address, Dataset, DatasetPaths, LabelSet, Mechanism,
};
use flowscope_core::pipeline::{classify_top_flows, mechanism_counts, MechanismClass, Origin};
use flowscope_core::revenue::{block_economics, trading_revenue_total};
use flowscope_core::synth::{generate, ScenarioConfig};
use flowscope_core::tailfit::{concentration_summary, fit_power_law};
use flowscope_core::units::wei_to_eth;

const EXIT_MODULE_ERROR: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "flowscope",
    version,
    about = "Builder-market analytics over file-based datasets"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Outputs
    /// are identical for any setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress informational stdout; errors still go to stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a ground-truth manifest.
    Synth {
        /// Scenario TOML.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the dataset files and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Block revenue, bids, and profits.
    Revenue {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Report a single block instead of the dataset summary.
        #[arg(long)]
        block: Option<u64>,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble order flows and their bribe matrices.
    Flows {
        #[arg(long)]
        data: PathBuf,
        /// Epoch granularity: weekly or daily.
        #[arg(long, default_value = "weekly")]
        granularity: String,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score flow exclusivity and optionally sweep the EOF threshold.
    Exclusivity {
        #[arg(long)]
        data: PathBuf,
        /// Output CSV (contract,label,total_score,total_bribe_eth,avg_kl,active_weeks).
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth label CSV; defaults to the dataset's labels.csv.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Also write the discovered EOF contracts (one per line).
        #[arg(long)]
        eof_out: Option<PathBuf>,
    },
    /// Per-builder EOF dependency histograms.
    Edr {
        #[arg(long)]
        data: PathBuf,
        /// EOF contract list (one address per line; `contract` header allowed).
        #[arg(long)]
        eof: PathBuf,
        /// Output CSV (builder,blocks,bin,count,fraction).
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-contract feature vectors.
    Features {
        #[arg(long)]
        data: PathBuf,
        /// Output CSV (contract + nine feature columns).
        #[arg(long)]
        out: PathBuf,
        /// Transactions required for a full-confidence vector.
        #[arg(long, default_value_t = DEFAULT_MIN_TXS)]
        min_txs: u64,
    },
    /// Train the non-atomic classifier from labeled contracts.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Label CSV; defaults to the dataset's labels.csv.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Training seed; (data, seed) fixes the forest bit-for-bit.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output forest JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every order-flow contract with a trained forest.
    Classify {
        #[arg(long)]
        data: PathBuf,
        /// Forest JSON produced by `train`.
        #[arg(long)]
        forest: PathBuf,
        /// Output CSV (contract,prediction,votes,low_confidence).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_TXS)]
        min_txs: u64,
    },
    /// Rank the top-K flows by bribe volume and assign mechanisms.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        /// Number of top flows to classify (capped at the flow count).
        #[arg(long, default_value_t = flowscope_core::pipeline::DEFAULT_TOP_K)]
        k: usize,
        /// Reuse a trained forest instead of training from the dataset labels.
        #[arg(long)]
        forest: Option<PathBuf>,
        /// Training seed when no forest file is given.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output CSV (rank,contract,total_bribe,mechanism,origin,votes,low_confidence).
        #[arg(long)]
        out: PathBuf,
    },
    /// Concentration report: HHI, builder categories, phase mix, correlations.
    MarketReport {
        #[arg(long)]
        data: PathBuf,
        /// Phase boundary TOML (`starts = ["YYYY-MM-DD", …]`); defaults to
        /// the built-in boundaries.
        #[arg(long)]
        phases: Option<PathBuf>,
        /// Output report JSON; plot CSVs land next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Power-law tail fit over per-flow bribe totals.
    Tailfit {
        #[arg(long)]
        data: PathBuf,
        /// Restrict to flows whose label matches: protocol, atomic,
        /// non_atomic, other, or any.
        #[arg(long, default_value = "any")]
        mechanism: String,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failed run: module-qualified code plus human-readable message.
#[derive(Debug)]
struct Failure {
    module: &'static str,
    code: &'static str,
    message: String,
}

impl Failure {
    fn cli(code: &'static str, message: impl Into<String>) -> Self {
        Failure { module: "cli", code, message: message.into() }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Failure::cli("io", format!("{}: {err}", path.display()))
    }
}

impl<E: ModuleError> From<E> for Failure {
    fn from(err: E) -> Self {
        Failure { module: err.module(), code: err.code(), message: err.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if threads > 0 {
            // Ignore "already initialized": only reachable in-process tests.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let json = serde_json::json!({
                "error": {
                    "module": failure.module,
                    "code": failure.code,
                    "message": failure.message,
                }
            });
            eprintln!("{json}");
            ExitCode::from(EXIT_MODULE_ERROR)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth { config, out } => cmd_synth(config, out, cli.quiet),
        Command::Revenue { data, block, out } => cmd_revenue(data, *block, out.as_deref()),
        Command::Flows { data, granularity, out } => cmd_flows(data, granularity, out),
        Command::Exclusivity { data, out, ground_truth, eof_out } => {
            cmd_exclusivity(data, out, ground_truth.as_deref(), eof_out.as_deref(), cli.quiet)
        }
        Command::Edr { data, eof, out } => cmd_edr(data, eof, out),
        Command::Features { data, out, min_txs } => cmd_features(data, out, *min_txs),
        Command::Train { data, labels, seed, out } => {
            cmd_train(data, labels.as_deref(), *seed, out, cli.quiet)
        }
        Command::Classify { data, forest, out, min_txs } => {
            cmd_classify(data, forest, out, *min_txs)
        }
        Command::Pipeline { data, k, forest, seed, out } => {
            cmd_pipeline(data, *k, forest.as_deref(), *seed, out, cli.quiet)
        }
        Command::MarketReport { data, phases, out } => {
            cmd_market_report(data, phases.as_deref(), out)
        }
        Command::Tailfit { data, mechanism, out } => cmd_tailfit(data, mechanism, out),
    }
}

// ---------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------

fn load(dir: &Path) -> Result<Dataset, Failure> {
    Ok(load_dataset(&DatasetPaths::in_dir(dir))?)
}

fn write_text(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content).map_err(|e| Failure::io(path, e))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

/// Reads an EOF contract list: one hex address per line, blank lines
/// skipped, an optional leading `contract` header tolerated.
fn read_eof_list(path: &Path) -> Result<BTreeSet<Address>, Failure> {
    let mut eofs = BTreeSet::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("contract")) {
            continue;
        }
        let address = Address::parse(line).map_err(|detail| {
            Failure::cli(
                "invalid_argument",
                format!("{} line {}: {detail}", path.display(), i + 1),
            )
        })?;
        eofs.insert(address);
    }
    Ok(eofs)
}

/// Scores every flow of the weekly table against the market series.
fn score_all_flows(dataset: &Dataset) -> Result<(FlowTable, Vec<ExclusivityScore>), Failure> {
    let table = build_flows(dataset, Granularity::Weekly);
    let markets = market_series(dataset, table.epochs);
    let mut scores = Vec::with_capacity(table.flows.len());
    for flow in table.flows.values() {
        scores.push(exclusivity_score(flow, &markets)?);
    }
    Ok((table, scores))
}

fn info(quiet: bool, message: impl AsRef<str>) {
    if !quiet {
        println!("{}", message.as_ref());
    }
}

// ---------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------

fn cmd_synth(config: &Path, out: &Path, quiet: bool) -> Result<(), Failure> {
    let scenario = ScenarioConfig::load(config)?;
    let manifest = generate(&scenario, out)?;
    info(
        quiet,
        format!(
            "wrote {} blocks / {} txs across {} weeks to {}",
            manifest.blocks,
            manifest.txs,
            manifest.weeks,
            out.display()
        ),
    );
    Ok(())
}

fn cmd_revenue(data: &Path, block: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let ds = load(data)?;
    let json = match block {
        Some(number) => {
            let econ = block_economics(&ds, number)?;
            serde_json::json!({
                "block": econ.block,
                "builder": econ.builder.as_str(),
                "revenue": econ.revenue.to_string(),
                "bid": econ.bid.to_string(),
                "profit": econ.profit.to_string(),
            })
        }
        None => {
            let total: u128 = ds
                .blocks()
                .iter()
                .map(|b| block_economics(&ds, b.number).expect("iterated block exists").revenue)
                .sum();
            serde_json::json!({
                "blocks": ds.blocks().len(),
                "block_revenue_total": total.to_string(),
                "trading_revenue_total": trading_revenue_total(&ds).to_string(),
            })
        }
    };
    let text = serde_json::to_string_pretty(&json).expect("report serializes") + "\n";
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_flows(data: &Path, granularity: &str, out: &Path) -> Result<(), Failure> {
    let granularity: Granularity = granularity
        .parse()
        .map_err(|detail: String| Failure::cli("invalid_argument", detail))?;
    let ds = load(data)?;
    let table = build_flows(&ds, granularity);
    let flows: Vec<serde_json::Value> = table
        .flows
        .values()
        .map(|flow| {
            let cells: BTreeMap<String, BTreeMap<String, String>> = flow
                .cells
                .iter()
                .map(|(epoch, row)| {
                    (
                        epoch.to_string(),
                        row.iter().map(|(b, w)| (b.to_string(), w.to_string())).collect(),
                    )
                })
                .collect();
            serde_json::json!({
                "contract": flow.contract.as_str(),
                "tx_count": flow.tx_count,
                "total_bribe": flow.total_bribe.to_string(),
                "cells": cells,
                "pool_usd": flow.pool_usd.iter().map(|(p, v)| (p.to_string(), *v)).collect::<BTreeMap<String, f64>>(),
            })
        })
        .collect();
    let json = serde_json::json!({
        "granularity": table.epochs.granularity().as_str(),
        "anchor": table.epochs.anchor(),
        "flow_count": table.flows.len(),
        "total_bribes": table.total_bribes().to_string(),
        "flows": flows,
    });
    write_text(out, &(serde_json::to_string_pretty(&json).expect("table serializes") + "\n"))
}

fn cmd_exclusivity(
    data: &Path,
    out: &Path,
    ground_truth: Option<&Path>,
    eof_out: Option<&Path>,
    quiet: bool,
) -> Result<(), Failure> {
    let ds = load(data)?;
    let truth: LabelSet = match ground_truth {
        Some(path) => load_label_file(path)?,
        None => ds.labels().clone(),
    };
    let (_table, mut scores) = score_all_flows(&ds)?;
    // Table ranking: score descending, address ascending on exact ties.
    scores.sort_by(|a, b| {
        b.total
            .partial_cmp(&a.total)
            .expect("scores are finite")
            .then_with(|| a.contract.cmp(&b.contract))
    });

    let mut csv = String::from("contract,label,total_score,total_bribe_eth,avg_kl,active_weeks\n");
    for score in &scores {
        let label = match truth.known_eof(&score.contract) {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            score.contract,
            label,
            score.total,
            wei_to_eth(score.total_bribe),
            score.avg_kl,
            score.active_epochs,
        ));
    }
    write_text(out, &csv)?;
    info(quiet, format!("scored {} flows -> {}", scores.len(), out.display()));

    let has_truth = scores.iter().any(|s| truth.known_eof(&s.contract).is_some());
    if has_truth {
        let sweep = optimize_threshold(&scores, &truth)?;
        info(
            quiet,
            format!(
                "threshold sweep: tau={} precision={} recall={} f1={} over {} candidates",
                sweep.threshold,
                sweep.precision,
                sweep.recall,
                sweep.f1,
                sweep.curve.len()
            ),
        );
        if let Some(path) = eof_out {
            let eofs = classify_eof(&scores, sweep.threshold);
            let mut text = String::from("contract\n");
            for address in &eofs {
                text.push_str(address.as_str());
                text.push('\n');
            }
            write_text(path, &text)?;
            info(quiet, format!("{} contracts above tau written to {}", eofs.len(), path.display()));
        }
    } else if let Some(path) = eof_out {
        return Err(Failure::cli(
            "invalid_argument",
            format!(
                "--eof-out {} needs ground-truth labels to pick a threshold",
                path.display()
            ),
        ));
    }
    Ok(())
}

fn cmd_edr(data: &Path, eof: &Path, out: &Path) -> Result<(), Failure> {
    let ds = load(data)?;
    let eofs = read_eof_list(eof)?;
    let histogram = edr_histogram(&ds, &eofs);
    let mut csv = String::from("builder,blocks,bin,count,fraction\n");
    // The pooled distribution first (empty builder field), then per builder.
    for bin in EdrBin::ALL {
        csv.push_str(&format!(
            ",{},{},{},{}\n",
            histogram.global.blocks,
            bin.label(),
            histogram.global.count(bin),
            histogram.global.fraction(bin),
        ));
    }
    for (builder, row) in &histogram.rows {
        for bin in EdrBin::ALL {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                builder,
                row.blocks,
                bin.label(),
                row.count(bin),
                row.fraction(bin),
            ));
        }
    }
    write_text(out, &csv)
}

fn cmd_features(data: &Path, out: &Path, min_txs: u64) -> Result<(), Failure> {
    let ds = load(data)?;
    let vectors = extract_all(&ds, min_txs);
    let mut csv = String::from("contract");
    for name in flowscope_core::features::FEATURE_NAMES {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for vector in &vectors {
        csv.push_str(vector.contract.as_str());
        for value in vector.values {
            csv.push_str(&format!(",{value}"));
        }
        csv.push('\n');
    }
    write_text(out, &csv)
}

/// Builds the labeled training set: `non_atomic` contracts against
/// everything else, skipping labeled contracts absent from the dataset.
fn training_set(ds: &Dataset, labels: &LabelSet) -> (Vec<TrainingExample>, usize) {
    let mut data = Vec::new();
    let mut skipped = 0usize;
    for contract in labels.contracts() {
        let Some(mechanism) = labels.mechanism(contract) else { continue };
        let class = match mechanism {
            Mechanism::NonAtomic => ForestClass::NonAtomic,
            _ => ForestClass::Other,
        };
        match extract_features_with_min(ds, contract, DEFAULT_MIN_TXS) {
            Ok(vector) => data.push(TrainingExample::new(&vector, class)),
            Err(_) => skipped += 1,
        }
    }
    (data, skipped)
}

fn print_train_report(report: &TrainReport, quiet: bool) {
    if quiet {
        return;
    }
    for (i, (validation, test)) in report
        .forest
        .validation_accuracy
        .iter()
        .zip(&report.tree_test_accuracy)
        .enumerate()
    {
        let validation = validation.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        println!("tree {i}: validation={validation} test={test}");
    }
    println!(
        "ensemble: test={} unanimous={} (train {} / test {})",
        report.ensemble_test_accuracy,
        report.unanimous_fraction,
        report.train_size,
        report.test_size
    );
}

fn cmd_train(
    data: &Path,
    labels: Option<&Path>,
    seed: u64,
    out: &Path,
    quiet: bool,
) -> Result<(), Failure> {
    let ds = load(data)?;
    let labels = match labels {
        Some(path) => load_label_file(path)?,
        None => ds.labels().clone(),
    };
    let (training, skipped) = training_set(&ds, &labels);
    if skipped > 0 {
        info(quiet, format!("skipped {skipped} labeled contracts with no transactions"));
    }
    let report = train_forest(&training, seed)?;
    write_text(out, &report.forest.to_json())?;
    print_train_report(&report, quiet);
    let importance = feature_importance(&report.forest);
    if !quiet {
        let ranked: Vec<String> = {
            let mut order: Vec<usize> = (0..importance.len()).collect();
            order.sort_by(|&a, &b| {
                importance[b].partial_cmp(&importance[a]).expect("importance is finite")
            });
            order
                .into_iter()
                .filter(|&i| importance[i] > 0.0)
                .map(|i| format!("{}={}", flowscope_core::features::FEATURE_NAMES[i], importance[i]))
                .collect()
        };
        println!("feature importance: {}", ranked.join(" "));
    }
    Ok(())
}

fn cmd_classify(data: &Path, forest: &Path, out: &Path, min_txs: u64) -> Result<(), Failure> {
    let ds = load(data)?;
    let forest = Forest::from_json(&read_text(forest)?)?;
    let table = build_flows(&ds, Granularity::Weekly);
    let mut csv = String::from("contract,prediction,votes,low_confidence\n");
    for contract in table.flows.keys() {
        let vector = extract_features_with_min(&ds, contract, min_txs)
            .expect("flow contracts have transactions");
        let prediction = predict(&forest, &vector.values);
        let class = match prediction.class {
            ForestClass::NonAtomic => "non_atomic",
            ForestClass::Other => "other",
        };
        csv.push_str(&format!(
            "{},{},{},{}\n",
            contract, class, prediction.votes, vector.low_confidence
        ));
    }
    write_text(out, &csv)
}

fn cmd_pipeline(
    data: &Path,
    k: usize,
    forest: Option<&Path>,
    seed: u64,
    out: &Path,
    quiet: bool,
) -> Result<(), Failure> {
    let ds = load(data)?;
    let forest = match forest {
        Some(path) => Forest::from_json(&read_text(path)?)?,
        None => {
            let (training, skipped) = training_set(&ds, ds.labels());
            if skipped > 0 {
                info(quiet, format!("skipped {skipped} labeled contracts with no transactions"));
            }
            train_forest(&training, seed)?.forest
        }
    };
    let table = build_flows(&ds, Granularity::Weekly);
    let assignments = classify_top_flows(&ds, &table, &forest, k);
    let mut csv = String::from("rank,contract,total_bribe,mechanism,origin,votes,low_confidence\n");
    for a in &assignments {
        let origin = match a.origin {
            Origin::Manual => "manual",
            Origin::Forest => "forest",
            Origin::LabelHeuristic => "label_heuristic",
            Origin::Fallback => "fallback",
        };
        let votes = a.votes.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.rank, a.contract, a.total_bribe, a.mechanism.label(), origin, votes, a.low_confidence
        ));
    }
    write_text(out, &csv)?;
    let counts = mechanism_counts(&assignments);
    let summary: Vec<String> =
        counts.iter().map(|(m, c)| format!("{}={c}", m.label())).collect();
    info(quiet, format!("classified {} flows: {}", assignments.len(), summary.join(" ")));
    Ok(())
}

/// `starts = ["YYYY-MM-DD", …]` phase boundary file.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PhasesFile {
    starts: Vec<String>,
}

fn load_phases(path: Option<&Path>) -> Result<Phases, Failure> {
    let Some(path) = path else { return Ok(Phases::default_phases()) };
    let file: PhasesFile = toml::from_str(&read_text(path)?)
        .map_err(|e| Failure::cli("invalid_argument", format!("{}: {e}", path.display())))?;
    let dates: Vec<chrono::NaiveDate> = file
        .starts
        .iter()
        .map(|s| {
            s.parse().map_err(|e| {
                Failure::cli("invalid_argument", format!("{}: invalid date {s:?}: {e}", path.display()))
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Phases::from_dates(&dates)?)
}

fn cmd_market_report(data: &Path, phases: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let ds = load(data)?;
    let phases = load_phases(phases)?;

    let hhi = hhi_series(&ds);
    let categories = categorize_builders(&ds);

    // Mechanisms for the phase split come from the manual labels; unlabeled
    // contracts fall into `miscellaneous` inside phase_composition.
    let mechanisms: BTreeMap<Address, MechanismClass> = ds
        .labels()
        .contracts()
        .filter_map(|c| {
            ds.labels().mechanism(c).map(|m| {
                let class = match m {
                    Mechanism::Protocol => MechanismClass::Protocol,
                    Mechanism::Atomic => MechanismClass::Atomic,
                    Mechanism::NonAtomic => MechanismClass::NonAtomic,
                    Mechanism::Other => MechanismClass::Miscellaneous,
                };
                (c.clone(), class)
            })
        })
        .collect();
    let composition = phase_composition(&ds, &mechanisms, &phases)?;

    // EOF set for the dependency correlations: literature ground truth.
    let eofs: BTreeSet<Address> = ds
        .labels()
        .contracts()
        .filter(|c| ds.labels().known_eof(c) == Some(true))
        .cloned()
        .collect();
    let mut correlations = Vec::new();
    let mut correlation_csv = String::from("builder,r,paired_days,dropped_days,active_days\n");
    for builder in ds.registry().builder_ids() {
        match eof_share_correlation(&ds, &eofs, builder) {
            Ok(report) => {
                correlation_csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    report.builder,
                    report.r,
                    report.paired_days,
                    report.dropped_days,
                    report.active_days
                ));
                correlations.push(serde_json::json!({
                    "builder": report.builder.as_str(),
                    "r": report.r,
                    "paired_days": report.paired_days,
                    "dropped_days": report.dropped_days,
                    "active_days": report.active_days,
                }));
            }
            Err(err @ ConcentrationError::ConstantSeries { .. })
            | Err(err @ ConcentrationError::InsufficientDays { .. }) => {
                correlations.push(serde_json::json!({
                    "builder": builder.as_str(),
                    "error": err.code(),
                }));
            }
            Err(other) => return Err(other.into()),
        }
    }

    let json = serde_json::json!({
        "hhi": hhi
            .iter()
            .map(|p| serde_json::json!({"week": p.week, "start": p.start, "hhi": p.hhi}))
            .collect::<Vec<_>>(),
        "categories": categories
            .iter()
            .map(|(b, c)| (b.to_string(), c.label()))
            .collect::<BTreeMap<String, &str>>(),
        "phases": composition
            .iter()
            .map(|p| {
                serde_json::json!({
                    "index": p.index,
                    "start": p.start,
                    "end": p.end,
                    "total": p.total.to_string(),
                    "totals": p.totals
                        .iter()
                        .map(|(m, w)| (m.label().to_string(), w.to_string()))
                        .collect::<BTreeMap<String, String>>(),
                    "fractions": p.fractions
                        .iter()
                        .map(|(m, f)| (m.label().to_string(), *f))
                        .collect::<BTreeMap<String, f64>>(),
                })
            })
            .collect::<Vec<_>>(),
        "correlations": correlations,
    });
    write_text(out, &(serde_json::to_string_pretty(&json).expect("report serializes") + "\n"))?;

    // Plot-ready CSV panels next to the report.
    let dir = out.parent().unwrap_or_else(|| Path::new("."));
    let mut hhi_csv = String::from("week,start,hhi\n");
    for point in &hhi {
        hhi_csv.push_str(&format!("{},{},{}\n", point.week, point.start, point.hhi));
    }
    write_text(&dir.join("hhi.csv"), &hhi_csv)?;

    let table = build_flows(&ds, Granularity::Weekly);
    let markets = market_series(&ds, table.epochs);
    let mut stack_csv = String::from("week,builder,share\n");
    for (week, market) in &markets {
        for (builder, share) in &market.shares {
            stack_csv.push_str(&format!("{week},{builder},{share}\n"));
        }
    }
    write_text(&dir.join("share_stack.csv"), &stack_csv)?;
    write_text(&dir.join("correlation.csv"), &correlation_csv)?;
    Ok(())
}

fn cmd_tailfit(data: &Path, mechanism: &str, out: &Path) -> Result<(), Failure> {
    let wanted: Option<Mechanism> = match mechanism {
        "any" => None,
        "protocol" => Some(Mechanism::Protocol),
        "atomic" => Some(Mechanism::Atomic),
        "non_atomic" => Some(Mechanism::NonAtomic),
        "other" => Some(Mechanism::Other),
        _ => {
            return Err(Failure::cli(
                "invalid_argument",
                format!("unknown mechanism {mechanism:?} (expected protocol, atomic, non_atomic, other, or any)"),
            ))
        }
    };
    let ds = load(data)?;
    let table = build_flows(&ds, Granularity::Weekly);
    let mut wei: Vec<u128> = Vec::new();
    for (contract, flow) in &table.flows {
        if flow.total_bribe == 0 {
            continue;
        }
        if let Some(wanted) = wanted {
            if ds.labels().mechanism(contract) != Some(wanted) {
                continue;
            }
        }
        wei.push(flow.total_bribe);
    }
    if wei.is_empty() {
        return Err(Failure::cli(
            "invalid_argument",
            format!("no flows with positive bribes match mechanism {mechanism:?}"),
        ));
    }
    let eth: Vec<f64> = wei.iter().map(|&w| wei_to_eth(w)).collect();
    let fit = fit_power_law(&eth)?;
    let concentration: BTreeMap<String, f64> = [1usize, 2, 5, 10]
        .into_iter()
        .map(|k| (format!("top_{k}"), concentration_summary(&wei, k)))
        .collect();
    let json = serde_json::json!({
        "mechanism": mechanism,
        "samples": eth.len(),
        "alpha": fit.alpha,
        "x_min": fit.x_min,
        "ks_statistic": fit.ks_statistic,
        "tail_len": fit.tail_len,
        "candidates_evaluated": fit.candidates_evaluated,
        "concentration": concentration,
    });
    write_text(out, &(serde_json::to_string_pretty(&json).expect("fit serializes") + "\n"))
}
