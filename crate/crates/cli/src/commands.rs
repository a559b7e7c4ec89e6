//! The three operator commands: dataset analysis, experiment execution,
//! and mechanism comparison.

use std::path::{Path, PathBuf};

use feesim_core::analytics::{
    batch_averages, block_size_metrics, median_filter, Dataset, FULL_BLOCK_THRESHOLD,
};
use feesim_core::num::{rational_to_f64, rational_to_wei_floor};
use feesim_core::sim::{run_experiment, ExperimentReport, Scenario};
use feesim_core::{Height, Wei};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::output::{
    ensure_dir, eth3, gwei3, series_file_f64, series_file_wei, Manifest, Report,
};

/// Number of batches for long-range series plots; clamped to the series
/// length for short windows.
const DEFAULT_BATCHES: usize = 1000;

/// Half-width of the median filter applied to batch-averaged prices.
const DEFAULT_PRICE_SMOOTHING: usize = 10;

pub struct AnalyzeArgs {
    pub blocks: PathBuf,
    pub txs: PathBuf,
    pub from_height: Option<Height>,
    pub to_height: Option<Height>,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let dataset = Dataset::load(&args.blocks, &args.txs, args.from_height, args.to_height)
        .map_err(CliError::data)?;
    ensure_dir(&args.out_dir)?;

    let batches = DEFAULT_BATCHES.min(dataset.len());
    let price = dataset.price_series();
    let batch_price = batch_averages(&price, batches).map_err(CliError::internal)?;
    let smoothed_price =
        median_filter(&batch_price, DEFAULT_PRICE_SMOOTHING).map_err(CliError::internal)?;
    let eip = dataset.eip_fraction_series();
    let batch_eip = batch_averages(&eip, batches).map_err(CliError::internal)?;
    let sizes = dataset.block_size_series();
    let (g_hat, p_full) =
        block_size_metrics(&sizes, &FULL_BLOCK_THRESHOLD).map_err(CliError::internal)?;

    series_file_wei(
        &args.out_dir,
        "batch_price.csv",
        batch_price.points().iter().map(|(i, v)| (*i, rational_to_wei_floor(v))),
    )?;
    series_file_wei(
        &args.out_dir,
        "batch_price_smoothed.csv",
        smoothed_price.points().iter().map(|(i, v)| (*i, rational_to_wei_floor(v))),
    )?;
    series_file_f64(
        &args.out_dir,
        "batch_eip_fraction.csv",
        batch_eip.points().iter().map(|(i, v)| (*i, rational_to_f64(v))),
    )?;
    series_file_f64(&args.out_dir, "block_size.csv", sizes.points().iter().map(|(i, v)| (*i, *v)))?;

    let first = dataset.first_height();
    let last = first + dataset.len() as Height - 1;
    let tx_count: usize = dataset.blocks().iter().map(|b| b.txs.len()).sum();
    let mut report = Report::new();
    report.push("first_height", first);
    report.push("last_height", last);
    report.push("blocks", dataset.len());
    report.push("transactions", tx_count);
    report.push("batches", batches);
    report.push_f64("g_hat", g_hat);
    report.push_f64("p_gt_095", p_full);
    report.write(&args.out_dir, "report.txt")?;

    let mut manifest = Manifest::new("analyze");
    manifest.input("blocks", &args.blocks)?;
    manifest.input("txs", &args.txs)?;
    manifest.entry("from_height", args.from_height.map_or("none".into(), |h| h.to_string()));
    manifest.entry("to_height", args.to_height.map_or("none".into(), |h| h.to_string()));
    manifest.write(&args.out_dir)?;

    if !args.quiet {
        println!("analyzed blocks {first}..={last} ({} blocks, {tx_count} txs)", dataset.len());
        println!("  g_hat    = {g_hat:.3}");
        println!("  p(g>.95) = {p_full:.3}");
        println!("  outputs in {}", args.out_dir.display());
    }
    Ok(())
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub quiet: bool,
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.base_seed = seed;
    }
    if let Some(runs) = args.runs {
        if runs == 0 {
            return Err(CliError::usage("--runs must be >= 1"));
        }
        config.run.runs = runs;
    }
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| config.io.out_dir.clone())
        .ok_or_else(|| CliError::config("no output directory: set io.out_dir or pass --out-dir"))?;

    let base_dir = args.config.parent().unwrap_or_else(|| Path::new("."));
    let scenario = config.build_scenario(base_dir)?;
    let report = run_experiment(&scenario, config.run.runs, thread_cap()?)
        .map_err(CliError::internal)?;

    ensure_dir(&out_dir)?;
    write_experiment_outputs(&out_dir, &config, &scenario, &report)?;

    let mut manifest = Manifest::new("simulate");
    manifest.input("config", &args.config)?;
    if let (Some(blocks), Some(txs)) = (&config.io.blocks, &config.io.txs) {
        manifest.input("blocks", &resolve(base_dir, blocks))?;
        manifest.input("txs", &resolve(base_dir, txs))?;
    }
    manifest.entry("base_seed", config.run.base_seed);
    manifest.entry("runs", config.run.runs);
    manifest.write(&out_dir)?;

    if !args.quiet {
        print_experiment_summary(&config.name, &scenario, &report);
        println!("  outputs in {}", out_dir.display());
    }
    Ok(())
}

fn write_experiment_outputs(
    out_dir: &Path,
    config: &ScenarioConfig,
    scenario: &Scenario,
    report: &ExperimentReport,
) -> CliResult<()> {
    let series = &report.mean_series;
    let idx = series.slots.iter().copied();
    series_file_wei(out_dir, "base_fee.csv", idx.clone().zip(series.base_fee.iter().copied()))?;
    series_file_f64(out_dir, "block_size.csv", idx.clone().zip(series.relative_size.iter().copied()))?;
    series_file_f64(out_dir, "learning_rate.csv", idx.clone().zip(series.learning_rate.iter().copied()))?;
    series_file_wei(out_dir, "reward.csv", idx.clone().zip(series.reward.iter().copied()))?;
    series_file_wei(out_dir, "burned.csv", idx.zip(series.burned.iter().copied()))?;

    let mut out = Report::new();
    out.push("name", &config.name);
    out.push("mechanism", scenario.controller.label());
    out.push("runs", report.runs);
    out.push("slots", scenario.total_slots());
    out.push("warmup_slots", report.warmup_slots);
    out.push("base_seed", config.run.base_seed);
    out.push_f64("g_hat", report.g_hat.mean);
    out.push_opt_f64("g_hat_halfwidth", report.g_hat.halfwidth);
    out.push_f64("p_gt_095", report.p_full.mean);
    out.push_opt_f64("p_gt_095_halfwidth", report.p_full.halfwidth);
    out.write(out_dir, "report.txt")?;
    Ok(())
}

fn print_experiment_summary(name: &str, scenario: &Scenario, report: &ExperimentReport) {
    let measured = &report.mean_series.base_fee[report.warmup_slots..];
    let mean_fee = if measured.is_empty() {
        0
    } else {
        measured.iter().sum::<Wei>() / measured.len() as Wei
    };
    println!("{name}: {} over {} runs", scenario.controller.label(), report.runs);
    println!("  g_hat    = {:.3}{}", report.g_hat.mean, halfwidth_str(report.g_hat.halfwidth));
    println!("  p(g>.95) = {:.3}{}", report.p_full.mean, halfwidth_str(report.p_full.halfwidth));
    println!("  mean base fee = {} Gwei", gwei3(mean_fee));
    println!(
        "  mean miner revenue per block = {} ETH",
        eth3(mean_revenue(report))
    );
}

fn mean_revenue(report: &ExperimentReport) -> Wei {
    let measured = &report.mean_series.reward[report.warmup_slots..];
    if measured.is_empty() {
        0
    } else {
        measured.iter().sum::<Wei>() / measured.len() as Wei
    }
}

fn halfwidth_str(hw: Option<f64>) -> String {
    match hw {
        Some(hw) => format!(" +/- {hw:.3}"),
        None => String::new(),
    }
}

pub struct CompareArgs {
    pub configs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub quiet: bool,
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    if args.configs.len() < 2 {
        return Err(CliError::usage("compare needs at least two config files"));
    }
    let mut configs = Vec::new();
    for path in &args.configs {
        let mut config = ScenarioConfig::load(path)?;
        if let Some(seed) = args.seed {
            config.run.base_seed = seed;
        }
        if let Some(runs) = args.runs {
            config.run.runs = runs;
        }
        configs.push((path.clone(), config));
    }
    for (path, config) in &configs[1..] {
        if !config.same_trace(&configs[0].1) {
            return Err(CliError::config(format!(
                "{} does not share the demand trace of {}: comparisons need identical demand, io and run sections",
                path.display(),
                configs[0].0.display()
            )));
        }
    }

    let threads = thread_cap()?;
    let mut rows = Vec::new();
    for (path, config) in &configs {
        let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
        let scenario = config.build_scenario(base_dir)?;
        let report =
            run_experiment(&scenario, config.run.runs, threads).map_err(CliError::internal)?;
        rows.push((config.name.clone(), scenario.controller.label(), report));
    }

    ensure_dir(&args.out_dir)?;
    let mut table = String::from("name\tmechanism\tg_hat\tg_hat_halfwidth\tp_gt_095\tp_gt_095_halfwidth\n");
    for (name, label, report) in &rows {
        table.push_str(&format!(
            "{name}\t{label}\t{:.6}\t{}\t{:.6}\t{}\n",
            report.g_hat.mean,
            report.g_hat.halfwidth.map_or("n/a".into(), |h| format!("{h:.6}")),
            report.p_full.mean,
            report.p_full.halfwidth.map_or("n/a".into(), |h| format!("{h:.6}")),
        ));
    }
    crate::output::write_file(&args.out_dir.join("comparison.txt"), &table)?;

    let mut manifest = Manifest::new("compare");
    for (i, (path, config)) in configs.iter().enumerate() {
        manifest.input(&format!("config{i}"), path)?;
        manifest.entry(&format!("config{i}.base_seed"), config.run.base_seed);
        manifest.entry(&format!("config{i}.runs"), config.run.runs);
    }
    manifest.write(&args.out_dir)?;

    if !args.quiet {
        println!("{:<24} {:<22} {:>16} {:>16}", "name", "mechanism", "g_hat", "p(g>.95)");
        for (name, label, report) in &rows {
            println!(
                "{name:<24} {label:<22} {:>16} {:>16}",
                estimate_str(report.g_hat.mean, report.g_hat.halfwidth),
                estimate_str(report.p_full.mean, report.p_full.halfwidth),
            );
        }
        println!("  comparison written to {}", args.out_dir.join("comparison.txt").display());
    }
    Ok(())
}

fn estimate_str(mean: f64, hw: Option<f64>) -> String {
    match hw {
        Some(hw) => format!("{mean:.3} +/- {hw:.3}"),
        None => format!("{mean:.3}"),
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Worker cap for independent runs: `FEESIM_THREADS` when set, otherwise
/// the machine's available parallelism.
pub fn thread_cap() -> CliResult<usize> {
    match std::env::var("FEESIM_THREADS") {
        Err(std::env::VarError::NotPresent) => {
            Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        }
        Err(e) => Err(CliError::usage(format!("FEESIM_THREADS: {e}"))),
        Ok(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::usage(format!("FEESIM_THREADS must be a positive integer, got {raw:?}"))),
    }
}
