//! Scenario configuration: a human-editable TOML document with `demand`,
//! `mechanism`, `run` and `io` sections. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use feesim_core::analytics::Dataset;
use feesim_core::demand::{trace_from_dataset, DemandParams, DemandTrace};
use feesim_core::fee::{AimdParams, GasSchedule};
use feesim_core::num::parse_rational;
use feesim_core::sim::{ControllerSpec, Scenario};
use feesim_core::{Height, Wei};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub demand: DemandSection,
    pub mechanism: MechanismSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    /// "replay" draws the reference price series from the dataset in
    /// `[io]`; "synthetic" uses a flat `reference_price_gwei`.
    pub source: String,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_uniform_share")]
    pub uniform_share: f64,
    #[serde(default = "default_pareto_share")]
    pub pareto_share: f64,
    #[serde(default = "default_pareto_shape")]
    pub pareto_shape: f64,
    #[serde(default = "default_pareto_scale_factor")]
    pub pareto_scale_factor: f64,
    #[serde(default = "default_uniform_center_factor")]
    pub uniform_center_factor: f64,
    #[serde(default = "default_uniform_halfwidth_factor")]
    pub uniform_halfwidth_factor: f64,
    #[serde(default = "default_gas_small")]
    pub gas_small: u64,
    #[serde(default = "default_gas_large")]
    pub gas_large: u64,
    #[serde(default = "default_gas_small_prob")]
    pub gas_small_prob: f64,
    #[serde(default = "default_priority_fee_gwei")]
    pub priority_fee_gwei: f64,
    /// Overrides the per-slot legacy share; replay scenarios otherwise use
    /// the dataset's smoothed adoption series, synthetic ones 0.5.
    #[serde(default)]
    pub legacy_fraction: Option<f64>,
    /// Median filter half-width applied to the replayed price series.
    #[serde(default = "default_smoothing")]
    pub smoothing_halfwidth: usize,
    /// Synthetic source only.
    #[serde(default)]
    pub reference_price_gwei: Option<f64>,
    #[serde(default)]
    pub slots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    /// "constant" or "aimd".
    pub controller: String,
    #[serde(default = "default_d")]
    pub d: String,
    #[serde(default = "default_alpha")]
    pub alpha: String,
    #[serde(default = "default_beta")]
    pub beta: String,
    #[serde(default = "default_gamma")]
    pub gamma: String,
    #[serde(default = "default_d_min")]
    pub d_min: String,
    #[serde(default = "default_d_max")]
    pub d_max: String,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_d")]
    pub initial_d: String,
    #[serde(default = "default_block_gas_limit")]
    pub block_gas_limit: u64,
    #[serde(default = "default_base_fee_floor")]
    pub base_fee_floor_wei: u64,
    #[serde(default = "default_min_tip_gwei")]
    pub min_tip_gwei: f64,
    #[serde(default = "default_block_reward_eth")]
    pub block_reward_eth: f64,
    /// Required for synthetic scenarios; replay scenarios default to the
    /// recorded base fee at the window's first block.
    #[serde(default)]
    pub initial_base_fee_gwei: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub warmup_slots: usize,
    pub runs: usize,
    pub base_seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { warmup_slots: 50, runs: 20, base_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub blocks: Option<PathBuf>,
    pub txs: Option<PathBuf>,
    pub from_height: Option<Height>,
    pub to_height: Option<Height>,
    pub out_dir: Option<PathBuf>,
}

fn default_lambda() -> f64 {
    3.0
}
fn default_uniform_share() -> f64 {
    2.75
}
fn default_pareto_share() -> f64 {
    0.25
}
fn default_pareto_shape() -> f64 {
    1.35
}
fn default_pareto_scale_factor() -> f64 {
    0.10
}
fn default_uniform_center_factor() -> f64 {
    0.75
}
fn default_uniform_halfwidth_factor() -> f64 {
    0.15
}
fn default_gas_small() -> u64 {
    21_000
}
fn default_gas_large() -> u64 {
    150_000
}
fn default_gas_small_prob() -> f64 {
    0.6
}
fn default_priority_fee_gwei() -> f64 {
    2.0
}
fn default_smoothing() -> usize {
    10
}
fn default_d() -> String {
    "0.125".into()
}
fn default_alpha() -> String {
    "0.025".into()
}
fn default_beta() -> String {
    "0.95".into()
}
fn default_gamma() -> String {
    "0.25".into()
}
fn default_d_min() -> String {
    "0.0125".into()
}
fn default_d_max() -> String {
    "1".into()
}
fn default_window() -> usize {
    8
}
fn default_block_gas_limit() -> u64 {
    30_000_000
}
fn default_base_fee_floor() -> u64 {
    7
}
fn default_min_tip_gwei() -> f64 {
    2.0
}
fn default_block_reward_eth() -> f64 {
    2.0
}

pub fn gwei_to_wei(gwei: f64) -> Wei {
    (gwei * 1e9).round() as Wei
}

pub fn eth_to_wei(eth: f64) -> Wei {
    (eth * 1e18).round() as Wei
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> CliResult<()> {
        match self.demand.source.as_str() {
            "replay" => {
                if self.io.blocks.is_none() || self.io.txs.is_none() {
                    return Err(CliError::config(
                        "demand.source = \"replay\" needs io.blocks and io.txs",
                    ));
                }
            }
            "synthetic" => {
                if self.demand.reference_price_gwei.is_none() || self.demand.slots.is_none() {
                    return Err(CliError::config(
                        "demand.source = \"synthetic\" needs demand.reference_price_gwei and demand.slots",
                    ));
                }
                if self.mechanism.initial_base_fee_gwei.is_none() {
                    return Err(CliError::config(
                        "synthetic scenarios need mechanism.initial_base_fee_gwei",
                    ));
                }
            }
            other => {
                return Err(CliError::config(format!(
                    "demand.source must be \"replay\" or \"synthetic\", got {other:?}"
                )))
            }
        }
        match self.mechanism.controller.as_str() {
            "constant" | "aimd" => {}
            other => {
                return Err(CliError::config(format!(
                    "mechanism.controller must be \"constant\" or \"aimd\", got {other:?}"
                )))
            }
        }
        if self.run.runs == 0 {
            return Err(CliError::config("run.runs must be >= 1"));
        }
        Ok(())
    }

    fn rational(&self, name: &str, value: &str) -> CliResult<feesim_core::Rational> {
        parse_rational(value).ok_or_else(|| {
            CliError::config(format!("mechanism.{name}: not a decimal or fraction: {value:?}"))
        })
    }

    pub fn controller_spec(&self) -> CliResult<ControllerSpec> {
        let m = &self.mechanism;
        match m.controller.as_str() {
            "constant" => Ok(ControllerSpec::Constant { d: self.rational("d", &m.d)? }),
            "aimd" => {
                let params = AimdParams::new(
                    self.rational("alpha", &m.alpha)?,
                    self.rational("beta", &m.beta)?,
                    self.rational("gamma", &m.gamma)?,
                    self.rational("d_min", &m.d_min)?,
                    self.rational("d_max", &m.d_max)?,
                    m.window,
                )
                .map_err(|e| CliError::config(e.to_string()))?;
                Ok(ControllerSpec::Aimd { params, initial_d: self.rational("initial_d", &m.initial_d)? })
            }
            _ => unreachable!("validated in check"),
        }
    }

    fn demand_params(&self) -> DemandParams {
        let d = &self.demand;
        DemandParams {
            lambda: d.lambda,
            uniform_share: d.uniform_share,
            pareto_share: d.pareto_share,
            pareto_shape: d.pareto_shape,
            pareto_scale_factor: d.pareto_scale_factor,
            uniform_center_factor: d.uniform_center_factor,
            uniform_halfwidth_factor: d.uniform_halfwidth_factor,
            gas_small: d.gas_small,
            gas_large: d.gas_large,
            gas_small_prob: d.gas_small_prob,
            default_priority_fee: gwei_to_wei(d.priority_fee_gwei),
            legacy_fraction: d.legacy_fraction.unwrap_or(0.5),
        }
    }

    /// Resolves paths in `[io]` relative to `base_dir` (the config file's
    /// directory), loads the dataset when replaying, and assembles the
    /// simulation scenario.
    pub fn build_scenario(&self, base_dir: &Path) -> CliResult<Scenario> {
        let demand_params = self.demand_params();
        demand_params.validate().map_err(|e| CliError::config(e.to_string()))?;

        let (trace, replay_initial_fee) = match self.demand.source.as_str() {
            "replay" => {
                let blocks = resolve(base_dir, self.io.blocks.as_ref().unwrap());
                let txs = resolve(base_dir, self.io.txs.as_ref().unwrap());
                let dataset =
                    Dataset::load(&blocks, &txs, self.io.from_height, self.io.to_height)
                        .map_err(CliError::data)?;
                let initial = dataset.blocks()[0].base_fee;
                let mut trace = trace_from_dataset(
                    dataset.blocks(),
                    self.demand.smoothing_halfwidth,
                    self.demand.lambda,
                )
                .map_err(CliError::data)?;
                if self.demand.legacy_fraction.is_some() {
                    trace = strip_legacy_series(trace);
                }
                (trace, Some(initial))
            }
            "synthetic" => {
                let price = gwei_to_wei(self.demand.reference_price_gwei.unwrap());
                let trace =
                    DemandTrace::constant(self.demand.slots.unwrap(), self.demand.lambda, price)
                        .map_err(|e| CliError::config(e.to_string()))?;
                (trace, None)
            }
            _ => unreachable!("validated in check"),
        };

        let initial_base_fee = match self.mechanism.initial_base_fee_gwei {
            Some(gwei) => gwei_to_wei(gwei),
            None => replay_initial_fee
                .expect("replay datasets are non-empty; synthetic requires an explicit fee"),
        };

        let schedule = GasSchedule::new(self.mechanism.block_gas_limit)
            .map_err(|e| CliError::config(e.to_string()))?;
        let scenario = Scenario {
            name: self.name.clone(),
            trace,
            demand: demand_params,
            controller: self.controller_spec()?,
            schedule,
            initial_base_fee,
            base_fee_floor: self.mechanism.base_fee_floor_wei as Wei,
            min_tip: gwei_to_wei(self.mechanism.min_tip_gwei),
            block_reward: eth_to_wei(self.mechanism.block_reward_eth),
            warmup_slots: self.run.warmup_slots,
            seed: self.run.base_seed,
        };
        scenario.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(scenario)
    }

    /// True when two configs describe the same demand process: identical
    /// demand and run sections and the same dataset window, so only the
    /// mechanism (and output directory) differs.
    pub fn same_trace(&self, other: &Self) -> bool {
        self.demand == other.demand
            && self.run == other.run
            && self.io.blocks == other.io.blocks
            && self.io.txs == other.io.txs
            && self.io.from_height == other.io.from_height
            && self.io.to_height == other.io.to_height
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn strip_legacy_series(trace: DemandTrace) -> DemandTrace {
    let slots = trace
        .slots()
        .iter()
        .map(|s| feesim_core::demand::SlotDemand {
            lambda: s.lambda,
            reference_price: s.reference_price,
            legacy_fraction: None,
        })
        .collect();
    DemandTrace::new(slots).expect("trace was already valid")
}
