//! The per-slot execution loop and the multi-run experiment harness.
//!
//! Each slot follows the same sequence: draw the arrival count, draw the
//! arriving bids from the reference price, merge them into the mempool,
//! build a block at the prevailing base fee, then advance the fee
//! controller with the block's gas usage. Runs are deterministic given the
//! scenario and seed; an experiment repeats the scenario across seeds and
//! aggregates the block-size metrics with normal-approximation confidence
//! half-widths.

use crate::analytics::{block_size_metrics, Series, FULL_BLOCK_THRESHOLD};
use crate::demand::{
    draw_num_transactions, draw_transactions, seeded_rng, DemandParams, DemandTrace, SeededRng,
    SlotDemand,
};
use crate::fee::{AimdParams, BaseFeeState, FeeController, GasSchedule};
use crate::market::{build_block, settle_block, user_payments, BlockSettlement, Mempool, Transaction};
use crate::num::Rational;
use crate::{Error, Gas, Height, Result, Wei};

use num_traits::ToPrimitive;

/// Which learning-rate controller a scenario runs, with its parameters.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // one per scenario, size is irrelevant
pub enum ControllerSpec {
    Constant { d: Rational },
    Aimd { params: AimdParams, initial_d: Rational },
}

impl ControllerSpec {
    pub fn build(&self) -> Result<FeeController> {
        match self {
            Self::Constant { d } => FeeController::constant(d.clone()),
            Self::Aimd { params, initial_d } => {
                FeeController::aimd(params.clone(), initial_d.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant { d } => format!("constant d={}", rational_display(d)),
            Self::Aimd { .. } => "aimd".to_string(),
        }
    }
}

fn rational_display(r: &Rational) -> String {
    match r.to_f64() {
        Some(v) => format!("{v}"),
        None => r.to_string(),
    }
}

/// A fully specified simulation setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub trace: DemandTrace,
    pub demand: DemandParams,
    pub controller: ControllerSpec,
    pub schedule: GasSchedule,
    pub initial_base_fee: Wei,
    pub base_fee_floor: Wei,
    pub min_tip: Wei,
    pub block_reward: Wei,
    /// Slots run before the trace window to populate the mempool; they are
    /// recorded but excluded from metrics. They replay the first trace
    /// slot's demand.
    pub warmup_slots: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.demand.validate()?;
        if self.initial_base_fee < self.base_fee_floor {
            return Err(Error::InvalidParam {
                name: "initial_base_fee",
                reason: format!("must be >= base fee floor {}", self.base_fee_floor),
            });
        }
        self.controller.build().map(|_| ())
    }

    pub fn total_slots(&self) -> usize {
        self.warmup_slots + self.trace.len()
    }
}

/// Everything recorded about one simulated slot. `base_fee` is the fee the
/// block was built and settled at; the controller's update happens after
/// and is visible in the next slot. `learning_rate` is the rate that drove
/// this slot's update.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: Height,
    pub base_fee: Wei,
    pub gas_used: Gas,
    pub relative_size: f64,
    pub learning_rate: f64,
    pub settlement: BlockSettlement,
    pub user_payments: Wei,
}

/// Live state of a single run.
pub struct SimState {
    fee_state: BaseFeeState,
    controller: FeeController,
    mempool: Mempool,
    rng: SeededRng,
    next_tx_id: u64,
    demand: DemandParams,
    schedule: GasSchedule,
    base_fee_floor: Wei,
    min_tip: Wei,
    block_reward: Wei,
    records: Vec<SlotRecord>,
}

impl SimState {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            fee_state: BaseFeeState::new(scenario.initial_base_fee, 0),
            controller: scenario.controller.build()?,
            mempool: Mempool::new(),
            rng: seeded_rng(seed),
            next_tx_id: 0,
            demand: scenario.demand.clone(),
            schedule: scenario.schedule.clone(),
            base_fee_floor: scenario.base_fee_floor,
            min_tip: scenario.min_tip,
            block_reward: scenario.block_reward,
            records: Vec::with_capacity(scenario.total_slots()),
        })
    }

    pub fn slot(&self) -> Height {
        self.fee_state.block_height
    }

    pub fn base_fee(&self) -> Wei {
        self.fee_state.base_fee
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    /// Places transactions straight into the mempool, bypassing the demand
    /// model. Ids must be fresh.
    pub fn inject_transactions(&mut self, txs: Vec<Transaction>) -> Result<()> {
        for tx in &txs {
            self.next_tx_id = self.next_tx_id.max(tx.id + 1);
        }
        self.mempool.update(txs)
    }

    /// Executes one slot: arrivals, mempool union, block building at the
    /// current base fee, then the controller update on the block's gas.
    pub fn simulate_slot(&mut self, demand: &SlotDemand) -> Result<()> {
        let slot = self.slot();
        self.simulate_slot_inner(demand)
            .map_err(|source| Error::SlotFailed { slot, source: Box::new(source) })
    }

    fn simulate_slot_inner(&mut self, demand: &SlotDemand) -> Result<()> {
        let slot = self.slot();
        let n = draw_num_transactions(demand.lambda, &mut self.rng)?;
        let arrivals = draw_transactions(
            n,
            demand.reference_price,
            &self.demand,
            demand.legacy_fraction,
            slot,
            &mut self.next_tx_id,
            &mut self.rng,
        )?;
        self.mempool.update(arrivals)?;

        let block =
            build_block(&mut self.mempool, slot, self.fee_state.base_fee, &self.schedule, self.min_tip);
        let relative_size = block.relative_size(&self.schedule);

        let next_state =
            self.controller.step(&self.fee_state, block.gas_used, &self.schedule, self.base_fee_floor)?;
        let learning_rate = self.controller.learning_rate().to_f64().unwrap_or(f64::NAN);

        let settlement = settle_block(&block, self.block_reward)?;
        let payments = user_payments(&block)?;
        self.records.push(SlotRecord {
            slot,
            base_fee: block.base_fee_at_build,
            gas_used: block.gas_used,
            relative_size,
            learning_rate,
            settlement,
            user_payments: payments,
        });
        self.fee_state = next_state;
        Ok(())
    }
}

/// The complete per-slot series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub records: Vec<SlotRecord>,
    pub warmup_slots: usize,
}

impl RunSeries {
    /// Records after the warm-up, the ones metrics are computed over.
    pub fn measured(&self) -> &[SlotRecord] {
        &self.records[self.warmup_slots.min(self.records.len())..]
    }

    /// (mean relative size, fraction of blocks more than 95% full) over
    /// the measured slots.
    pub fn block_size_metrics(&self) -> Result<(f64, f64)> {
        let sizes: Vec<f64> = self.measured().iter().map(|r| r.relative_size).collect();
        block_size_metrics(&Series::from_values(0, sizes), &FULL_BLOCK_THRESHOLD)
    }

    /// (user payments, burned, tips) totals over every slot, including
    /// warm-up. Payments are accumulated independently of the settlement
    /// so conservation is a real check.
    pub fn totals(&self) -> Result<(Wei, Wei, Wei)> {
        let overflow = || Error::Overflow { context: "run totals" };
        let mut payments: Wei = 0;
        let mut burned: Wei = 0;
        let mut tips: Wei = 0;
        for r in &self.records {
            payments = payments.checked_add(r.user_payments).ok_or_else(overflow)?;
            burned = burned.checked_add(r.settlement.burned_total).ok_or_else(overflow)?;
            tips = tips.checked_add(r.settlement.tips_total).ok_or_else(overflow)?;
        }
        Ok((payments, burned, tips))
    }
}

/// Runs a scenario once with its own seed.
pub fn run_scenario(scenario: &Scenario) -> Result<RunSeries> {
    run_scenario_with_seed(scenario, scenario.seed)
}

/// Runs a scenario once with an explicit seed (used by experiments, where
/// run `i` gets `seed + i`).
pub fn run_scenario_with_seed(scenario: &Scenario, seed: u64) -> Result<RunSeries> {
    let mut state = SimState::new(scenario, seed)?;
    let first = &scenario.trace.slots()[0];
    for _ in 0..scenario.warmup_slots {
        state.simulate_slot(first)?;
    }
    for demand in scenario.trace.slots() {
        state.simulate_slot(demand)?;
    }
    Ok(RunSeries { records: state.records, warmup_slots: scenario.warmup_slots })
}

/// A point estimate with its 95% normal-approximation half-width
/// (`1.96 * s / sqrt(runs)`), absent when there are fewer than two runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricEstimate {
    pub mean: f64,
    pub halfwidth: Option<f64>,
}

impl MetricEstimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let halfwidth = (n >= 2).then(|| {
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        });
        Self { mean, halfwidth }
    }
}

/// Per-slot series averaged across runs. Base fee, reward and burn means
/// are floored to integer wei.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSeries {
    pub slots: Vec<Height>,
    pub base_fee: Vec<Wei>,
    pub relative_size: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub reward: Vec<Wei>,
    pub burned: Vec<Wei>,
}

/// Aggregated outcome of repeated runs of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: usize,
    pub warmup_slots: usize,
    pub g_hat_samples: Vec<f64>,
    pub p_full_samples: Vec<f64>,
    pub g_hat: MetricEstimate,
    pub p_full: MetricEstimate,
    pub mean_series: MeanSeries,
}

/// Runs `runs` independent replications with seeds `scenario.seed + i`,
/// spread over at most `max_threads` worker threads. Results are
/// aggregated in run order, so the report does not depend on the thread
/// count.
pub fn run_experiment(scenario: &Scenario, runs: usize, max_threads: usize) -> Result<ExperimentReport> {
    if runs == 0 {
        return Err(Error::InvalidParam { name: "runs", reason: "must be >= 1".into() });
    }
    scenario.validate()?;

    let workers = max_threads.max(1).min(runs);
    let mut results: Vec<Option<Result<RunSeries>>> = Vec::new();
    results.resize_with(runs, || None);

    if workers == 1 {
        for (i, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_scenario_with_seed(scenario, scenario.seed + i as u64));
        }
    } else {
        let chunks: Vec<Vec<usize>> = (0..workers)
            .map(|w| (0..runs).filter(|i| i % workers == w).collect())
            .collect();
        let outcomes = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|indices| {
                    scope.spawn(move || {
                        indices
                            .into_iter()
                            .map(|i| (i, run_scenario_with_seed(scenario, scenario.seed + i as u64)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("run worker panicked")).collect::<Vec<_>>()
        });
        for (i, outcome) in outcomes {
            results[i] = Some(outcome);
        }
    }

    let mut series: Vec<RunSeries> = Vec::with_capacity(runs);
    for (run, result) in results.into_iter().enumerate() {
        let outcome = result.expect("every run index assigned");
        series.push(outcome.map_err(|source| Error::RunFailed { run, source: Box::new(source) })?);
    }
    aggregate(&series)
}

fn aggregate(runs: &[RunSeries]) -> Result<ExperimentReport> {
    let n_runs = runs.len();
    let slots = runs[0].records.len();
    debug_assert!(runs.iter().all(|r| r.records.len() == slots));

    let mut g_hat_samples = Vec::with_capacity(n_runs);
    let mut p_full_samples = Vec::with_capacity(n_runs);
    for run in runs {
        let (g_hat, p_full) = run.block_size_metrics()?;
        g_hat_samples.push(g_hat);
        p_full_samples.push(p_full);
    }

    let overflow = || Error::Overflow { context: "series aggregation" };
    let mut base_fee = vec![0u128; slots];
    let mut reward = vec![0u128; slots];
    let mut burned = vec![0u128; slots];
    let mut relative_size = vec![0f64; slots];
    let mut learning_rate = vec![0f64; slots];
    for run in runs {
        for (i, r) in run.records.iter().enumerate() {
            base_fee[i] = base_fee[i].checked_add(r.base_fee).ok_or_else(overflow)?;
            reward[i] = reward[i].checked_add(r.settlement.miner_revenue).ok_or_else(overflow)?;
            burned[i] = burned[i].checked_add(r.settlement.burned_total).ok_or_else(overflow)?;
            relative_size[i] += r.relative_size;
            learning_rate[i] += r.learning_rate;
        }
    }
    let divisor = n_runs as u128;
    let mean_series = MeanSeries {
        slots: runs[0].records.iter().map(|r| r.slot).collect(),
        base_fee: base_fee.into_iter().map(|v| v / divisor).collect(),
        relative_size: relative_size.into_iter().map(|v| v / n_runs as f64).collect(),
        learning_rate: learning_rate.into_iter().map(|v| v / n_runs as f64).collect(),
        reward: reward.into_iter().map(|v| v / divisor).collect(),
        burned: burned.into_iter().map(|v| v / divisor).collect(),
    };

    Ok(ExperimentReport {
        runs: n_runs,
        warmup_slots: runs[0].warmup_slots,
        g_hat: MetricEstimate::from_samples(&g_hat_samples),
        p_full: MetricEstimate::from_samples(&p_full_samples),
        g_hat_samples,
        p_full_samples,
        mean_series,
    })
}
