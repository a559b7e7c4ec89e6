//! Per-slot transaction arrivals: Poisson counts and a two-class valuation
//! mixture (a uniform band of regular users around the reference price and
//! a heavy-tailed Pareto class of high-urgency users), driven by a
//! synthetic or replayed reference-price series.

use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::{Distribution, Pareto, Poisson, Uniform};

use crate::analytics::{median_filter, BlockRecord, Dataset};
use crate::market::Transaction;
use crate::{Error, Gas, Height, Result, Wei, GWEI};

/// Deterministic generator: the same seed always reproduces the same
/// stream, independent of platform.
pub type SeededRng = rand_chacha::ChaCha12Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Arrival and valuation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandParams {
    /// Mean arrival count per slot; the overall demand-scale knob.
    pub lambda: f64,
    /// Regular-user transactions per arrival unit.
    pub uniform_share: f64,
    /// High-urgency transactions per arrival unit.
    pub pareto_share: f64,
    pub pareto_shape: f64,
    /// Pareto scale as a fraction of the reference price.
    pub pareto_scale_factor: f64,
    /// Center of the uniform band as a fraction of the reference price.
    pub uniform_center_factor: f64,
    /// Halfwidth of the uniform band as a fraction of the reference price.
    pub uniform_halfwidth_factor: f64,
    /// Two-point gas distribution: simple transfers and contract calls.
    pub gas_small: Gas,
    pub gas_large: Gas,
    pub gas_small_prob: f64,
    /// Priority fee attached to EIP-1559 bids.
    pub default_priority_fee: Wei,
    /// Probability that an arrival bids in the legacy format, used when
    /// the trace carries no per-slot fraction.
    pub legacy_fraction: f64,
}

impl Default for DemandParams {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            uniform_share: 2.75,
            pareto_share: 0.25,
            pareto_shape: 1.35,
            pareto_scale_factor: 0.10,
            uniform_center_factor: 0.75,
            uniform_halfwidth_factor: 0.15,
            gas_small: 21_000,
            gas_large: 150_000,
            gas_small_prob: 0.6,
            default_priority_fee: 2 * GWEI,
            legacy_fraction: 0.5,
        }
    }
}

impl DemandParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| Error::InvalidParam {
            name,
            reason: reason.to_string(),
        };
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(bad("lambda", "must be >= 0"));
        }
        if self.uniform_share < 0.0 || self.pareto_share < 0.0 {
            return Err(bad("uniform_share/pareto_share", "must be >= 0"));
        }
        if self.pareto_shape.is_nan() || self.pareto_shape <= 1.0 {
            return Err(bad("pareto_shape", "must be > 1 for a finite mean"));
        }
        if self.pareto_scale_factor.is_nan() || self.pareto_scale_factor <= 0.0 {
            return Err(bad("pareto_scale_factor", "must be > 0"));
        }
        if self.uniform_center_factor.is_nan() || self.uniform_center_factor <= 0.0 {
            return Err(bad("uniform_center_factor", "must be > 0"));
        }
        if self.uniform_halfwidth_factor.is_nan() || self.uniform_halfwidth_factor <= 0.0 {
            return Err(bad("uniform_halfwidth_factor", "must be > 0"));
        }
        if self.uniform_halfwidth_factor > self.uniform_center_factor {
            return Err(bad("uniform_halfwidth_factor", "band would cross zero"));
        }
        if self.gas_small == 0 || self.gas_large == 0 {
            return Err(bad("gas_small/gas_large", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.gas_small_prob) {
            return Err(bad("gas_small_prob", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.legacy_fraction) {
            return Err(bad("legacy_fraction", "must be in [0, 1]"));
        }
        Ok(())
    }

    /// Expected arriving gas per slot; handy for calibrating `lambda`
    /// against the block gas target.
    pub fn expected_gas_per_slot(&self) -> f64 {
        let txs = self.lambda * (self.uniform_share + self.pareto_share);
        let gas = self.gas_small_prob * self.gas_small as f64
            + (1.0 - self.gas_small_prob) * self.gas_large as f64;
        txs * gas
    }
}

/// One slot of demand: the arrival rate, the reference price users anchor
/// their bids on, and optionally the fraction of legacy-format bids.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDemand {
    pub lambda: f64,
    pub reference_price: Wei,
    pub legacy_fraction: Option<f64>,
}

/// A per-slot demand series, synthetic or replayed from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTrace {
    slots: Vec<SlotDemand>,
}

impl DemandTrace {
    pub fn new(slots: Vec<SlotDemand>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidParam { name: "trace", reason: "must have >= 1 slot".into() });
        }
        for (i, s) in slots.iter().enumerate() {
            if s.lambda > 0.0 && s.reference_price == 0 {
                return Err(Error::InvalidParam {
                    name: "trace",
                    reason: format!("slot {i} has positive demand but zero reference price"),
                });
            }
        }
        Ok(Self { slots })
    }

    /// Flat synthetic demand.
    pub fn constant(slots: usize, lambda: f64, reference_price: Wei) -> Result<Self> {
        Self::new(vec![SlotDemand { lambda, reference_price, legacy_fraction: None }; slots])
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[SlotDemand] {
        &self.slots
    }
}

/// Builds a replay trace from recorded blocks: the reference price is the
/// median-smoothed weighted average gas price per block (half-width
/// `eta`), the arrival rate is the configured constant, and the per-slot
/// legacy fraction comes from the smoothed EIP-1559 adoption series.
pub fn trace_from_dataset(blocks: &[BlockRecord], eta: usize, lambda: f64) -> Result<DemandTrace> {
    if blocks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dataset = Dataset::new(blocks.to_vec())?;
    let smoothed_price = median_filter(&dataset.price_series(), eta)?;
    let smoothed_eip = median_filter(&dataset.eip_fraction_series(), eta)?;
    let slots = smoothed_price
        .points()
        .iter()
        .zip(smoothed_eip.values())
        .map(|((_, price), eip)| SlotDemand {
            lambda,
            reference_price: crate::num::rational_to_wei_floor(price),
            legacy_fraction: Some(1.0 - crate::num::rational_to_f64(eip).clamp(0.0, 1.0)),
        })
        .collect();
    DemandTrace::new(slots)
}

/// Draws the number of arrivals in a slot from Poisson(`lambda`).
pub fn draw_num_transactions(lambda: f64, rng: &mut SeededRng) -> Result<u64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidParam { name: "lambda", reason: "must be >= 0".into() });
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(lambda).map_err(|e| Error::InvalidParam {
        name: "lambda",
        reason: e.to_string(),
    })?;
    Ok(dist.sample(rng) as u64)
}

/// Draws the slot's transactions for `n` arrival units: `uniform_share*n`
/// (rounded) regular bids from the uniform band around the reference price
/// and `pareto_share*n` (rounded) high-urgency bids from the Pareto tail.
/// EIP-1559 bids set the max fee to the valuation with a fixed priority
/// fee; legacy bids put the full valuation in both fields. Ids are assigned
/// sequentially from `next_id`.
pub fn draw_transactions(
    n: u64,
    reference_price: Wei,
    params: &DemandParams,
    legacy_fraction: Option<f64>,
    slot: Height,
    next_id: &mut u64,
    rng: &mut SeededRng,
) -> Result<Vec<Transaction>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if reference_price == 0 {
        return Err(Error::InvalidParam {
            name: "reference_price",
            reason: "must be > 0 when transactions arrive".into(),
        });
    }
    let f_hat = reference_price as f64;
    let uniform_count = (params.uniform_share * n as f64).round() as u64;
    let pareto_count = (params.pareto_share * n as f64).round() as u64;
    let legacy_fraction = legacy_fraction.unwrap_or(params.legacy_fraction);

    let lo = (params.uniform_center_factor - params.uniform_halfwidth_factor) * f_hat;
    let hi = (params.uniform_center_factor + params.uniform_halfwidth_factor) * f_hat;
    let uniform = Uniform::new_inclusive(lo, hi);
    let pareto = Pareto::new(params.pareto_scale_factor * f_hat, params.pareto_shape)
        .map_err(|e| Error::InvalidParam { name: "pareto", reason: e.to_string() })?;

    let mut out = Vec::with_capacity((uniform_count + pareto_count) as usize);
    let mut push = |valuation: f64, rng: &mut SeededRng, out: &mut Vec<Transaction>| -> Result<()> {
        let valuation = f64_to_wei(valuation)?;
        let gas = if rng.gen_bool(params.gas_small_prob) { params.gas_small } else { params.gas_large };
        let legacy = rng.gen_bool(legacy_fraction);
        let id = *next_id;
        *next_id += 1;
        let tx = if legacy {
            Transaction::legacy(id, valuation, gas, slot)?
        } else {
            Transaction::eip1559(id, valuation, params.default_priority_fee, gas, slot)?
        };
        out.push(tx);
        Ok(())
    };

    for _ in 0..uniform_count {
        let v = uniform.sample(rng);
        push(v, rng, &mut out)?;
    }
    for _ in 0..pareto_count {
        let v = pareto.sample(rng);
        push(v, rng, &mut out)?;
    }
    Ok(out)
}

fn f64_to_wei(v: f64) -> Result<Wei> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Overflow { context: "valuation draw" });
    }
    if v >= u128::MAX as f64 {
        return Err(Error::Overflow { context: "valuation draw" });
    }
    Ok(v.round() as Wei)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::TxType;

    #[test]
    fn zero_rate_draws_nothing() {
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(draw_num_transactions(0.0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let mut rng = seeded_rng(1);
        assert!(draw_num_transactions(-1.0, &mut rng).is_err());
    }

    #[test]
    fn poisson_mean_matches_rate() {
        let mut rng = seeded_rng(7);
        let draws = 1_000_000u64;
        let total: u64 =
            (0..draws).map(|_| draw_num_transactions(3.0, &mut rng).unwrap()).sum();
        let mean = total as f64 / draws as f64;
        assert!((2.99..=3.01).contains(&mean), "sample mean {mean}");
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded_rng(42);
        let mut b = seeded_rng(42);
        for _ in 0..100 {
            assert_eq!(
                draw_num_transactions(5.0, &mut a).unwrap(),
                draw_num_transactions(5.0, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn no_arrivals_no_transactions() {
        let mut rng = seeded_rng(1);
        let mut id = 0;
        let txs = draw_transactions(0, 40 * GWEI, &DemandParams::default(), None, 0, &mut id, &mut rng)
            .unwrap();
        assert!(txs.is_empty());
    }

    #[test]
    fn class_counts_for_four_arrivals() {
        let mut rng = seeded_rng(1);
        let mut id = 0;
        let txs = draw_transactions(4, 40 * GWEI, &DemandParams::default(), None, 0, &mut id, &mut rng)
            .unwrap();
        // round(2.75*4) = 11 regular plus round(0.25*4) = 1 heavy-tailed
        assert_eq!(txs.len(), 12);
        assert_eq!(id, 12);
    }

    #[test]
    fn zero_reference_price_rejected() {
        let mut rng = seeded_rng(1);
        let mut id = 0;
        let err =
            draw_transactions(3, 0, &DemandParams::default(), None, 0, &mut id, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InvalidParam { .. }));
    }

    #[test]
    fn uniform_class_mean_tracks_reference_price() {
        let params = DemandParams { legacy_fraction: 0.0, ..DemandParams::default() };
        let mut rng = seeded_rng(11);
        let mut id = 0;
        let f_hat = 40 * GWEI;
        let mut sum = 0f64;
        let mut count = 0u64;
        // Uniform-class draws come first in each batch.
        for _ in 0..10_000 {
            let txs = draw_transactions(4, f_hat, &params, None, 0, &mut id, &mut rng).unwrap();
            for tx in &txs[..11] {
                sum += tx.max_fee as f64;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let expected = 0.75 * f_hat as f64;
        assert!((mean - expected).abs() / expected < 0.02, "uniform mean {mean}");
    }

    #[test]
    fn pareto_class_mean_tracks_reference_price() {
        let params = DemandParams { legacy_fraction: 0.0, ..DemandParams::default() };
        let mut rng = seeded_rng(4);
        let mut id = 0;
        let f_hat = 40 * GWEI;
        let mut sum = 0f64;
        let mut count = 0u64;
        for _ in 0..100_000 {
            let txs = draw_transactions(4, f_hat, &params, None, 0, &mut id, &mut rng).unwrap();
            sum += txs[11].max_fee as f64;
            count += 1;
        }
        let mean = sum / count as f64;
        // scale * shape / (shape - 1) = 4 Gwei * 1.35 / 0.35
        let expected = 0.1 * f_hat as f64 * 1.35 / 0.35;
        assert!((mean - expected).abs() / expected < 0.05, "pareto mean {mean}");
    }

    #[test]
    fn class_proportions_converge() {
        let mut rng = seeded_rng(3);
        let mut id = 0;
        let params = DemandParams::default();
        let mut total = 0u64;
        let mut slots = 0u64;
        for _ in 0..2_000 {
            let n = draw_num_transactions(3.0, &mut rng).unwrap();
            let txs = draw_transactions(n, 40 * GWEI, &params, None, 0, &mut id, &mut rng).unwrap();
            total += txs.len() as u64;
            slots += n;
        }
        // Uniform:pareto is 11:1, so the total is about 3x the arrival units.
        let ratio = total as f64 / slots as f64;
        assert!((2.9..=3.1).contains(&ratio), "total/arrivals {ratio}");
    }

    #[test]
    fn legacy_bids_put_valuation_in_both_fields() {
        let params = DemandParams { legacy_fraction: 1.0, ..DemandParams::default() };
        let mut rng = seeded_rng(5);
        let mut id = 0;
        let txs = draw_transactions(4, 40 * GWEI, &params, None, 9, &mut id, &mut rng).unwrap();
        for tx in txs {
            assert_eq!(tx.tx_type, TxType::Legacy);
            assert_eq!(tx.max_fee, tx.max_priority_fee);
            assert_eq!(tx.arrival_slot, 9);
        }
    }

    #[test]
    fn scale_equivariance_of_valuations() {
        // Doubling the reference price doubles the quantiles of both
        // classes (same seed, same draw path).
        let params = DemandParams { legacy_fraction: 0.0, ..DemandParams::default() };
        let draw_fees = |f_hat: Wei| {
            let mut rng = seeded_rng(17);
            let mut id = 0;
            let mut fees = Vec::new();
            for _ in 0..2_000 {
                let txs = draw_transactions(4, f_hat, &params, None, 0, &mut id, &mut rng).unwrap();
                fees.extend(txs.iter().map(|t| t.max_fee as f64));
            }
            fees.sort_by(f64::total_cmp);
            fees
        };
        let base = draw_fees(40 * GWEI);
        let doubled = draw_fees(80 * GWEI);
        for q in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
            let i = (base.len() as f64 * q) as usize;
            let ratio = doubled[i] / base[i];
            assert!((ratio - 2.0).abs() < 0.01, "quantile {q} ratio {ratio}");
        }
    }

    #[test]
    fn trace_from_constant_price_blocks() {
        let blocks: Vec<BlockRecord> = (0..20)
            .map(|h| BlockRecord {
                height: h,
                base_fee: GWEI,
                gas_used: 15_000_000,
                gas_limit: 30_000_000,
                txs: vec![crate::analytics::TxRecord {
                    tx_type: TxType::Eip1559,
                    max_fee: 40 * GWEI,
                    max_priority_fee: 2 * GWEI,
                    gas_limit: 21_000,
                }],
            })
            .collect();
        let trace = trace_from_dataset(&blocks, 5, 3.0).unwrap();
        assert_eq!(trace.len(), 20);
        assert!(trace.slots().iter().all(|s| s.reference_price == 40 * GWEI));
        assert!(trace.slots().iter().all(|s| s.legacy_fraction == Some(0.0)));
    }

    #[test]
    fn trace_smooths_out_price_outlier() {
        let mut blocks: Vec<BlockRecord> = (0..21)
            .map(|h| BlockRecord {
                height: h,
                base_fee: GWEI,
                gas_used: 15_000_000,
                gas_limit: 30_000_000,
                txs: vec![crate::analytics::TxRecord {
                    tx_type: TxType::Eip1559,
                    max_fee: 40 * GWEI,
                    max_priority_fee: 2 * GWEI,
                    gas_limit: 21_000,
                }],
            })
            .collect();
        blocks[10].txs[0].max_fee = 4_000 * GWEI;
        let trace = trace_from_dataset(&blocks, 3, 3.0).unwrap();
        assert!(trace.slots().iter().all(|s| s.reference_price == 40 * GWEI));
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(trace_from_dataset(&[], 10, 3.0).is_err());
    }
}
