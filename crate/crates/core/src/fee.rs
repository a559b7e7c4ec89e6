//! Base fee state and the two learning-rate update rules: the constant-rate
//! multiplicative update and the AIMD (additive increase, multiplicative
//! decrease) variable rate.
//!
//! All arithmetic is exact. Base fees are integer wei, learning rates are
//! [`Rational`], and the per-block update is computed as a rational and
//! floored to wei, so a trajectory is reproducible bit for bit.

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::num::{ratio, Rational};
use crate::{Error, Gas, Height, Result, Wei};

/// Minimum base fee in wei. The multiplicative update has zero as an
/// absorbing state, so the fee is floored here instead.
pub const DEFAULT_BASE_FEE_FLOOR: Wei = 7;

/// Current base fee and the height it applies to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseFeeState {
    pub base_fee: Wei,
    pub block_height: Height,
}

impl BaseFeeState {
    pub fn new(base_fee: Wei, block_height: Height) -> Self {
        Self { base_fee, block_height }
    }
}

/// Block gas limit and the derived half-limit target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GasSchedule {
    block_gas_limit: Gas,
}

impl GasSchedule {
    /// The limit must be positive and even so the target is exactly half.
    pub fn new(block_gas_limit: Gas) -> Result<Self> {
        if block_gas_limit == 0 || !block_gas_limit.is_multiple_of(2) {
            return Err(Error::InvalidParam {
                name: "block_gas_limit",
                reason: format!("must be positive and even, got {block_gas_limit}"),
            });
        }
        Ok(Self { block_gas_limit })
    }

    pub fn block_gas_limit(&self) -> Gas {
        self.block_gas_limit
    }

    pub fn target(&self) -> Gas {
        self.block_gas_limit / 2
    }

    /// Relative block size `gas_used / limit` as an exact rational.
    pub fn relative_size(&self, gas_used: Gas) -> Rational {
        Rational::new(gas_used.into(), self.block_gas_limit.into())
    }
}

impl Default for GasSchedule {
    /// 30M gas limit, 15M target.
    fn default() -> Self {
        Self { block_gas_limit: 30_000_000 }
    }
}

/// Parameters of the AIMD learning-rate scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct AimdParams {
    pub alpha: Rational,
    pub beta: Rational,
    pub gamma: Rational,
    pub d_min: Rational,
    pub d_max: Rational,
    pub window_n: usize,
}

impl AimdParams {
    /// Validates every range constraint: `alpha > 0`, `beta` in `[0,1]`,
    /// `gamma` in `[0,1/2]`, `0 < d_min <= d_max <= 1`, `window_n >= 1`.
    /// `d_max` is capped at 1 because the base fee update needs the
    /// per-block multiplier `1 - d` to stay non-negative.
    pub fn new(
        alpha: Rational,
        beta: Rational,
        gamma: Rational,
        d_min: Rational,
        d_max: Rational,
        window_n: usize,
    ) -> Result<Self> {
        let bad = |name: &'static str, reason: &str| Error::InvalidParam {
            name,
            reason: reason.to_string(),
        };
        if !alpha.is_positive() {
            return Err(bad("alpha", "must be > 0"));
        }
        if beta.is_negative() || beta > Rational::one() {
            return Err(bad("beta", "must be in [0, 1]"));
        }
        if gamma.is_negative() || gamma > ratio(1, 2) {
            return Err(bad("gamma", "must be in [0, 1/2]"));
        }
        if !d_min.is_positive() {
            return Err(bad("d_min", "must be > 0"));
        }
        if d_max < d_min {
            return Err(bad("d_max", "must be >= d_min"));
        }
        if d_max > Rational::one() {
            return Err(bad("d_max", "must be <= 1"));
        }
        if window_n == 0 {
            return Err(bad("window_n", "must be >= 1"));
        }
        Ok(Self { alpha, beta, gamma, d_min, d_max, window_n })
    }
}

impl Default for AimdParams {
    /// n=8, alpha=0.025, beta=0.95, gamma=0.25, d_min=0.0125, d_max=1.
    fn default() -> Self {
        Self {
            alpha: ratio(1, 40),
            beta: ratio(19, 20),
            gamma: ratio(1, 4),
            d_min: ratio(1, 80),
            d_max: Rational::one(),
            window_n: 8,
        }
    }
}

/// Learning-rate controller: a fixed rate, or the AIMD state machine with
/// its current rate and the rolling window of recent relative block sizes.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // one per run, size is irrelevant
pub enum FeeController {
    Constant {
        d: Rational,
    },
    Aimd {
        params: AimdParams,
        d: Rational,
        window: VecDeque<Rational>,
    },
}

impl FeeController {
    pub fn constant(d: Rational) -> Result<Self> {
        validate_rate(&d)?;
        Ok(Self::Constant { d })
    }

    /// AIMD controller starting from `d0`, which must lie in
    /// `[d_min, d_max]`.
    pub fn aimd(params: AimdParams, d0: Rational) -> Result<Self> {
        if d0 < params.d_min || d0 > params.d_max {
            return Err(Error::InvalidParam {
                name: "d0",
                reason: format!("must be in [{}, {}]", params.d_min, params.d_max),
            });
        }
        Ok(Self::Aimd { params, d: d0, window: VecDeque::new() })
    }

    /// The learning rate the next update would start from.
    pub fn learning_rate(&self) -> &Rational {
        match self {
            Self::Constant { d } => d,
            Self::Aimd { d, .. } => d,
        }
    }

    /// Advances the base fee by one block. For the AIMD variant the slot's
    /// relative size enters the window and the learning rate is updated
    /// first; the new rate then drives the base fee update.
    pub fn step(
        &mut self,
        state: &BaseFeeState,
        gas_used: Gas,
        schedule: &GasSchedule,
        base_fee_floor: Wei,
    ) -> Result<BaseFeeState> {
        let d = match self {
            Self::Constant { d } => d.clone(),
            Self::Aimd { params, d, window } => {
                if window.len() == params.window_n {
                    window.pop_front();
                }
                window.push_back(schedule.relative_size(gas_used));
                *d = aimd_update(d, window.iter(), params);
                d.clone()
            }
        };
        let base_fee = base_fee_next(state.base_fee, gas_used, schedule, &d, base_fee_floor)?;
        Ok(BaseFeeState::new(base_fee, state.block_height + 1))
    }
}

fn validate_rate(d: &Rational) -> Result<()> {
    if !d.is_positive() || *d > Rational::one() {
        return Err(Error::InvalidParam {
            name: "d",
            reason: format!("learning rate must be in (0, 1], got {d}"),
        });
    }
    Ok(())
}

/// One application of the base fee update rule:
/// `b' = b * (1 + d * (gas_used - target) / target)`, evaluated exactly and
/// floored to integer wei, then clamped from below to `base_fee_floor`.
///
/// The result equals `b` exactly when `gas_used` hits the target.
pub fn base_fee_next(
    base_fee: Wei,
    gas_used: Gas,
    schedule: &GasSchedule,
    d: &Rational,
    base_fee_floor: Wei,
) -> Result<Wei> {
    if gas_used > schedule.block_gas_limit() {
        return Err(Error::GasAboveLimit { gas_used, limit: schedule.block_gas_limit() });
    }
    validate_rate(d)?;

    let target = BigInt::from(schedule.target());
    let delta = BigInt::from(gas_used) - &target;
    // b * (q*target + p*delta) / (q*target); numerator is non-negative
    // because |delta| <= target and p <= q, so truncating division floors.
    let numer = BigInt::from(base_fee) * (d.denom() * &target + d.numer() * delta);
    let denom = d.denom() * target;
    debug_assert!(!numer.is_negative());
    let next = numer / denom;
    let next = next.to_u128().ok_or(Error::Overflow { context: "base fee update" })?;
    Ok(next.max(base_fee_floor))
}

/// The AIMD learning-rate update. `window` holds the most recent relative
/// block sizes (possibly fewer than `n` right after start-up; the mean is
/// taken over whatever is available). An empty window leaves `d` unchanged.
///
/// If the window mean is below `gamma` or above `1 - gamma` the rate rises
/// by `alpha` (capped at `d_max`); otherwise it decays by the factor `beta`
/// (floored at `d_min`). Means exactly at either threshold take the decay
/// branch.
pub fn aimd_update<'a, I>(d: &Rational, window: I, params: &AimdParams) -> Rational
where
    I: IntoIterator<Item = &'a Rational>,
{
    let mut sum = Rational::zero();
    let mut len = 0usize;
    for g in window {
        sum += g;
        len += 1;
    }
    if len == 0 {
        return d.clone();
    }
    let g_avg = sum / Rational::from_integer(len.into());
    let far_from_target = g_avg < params.gamma || g_avg > Rational::one() - &params.gamma;
    if far_from_target {
        (d + &params.alpha).min(params.d_max.clone())
    } else {
        (&params.beta * d).max(params.d_min.clone())
    }
}
