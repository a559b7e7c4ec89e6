//! Dataset ingestion and the series statistics: gas-limit-weighted block
//! averages, batch averaging, median smoothing, the EIP-1559 adoption
//! fraction, and the block-size metrics used to score mechanisms.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_traits::{ToPrimitive, Zero};

use crate::market::TxType;
use crate::num::{Rational, Scalar};
use crate::{Error, Gas, Height, Result, Wei};

/// Relative block sizes above this threshold count as (almost) full.
pub const FULL_BLOCK_THRESHOLD: f64 = 0.95;

/// One transaction row of a dataset export.
#[derive(Debug, Clone)]
pub struct TxRecord {
    pub tx_type: TxType,
    pub max_fee: Wei,
    pub max_priority_fee: Wei,
    pub gas_limit: Gas,
}

/// One mined block: header-level figures plus its transactions.
#[derive(Debug, Clone)]
pub struct BlockRecord {
    pub height: Height,
    pub base_fee: Wei,
    pub gas_used: Gas,
    pub gas_limit: Gas,
    pub txs: Vec<TxRecord>,
}

impl BlockRecord {
    pub fn relative_size(&self) -> f64 {
        if self.gas_limit == 0 {
            return 0.0;
        }
        self.gas_used as f64 / self.gas_limit as f64
    }
}

/// A contiguous range of blocks loaded from a dataset export.
#[derive(Debug, Clone)]
pub struct Dataset {
    blocks: Vec<BlockRecord>,
}

impl Dataset {
    /// Wraps pre-built blocks, checking that heights are contiguous.
    pub fn new(blocks: Vec<BlockRecord>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for pair in blocks.windows(2) {
            if pair[1].height != pair[0].height + 1 {
                return Err(Error::Dataset(format!(
                    "heights not contiguous: {} followed by {}",
                    pair[0].height, pair[1].height
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// Loads the two-file comma-separated export: a blocks file with
    /// columns `height,base_fee_wei,gas_used,gas_limit` and a transactions
    /// file with columns `tx_id,block_height,tx_type,max_fee_wei,
    /// max_priority_fee_wei,gas_limit`. A leading header row is skipped.
    /// `from_height`/`to_height` (inclusive) restrict the block range.
    pub fn load(
        blocks_path: &Path,
        txs_path: &Path,
        from_height: Option<Height>,
        to_height: Option<Height>,
    ) -> Result<Self> {
        let in_range = |h: Height| {
            from_height.is_none_or(|lo| h >= lo) && to_height.is_none_or(|hi| h <= hi)
        };

        let mut blocks: Vec<BlockRecord> = Vec::new();
        for (line_no, line) in read_lines(blocks_path)? {
            let fields = split_row(&line, 4, blocks_path, line_no)?;
            if line_no == 1 && fields[0].parse::<Height>().is_err() {
                continue; // header
            }
            let height = parse_field::<Height>(&fields[0], "height", blocks_path, line_no)?;
            if !in_range(height) {
                continue;
            }
            blocks.push(BlockRecord {
                height,
                base_fee: parse_field(&fields[1], "base_fee_wei", blocks_path, line_no)?,
                gas_used: parse_field(&fields[2], "gas_used", blocks_path, line_no)?,
                gas_limit: parse_field(&fields[3], "gas_limit", blocks_path, line_no)?,
                txs: Vec::new(),
            });
        }
        blocks.sort_by_key(|b| b.height);
        let dataset = Self::new(blocks)?;
        let base = dataset.blocks[0].height;
        let mut blocks = dataset.blocks;

        for (line_no, line) in read_lines(txs_path)? {
            let fields = split_row(&line, 6, txs_path, line_no)?;
            if line_no == 1 && fields[1].parse::<Height>().is_err() {
                continue; // header
            }
            let height = parse_field::<Height>(&fields[1], "block_height", txs_path, line_no)?;
            if !in_range(height) {
                continue;
            }
            let idx = (height - base) as usize;
            if idx >= blocks.len() {
                return Err(Error::MalformedRow {
                    path: txs_path.display().to_string(),
                    line: line_no,
                    reason: format!("block height {height} not present in blocks file"),
                });
            }
            let tx_type = match fields[2].trim() {
                "0" => TxType::Legacy,
                "1" => TxType::Eip1559,
                other => {
                    return Err(Error::MalformedRow {
                        path: txs_path.display().to_string(),
                        line: line_no,
                        reason: format!("tx_type must be 0 or 1, got {other:?}"),
                    })
                }
            };
            let max_fee = parse_field(&fields[3], "max_fee_wei", txs_path, line_no)?;
            let max_priority_fee =
                parse_field(&fields[4], "max_priority_fee_wei", txs_path, line_no)?;
            let gas_limit = parse_field(&fields[5], "gas_limit", txs_path, line_no)?;
            if tx_type == TxType::Legacy && max_priority_fee != max_fee {
                return Err(Error::MalformedRow {
                    path: txs_path.display().to_string(),
                    line: line_no,
                    reason: "legacy transaction must have priority fee equal to max fee".into(),
                });
            }
            blocks[idx].txs.push(TxRecord { tx_type, max_fee, max_priority_fee, gas_limit });
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn first_height(&self) -> Height {
        self.blocks[0].height
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Per-block weighted average gas price series.
    pub fn price_series(&self) -> Series<Rational> {
        Series::from_points(self.blocks.iter().map(|b| (b.height, block_avg_gas_price(b))))
    }

    /// Per-block weighted EIP-1559 fraction series.
    pub fn eip_fraction_series(&self) -> Series<Rational> {
        Series::from_points(self.blocks.iter().map(|b| (b.height, eip_fraction(b))))
    }

    /// Per-block relative size series.
    pub fn block_size_series(&self) -> Series<f64> {
        Series::from_points(self.blocks.iter().map(|b| (b.height, b.relative_size())))
    }
}

type NumberedLines = Vec<(usize, String)>;

fn read_lines(path: &Path) -> Result<NumberedLines> {
    let file = File::open(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line =
            line.map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn split_row(line: &str, expected: usize, path: &Path, line_no: usize) -> Result<Vec<String>> {
    let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
    if fields.len() != expected {
        return Err(Error::MalformedRow {
            path: path.display().to_string(),
            line: line_no,
            reason: format!("expected {expected} comma-separated fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    name: &str,
    path: &Path,
    line_no: usize,
) -> Result<T> {
    raw.parse().map_err(|_| Error::MalformedRow {
        path: path.display().to_string(),
        line: line_no,
        reason: format!("invalid {name}: {raw:?}"),
    })
}

/// Gas-limit-weighted average gas price of a block, `sum(u*f) / sum(u)`.
/// Empty blocks average to zero.
pub fn block_avg_gas_price(block: &BlockRecord) -> Rational {
    weighted_mean(block.txs.iter().map(|tx| (tx.gas_limit, Rational::from_integer(tx.max_fee.into()))))
}

/// Gas-limit-weighted fraction of EIP-1559 transactions in a block.
pub fn eip_fraction(block: &BlockRecord) -> Rational {
    weighted_mean(block.txs.iter().map(|tx| {
        let flag = match tx.tx_type {
            TxType::Legacy => Rational::zero(),
            TxType::Eip1559 => Rational::from_integer(1.into()),
        };
        (tx.gas_limit, flag)
    }))
}

fn weighted_mean(items: impl Iterator<Item = (Gas, Rational)>) -> Rational {
    let mut num = Rational::zero();
    let mut den = Rational::zero();
    for (weight, value) in items {
        let w = Rational::from_integer(weight.into());
        num += value * &w;
        den += w;
    }
    if den.is_zero() {
        Rational::zero()
    } else {
        num / den
    }
}

/// An ordered series of `(index, value)` points with strictly increasing
/// indices. Indices are block heights for per-block series and middle
/// block heights for batch series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    points: Vec<(Height, T)>,
}

impl<T> Series<T> {
    pub fn new(points: Vec<(Height, T)>) -> Result<Self> {
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Dataset(format!(
                    "series indices not strictly increasing at {}",
                    pair[1].0
                )));
            }
        }
        Ok(Self { points })
    }

    /// Builds from an iterator already known to be strictly increasing.
    pub fn from_points(iter: impl Iterator<Item = (Height, T)>) -> Self {
        let points: Vec<_> = iter.collect();
        debug_assert!(points.windows(2).all(|p| p[1].0 > p[0].0));
        Self { points }
    }

    pub fn from_values(start: Height, values: Vec<T>) -> Self {
        Self { points: values.into_iter().enumerate().map(|(i, v)| (start + i as Height, v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(Height, T)] {
        &self.points
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.points.iter().map(|(_, v)| v)
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Series<U> {
        Series { points: self.points.iter().map(|(i, v)| (*i, f(v))).collect() }
    }
}

impl Series<Rational> {
    pub fn to_f64(&self) -> Series<f64> {
        self.map(|v| v.to_f64().unwrap_or(f64::NAN))
    }
}

/// Splits a series into `batches` contiguous batches and averages each one.
/// The output index of a batch is the index of its middle element (the
/// lower middle for even widths); when the length is not divisible the last
/// batch absorbs the remainder.
pub fn batch_averages<T: Scalar>(series: &Series<T>, batches: usize) -> Result<Series<T>> {
    if batches == 0 {
        return Err(Error::InvalidParam { name: "batches", reason: "must be >= 1".into() });
    }
    if batches > series.len() {
        return Err(Error::BatchCountTooLarge { batches, len: series.len() });
    }
    let width = series.len() / batches;
    let mut out = Vec::with_capacity(batches);
    for i in 0..batches {
        let start = i * width;
        let end = if i == batches - 1 { series.len() } else { start + width };
        let chunk = &series.points()[start..end];
        let mut sum = T::zero();
        for (_, v) in chunk {
            sum = sum + v.clone();
        }
        let count = T::from_usize(chunk.len())
            .ok_or(Error::Overflow { context: "batch average count" })?;
        let mid = chunk[(chunk.len() - 1) / 2].0;
        out.push((mid, sum / count));
    }
    Series::new(out)
}

/// Median smoothing with half-width `eta`: each output value is the median
/// of the values within `eta` positions, truncated at the series ends. The
/// median of an even-sized window is the lower of the two middle values,
/// so the output never leaves the observed value set.
pub fn median_filter<T: Clone + PartialOrd>(series: &Series<T>, eta: usize) -> Result<Series<T>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if eta == 0 {
        return Ok(Series { points: series.points.clone() });
    }
    let n = series.len();
    let mut out = Vec::with_capacity(n);
    let mut window: Vec<&T> = Vec::with_capacity(2 * eta + 1);
    for i in 0..n {
        let lo = i.saturating_sub(eta);
        let hi = (i + eta + 1).min(n);
        window.clear();
        window.extend(series.points[lo..hi].iter().map(|(_, v)| v));
        window.sort_by(|a, b| a.partial_cmp(b).expect("series values must be comparable"));
        let median = window[(window.len() - 1) / 2].clone();
        out.push((series.points[i].0, median));
    }
    Ok(Series { points: out })
}

/// Block-size metrics over a series of relative sizes: the mean and the
/// fraction of values strictly greater than `threshold`.
pub fn block_size_metrics<T: Scalar>(series: &Series<T>, threshold: &T) -> Result<(T, T)> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut sum = T::zero();
    let mut above = 0usize;
    for v in series.values() {
        sum = sum + v.clone();
        if v > threshold {
            above += 1;
        }
    }
    let count =
        T::from_usize(series.len()).ok_or(Error::Overflow { context: "metrics count" })?;
    let frac_num =
        T::from_usize(above).ok_or(Error::Overflow { context: "metrics count" })?;
    Ok((sum / count.clone(), frac_num / count))
}
