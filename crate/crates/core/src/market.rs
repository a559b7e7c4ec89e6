//! Mempool maintenance, block construction by a revenue-maximizing miner,
//! and per-block reward/burn settlement.

use std::collections::HashSet;

use crate::fee::GasSchedule;
use crate::{Error, Gas, Height, Result, Wei};

/// Transaction type flag, matching the on-chain encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxType {
    Legacy = 0,
    Eip1559 = 1,
}

/// A pending bid: a max fee and max priority fee per gas unit, plus the gas
/// the transaction may consume. For legacy transactions the priority fee
/// equals the max fee, so the miner keeps the full remainder above the
/// base fee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: u64,
    pub tx_type: TxType,
    pub max_fee: Wei,
    pub max_priority_fee: Wei,
    pub gas_limit: Gas,
    pub arrival_slot: Height,
}

impl Transaction {
    pub fn eip1559(
        id: u64,
        max_fee: Wei,
        max_priority_fee: Wei,
        gas_limit: Gas,
        arrival_slot: Height,
    ) -> Result<Self> {
        if gas_limit == 0 {
            return Err(Error::InvalidParam { name: "gas_limit", reason: "must be > 0".into() });
        }
        Ok(Self { id, tx_type: TxType::Eip1559, max_fee, max_priority_fee, gas_limit, arrival_slot })
    }

    /// Legacy bid: the declared gas price becomes both fee caps.
    pub fn legacy(id: u64, gas_price: Wei, gas_limit: Gas, arrival_slot: Height) -> Result<Self> {
        if gas_limit == 0 {
            return Err(Error::InvalidParam { name: "gas_limit", reason: "must be > 0".into() });
        }
        Ok(Self {
            id,
            tx_type: TxType::Legacy,
            max_fee: gas_price,
            max_priority_fee: gas_price,
            gas_limit,
            arrival_slot,
        })
    }
}

/// The per-gas amount the miner earns from a transaction at base fee `b`:
/// `min(f - b, p)`. Errors if the transaction is not includable (`f < b`).
pub fn miner_tip(max_fee: Wei, max_priority_fee: Wei, base_fee: Wei) -> Result<Wei> {
    if max_fee < base_fee {
        return Err(Error::NotIncludable { id: 0, max_fee, base_fee });
    }
    Ok((max_fee - base_fee).min(max_priority_fee))
}

/// Set of pending transactions. Transactions persist until included in a
/// block; there is no eviction.
#[derive(Debug, Clone, Default)]
pub struct Mempool {
    pending: Vec<Transaction>,
    ids: HashSet<u64>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.contains(&id)
    }

    /// Merges newly arrived transactions into the pool. Ids must be fresh;
    /// a duplicate rejects the whole batch without partial insertion.
    pub fn update(&mut self, arrivals: Vec<Transaction>) -> Result<()> {
        for tx in &arrivals {
            if self.ids.contains(&tx.id) {
                return Err(Error::DuplicateTx { id: tx.id });
            }
        }
        let mut seen = HashSet::new();
        for tx in &arrivals {
            if !seen.insert(tx.id) {
                return Err(Error::DuplicateTx { id: tx.id });
            }
        }
        for tx in arrivals {
            self.ids.insert(tx.id);
            self.pending.push(tx);
        }
        Ok(())
    }
}

/// A constructed block: the included transactions and the base fee they
/// were selected under.
#[derive(Debug, Clone)]
pub struct BuiltBlock {
    pub height: Height,
    pub included: Vec<Transaction>,
    pub gas_used: Gas,
    pub base_fee_at_build: Wei,
}

impl BuiltBlock {
    /// `gas_used / block_gas_limit` in `[0, 1]`.
    pub fn relative_size(&self, schedule: &GasSchedule) -> f64 {
        self.gas_used as f64 / schedule.block_gas_limit() as f64
    }
}

/// Builds a block by greedily including pending transactions in descending
/// order of miner tip at base fee `b`, skipping bids below the base fee or
/// with a tip under `min_tip`, while the cumulative gas stays within the
/// block limit. Ties break by earlier arrival slot, then by id. Included
/// transactions are removed from the pool.
pub fn build_block(
    mempool: &mut Mempool,
    height: Height,
    base_fee: Wei,
    schedule: &GasSchedule,
    min_tip: Wei,
) -> BuiltBlock {
    // (tip, arrival, id, position)
    let mut candidates: Vec<(Wei, Height, u64, usize)> = Vec::new();
    let mut min_candidate_gas = Gas::MAX;
    for (pos, tx) in mempool.pending.iter().enumerate() {
        if tx.max_fee < base_fee {
            continue;
        }
        let tip = (tx.max_fee - base_fee).min(tx.max_priority_fee);
        if tip < min_tip {
            continue;
        }
        min_candidate_gas = min_candidate_gas.min(tx.gas_limit);
        candidates.push((tip, tx.arrival_slot, tx.id, pos));
    }
    candidates.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut remaining = schedule.block_gas_limit();
    let mut included_pos: Vec<usize> = Vec::new();
    for &(_, _, _, pos) in &candidates {
        if remaining < min_candidate_gas {
            break;
        }
        let gas = mempool.pending[pos].gas_limit;
        if gas <= remaining {
            remaining -= gas;
            included_pos.push(pos);
        }
    }

    if included_pos.is_empty() {
        return BuiltBlock { height, included: vec![], gas_used: 0, base_fee_at_build: base_fee };
    }

    // Extract in greedy inclusion order; the rest keep their pool order.
    let mut slots: Vec<Option<Transaction>> = mempool.pending.drain(..).map(Some).collect();
    let included: Vec<Transaction> =
        included_pos.iter().map(|&pos| slots[pos].take().expect("position included once")).collect();
    mempool.pending = slots.into_iter().flatten().collect();
    for tx in &included {
        mempool.ids.remove(&tx.id);
    }

    let gas_used = included.iter().map(|tx| tx.gas_limit).sum();
    BuiltBlock { height, included, gas_used, base_fee_at_build: base_fee }
}

/// Per-block settlement: tips to the miner, burned base fees, and the
/// miner's total revenue including the block creation reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSettlement {
    pub block_creation_reward: Wei,
    pub tips_total: Wei,
    pub burned_total: Wei,
    pub miner_revenue: Wei,
}

/// Settles a built block: `tips_total` sums tip * gas over included
/// transactions, `burned_total` is base fee * gas used, and the miner's
/// revenue is the creation reward plus the tips.
pub fn settle_block(block: &BuiltBlock, block_creation_reward: Wei) -> Result<BlockSettlement> {
    let overflow = || Error::Overflow { context: "block settlement" };
    let mut tips_total: Wei = 0;
    for tx in &block.included {
        let tip = miner_tip(tx.max_fee, tx.max_priority_fee, block.base_fee_at_build)?;
        let amount = tip.checked_mul(tx.gas_limit as Wei).ok_or_else(overflow)?;
        tips_total = tips_total.checked_add(amount).ok_or_else(overflow)?;
    }
    let burned_total =
        block.base_fee_at_build.checked_mul(block.gas_used as Wei).ok_or_else(overflow)?;
    let miner_revenue = block_creation_reward.checked_add(tips_total).ok_or_else(overflow)?;
    Ok(BlockSettlement { block_creation_reward, tips_total, burned_total, miner_revenue })
}

/// Total amount the included users pay: `(base fee + tip) * gas` summed
/// over the block. Computed independently of [`settle_block`] so the
/// conservation property `payments = burned + tips` can be checked against
/// it.
pub fn user_payments(block: &BuiltBlock) -> Result<Wei> {
    let overflow = || Error::Overflow { context: "user payments" };
    let mut total: Wei = 0;
    for tx in &block.included {
        let tip = miner_tip(tx.max_fee, tx.max_priority_fee, block.base_fee_at_build)?;
        let price = block.base_fee_at_build.checked_add(tip).ok_or_else(overflow)?;
        let amount = price.checked_mul(tx.gas_limit as Wei).ok_or_else(overflow)?;
        total = total.checked_add(amount).ok_or_else(overflow)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ETH, GWEI};

    fn gwei(x: u128) -> Wei {
        x * GWEI
    }

    #[test]
    fn tip_is_capped_by_priority_fee() {
        assert_eq!(miner_tip(100, 5, 90).unwrap(), 5);
    }

    #[test]
    fn tip_is_capped_by_fee_remainder() {
        assert_eq!(miner_tip(100, 5, 98).unwrap(), 2);
    }

    #[test]
    fn legacy_tip_is_full_remainder() {
        let tx = Transaction::legacy(1, 60, 21_000, 0).unwrap();
        assert_eq!(miner_tip(tx.max_fee, tx.max_priority_fee, 45).unwrap(), 15);
    }

    #[test]
    fn tip_rejects_fee_below_base() {
        assert!(matches!(miner_tip(80, 5, 90), Err(Error::NotIncludable { .. })));
    }

    #[test]
    fn mempool_union_and_identity() {
        let mut m = Mempool::new();
        let x = Transaction::eip1559(1, gwei(50), gwei(2), 21_000, 0).unwrap();
        m.update(vec![x.clone()]).unwrap();
        assert_eq!(m.len(), 1);
        m.update(vec![]).unwrap();
        assert_eq!(m.len(), 1);
        let y = Transaction::eip1559(2, gwei(60), gwei(2), 21_000, 0).unwrap();
        let z = Transaction::eip1559(3, gwei(70), gwei(2), 21_000, 0).unwrap();
        m.update(vec![y, z]).unwrap();
        assert_eq!(m.len(), 3);
        assert!(m.contains(1) && m.contains(2) && m.contains(3));
    }

    #[test]
    fn mempool_rejects_duplicate_id() {
        let mut m = Mempool::new();
        let x = Transaction::eip1559(1, gwei(50), gwei(2), 21_000, 0).unwrap();
        m.update(vec![x.clone()]).unwrap();
        let err = m.update(vec![x]).unwrap_err();
        assert!(matches!(err, Error::DuplicateTx { id: 1 }));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn empty_mempool_builds_empty_block() {
        let mut m = Mempool::new();
        let blk = build_block(&mut m, 5, gwei(30), &GasSchedule::default(), gwei(2));
        assert!(blk.included.is_empty());
        assert_eq!(blk.gas_used, 0);
        assert_eq!(blk.relative_size(&GasSchedule::default()), 0.0);
    }

    #[test]
    fn unaffordable_bids_leave_mempool_unchanged() {
        let mut m = Mempool::new();
        m.update(vec![
            Transaction::eip1559(1, gwei(10), gwei(2), 21_000, 0).unwrap(),
            Transaction::legacy(2, gwei(20), 21_000, 0).unwrap(),
        ])
        .unwrap();
        let blk = build_block(&mut m, 0, gwei(30), &GasSchedule::default(), gwei(2));
        assert!(blk.included.is_empty());
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn min_tip_filters_low_value_bids() {
        let mut m = Mempool::new();
        m.update(vec![
            // tip = min(f - b, p) = 1 Gwei, below the 2 Gwei threshold
            Transaction::eip1559(1, gwei(40), gwei(1), 21_000, 0).unwrap(),
            Transaction::eip1559(2, gwei(40), gwei(5), 21_000, 0).unwrap(),
        ])
        .unwrap();
        let blk = build_block(&mut m, 0, gwei(30), &GasSchedule::default(), gwei(2));
        assert_eq!(blk.included.len(), 1);
        assert_eq!(blk.included[0].id, 2);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn greedy_orders_by_tip_then_arrival_then_id() {
        let schedule = GasSchedule::new(42_000).unwrap();
        let mut m = Mempool::new();
        m.update(vec![
            Transaction::eip1559(3, gwei(40), gwei(5), 21_000, 2).unwrap(),
            Transaction::eip1559(1, gwei(40), gwei(5), 21_000, 1).unwrap(),
            Transaction::eip1559(2, gwei(40), gwei(9), 21_000, 3).unwrap(),
        ])
        .unwrap();
        let blk = build_block(&mut m, 0, gwei(30), &schedule, 0);
        // Highest tip first, then the earlier arrival among equal tips.
        assert_eq!(blk.included.iter().map(|t| t.id).collect::<Vec<_>>(), vec![2, 1]);
        assert_eq!(blk.gas_used, 42_000);
        assert_eq!(m.len(), 1);
        assert!(m.contains(3));
    }

    #[test]
    fn greedy_skips_oversized_and_continues() {
        let schedule = GasSchedule::new(100_000).unwrap();
        let mut m = Mempool::new();
        m.update(vec![
            Transaction::eip1559(1, gwei(50), gwei(10), 90_000, 0).unwrap(),
            Transaction::eip1559(2, gwei(50), gwei(8), 60_000, 0).unwrap(),
            Transaction::eip1559(3, gwei(50), gwei(6), 10_000, 0).unwrap(),
        ])
        .unwrap();
        let blk = build_block(&mut m, 0, gwei(30), &schedule, 0);
        // 90k included, 60k does not fit, 10k still does.
        assert_eq!(blk.included.iter().map(|t| t.id).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(blk.gas_used, 100_000);
    }

    #[test]
    fn settle_empty_block_is_pure_reward() {
        let blk = BuiltBlock { height: 0, included: vec![], gas_used: 0, base_fee_at_build: gwei(30) };
        let s = settle_block(&blk, 2 * ETH).unwrap();
        assert_eq!(s.miner_revenue, 2 * ETH);
        assert_eq!(s.burned_total, 0);
        assert_eq!(s.tips_total, 0);
    }

    #[test]
    fn settle_reproduces_reward_accounting() {
        // Base fee 100 Gwei over 1.18M gas burns 0.118 ETH; tips of 10 Gwei
        // on 1M gas and 50 Gwei on 180k gas add 0.019 ETH, so the effective
        // fees total 0.137 ETH and the miner earns 2.019 ETH.
        let base_fee = gwei(100);
        let blk = BuiltBlock {
            height: 13_025_736,
            included: vec![
                Transaction::eip1559(1, gwei(110), gwei(10), 1_000_000, 0).unwrap(),
                Transaction::eip1559(2, gwei(150), gwei(50), 180_000, 0).unwrap(),
            ],
            gas_used: 1_180_000,
            base_fee_at_build: base_fee,
        };
        let s = settle_block(&blk, 2 * ETH).unwrap();
        assert_eq!(s.burned_total, 118_000_000_000_000_000); // 0.118 ETH
        assert_eq!(s.tips_total, 19_000_000_000_000_000); // 0.019 ETH
        assert_eq!(s.miner_revenue, 2_019_000_000_000_000_000); // 2.019 ETH
        assert_eq!(user_payments(&blk).unwrap(), 137_000_000_000_000_000); // 0.137 ETH
        assert_eq!(user_payments(&blk).unwrap(), s.burned_total + s.tips_total);
    }

    #[test]
    fn settle_single_transfer() {
        let blk = BuiltBlock {
            height: 0,
            included: vec![Transaction::eip1559(1, gwei(92), gwei(2), 21_000, 0).unwrap()],
            gas_used: 21_000,
            base_fee_at_build: gwei(90),
        };
        let s = settle_block(&blk, 2 * ETH).unwrap();
        assert_eq!(s.burned_total, gwei(1_890_000));
        assert_eq!(s.tips_total, gwei(42_000));
    }
}
