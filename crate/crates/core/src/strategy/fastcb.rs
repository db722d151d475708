//! Fast cost-benefit selection.
//!
//! Registered blocks live in one of two disjoint classes. Class 0 holds the few
//! candidates whose cost-benefit value has reached the threshold `t_cb`; the
//! victim is the class 0 argmax. Class 1 holds everything else, keyed by the
//! precomputed tick at which the block's value reaches `t_cb` (its shift time).
//! Keys are scaled by a time factor so that blocks sharing a shift tick get
//! distinct keys.
//!
//! Invariants maintained between selections:
//! - every class 0 block scores at least `t_cb` (a class 0 block never has its
//!   utilisation changed; an invalidation moves it to class 1);
//! - every class 1 key was computed against a threshold no larger than the
//!   current `t_cb`, so a class 1 block whose shift tick lies in the future
//!   scores strictly less than `t_cb`.
//!
//! Together they make the class 0 argmax equal to the global argmax. Raising
//! the threshold leaves class 1 keys in place; a key that fires is recomputed
//! against the current threshold before the block is promoted. Lowering the
//! threshold only happens in the empty-class rebuild, which re-keys every block.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{better, BlockSet, SelectorCounters, SelectorError, VictimSelector};
use crate::flash::{BlockId, BlockMeta, Tick};
use crate::score::{cb_value, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FastCbParams {
    /// Largest class 0 size tolerated before the threshold is raised.
    pub t0: usize,
    /// Class 0 size right after a threshold adjustment.
    pub c0: usize,
    /// Scale applied to shift ticks; must exceed the number of blocks sharing
    /// one shift tick. Doubled automatically if a tick's slot overflows.
    pub time_factor: u64,
}

impl Default for FastCbParams {
    fn default() -> Self {
        FastCbParams {
            t0: 125,
            c0: 25,
            time_factor: 1024,
        }
    }
}

impl FastCbParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.c0 == 0 {
            return Err("c0 must be at least 1".into());
        }
        if self.t0 < self.c0 {
            return Err(format!("t0 ({}) must be >= c0 ({})", self.t0, self.c0));
        }
        if self.time_factor == 0 {
            return Err("time factor must be positive".into());
        }
        Ok(())
    }
}

/// First tick at which a block whose utilisation stays at
/// `valid / pages_per_block` reaches cost-benefit value `threshold`, counting
/// age from `last_inv`. `None` means never.
///
/// For `0 < valid < N_p` this is `last_inv + ceil(2u * t_cb / (1 - u))`.
pub fn fastcb_shift_time(valid: u32, pages_per_block: u32, last_inv: Tick, threshold: Score) -> Option<Tick> {
    debug_assert!(valid <= pages_per_block);
    if valid == 0 {
        return Some(last_inv);
    }
    if !threshold.is_infinite() && threshold.numer() == 0 {
        return Some(last_inv);
    }
    if valid == pages_per_block || threshold.is_infinite() {
        return None;
    }
    let num = 2 * valid as u128 * threshold.numer();
    let den = (pages_per_block - valid) as u128 * threshold.denom();
    let wait = num.div_ceil(den);
    last_inv.checked_add(u64::try_from(wait).ok()?)
}

/// First tick at which the value strictly exceeds `threshold`; used for
/// blocks ranked behind the threshold block on ties.
fn first_tick_above(valid: u32, pages_per_block: u32, last_inv: Tick, threshold: Score) -> Option<Tick> {
    if threshold.is_infinite() {
        return None;
    }
    if valid == 0 {
        return Some(last_inv);
    }
    if valid == pages_per_block {
        return None;
    }
    let num = 2 * valid as u128 * threshold.numer();
    let den = (pages_per_block - valid) as u128 * threshold.denom();
    last_inv.checked_add(u64::try_from(num / den + 1).ok()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Absent,
    Class0,
    /// Scaled key in the shift map; `None` parks a block that never shifts.
    Class1(Option<u64>),
}

pub struct FastCb {
    params: FastCbParams,
    pages_per_block: u32,
    time_factor: u64,
    slot: Vec<Slot>,
    registered: BlockSet,
    class0: BlockSet,
    shifts: BTreeMap<u64, BlockId>,
    threshold: Score,
    /// Id of the block that set the threshold. Class 0 holds the blocks that
    /// rank at or above `(threshold, threshold_id)` under the usual order
    /// (higher score, then lower id), so ties at the threshold do not bounce
    /// between the classes.
    threshold_id: BlockId,
    last_scan: u64,
    last_rebuilt: bool,
    counters: SelectorCounters,
}

/// Best first: higher score, then lower block id.
fn rank(a: &(Score, BlockId), b: &(Score, BlockId)) -> Ordering {
    b.0.cmp(&a.0).then(a.1.cmp(&b.1))
}

impl FastCb {
    pub fn new(params: FastCbParams, total_blocks: usize, pages_per_block: u32) -> Self {
        FastCb {
            params,
            pages_per_block,
            time_factor: params.time_factor.max(1),
            slot: vec![Slot::Absent; total_blocks],
            registered: BlockSet::new(total_blocks),
            class0: BlockSet::new(total_blocks),
            shifts: BTreeMap::new(),
            threshold: Score::ZERO,
            threshold_id: BlockId::MAX,
            last_scan: 0,
            last_rebuilt: false,
            counters: SelectorCounters::default(),
        }
    }

    pub fn threshold(&self) -> Score {
        self.threshold
    }

    pub fn time_factor(&self) -> u64 {
        self.time_factor
    }

    pub fn class0_len(&self) -> usize {
        self.class0.len()
    }

    pub fn class1_len(&self) -> usize {
        self.registered.len() - self.class0.len()
    }

    pub fn in_class0(&self, block: BlockId) -> bool {
        self.class0.contains(block)
    }

    pub fn in_class1(&self, block: BlockId) -> bool {
        matches!(self.slot.get(block as usize), Some(Slot::Class1(_)))
    }

    /// Scaled shift key of a class 1 block, `None` if parked or not in class 1.
    pub fn class1_key(&self, block: BlockId) -> Option<u64> {
        match self.slot.get(block as usize) {
            Some(Slot::Class1(k)) => *k,
            _ => None,
        }
    }

    fn score(&self, meta: &BlockMeta, now: Tick) -> Score {
        cb_value(meta.valid_count, self.pages_per_block, meta.cb_age(now))
    }

    fn shift_of(&self, meta: &BlockMeta) -> Option<Tick> {
        let rule = if meta.block_id <= self.threshold_id {
            fastcb_shift_time
        } else {
            first_tick_above
        };
        rule(meta.valid_count, self.pages_per_block, meta.age_reference(), self.threshold)
    }

    fn detach(&mut self, block: BlockId) {
        match std::mem::replace(&mut self.slot[block as usize], Slot::Absent) {
            Slot::Class0 => {
                self.class0.remove(block);
            }
            Slot::Class1(Some(key)) => {
                self.shifts.remove(&key);
            }
            Slot::Class1(None) | Slot::Absent => {}
        }
    }

    fn insert_class1(&mut self, block: BlockId, shift: Option<Tick>) {
        let key = shift.and_then(|raw| self.free_key(raw));
        if let Some(key) = key {
            self.shifts.insert(key, block);
        }
        self.slot[block as usize] = Slot::Class1(key);
    }

    /// First unused scaled key inside the slot of tick `raw`.
    fn free_key(&mut self, raw: Tick) -> Option<u64> {
        loop {
            let base = raw.checked_mul(self.time_factor)?;
            let end = base.checked_add(self.time_factor)?;
            let mut key = base;
            while key < end && self.shifts.contains_key(&key) {
                key += 1;
            }
            if key < end {
                return Some(key);
            }
            self.grow_time_factor();
        }
    }

    fn grow_time_factor(&mut self) {
        let old = self.time_factor;
        let new = old * 2;
        let entries = std::mem::take(&mut self.shifts);
        self.time_factor = new;
        for (key, block) in entries {
            let rekeyed = (key / old)
                .checked_mul(new)
                .and_then(|k| k.checked_add(key % old));
            if let Some(k) = rekeyed {
                self.shifts.insert(k, block);
            }
            self.slot[block as usize] = Slot::Class1(rekeyed);
        }
    }

    fn promote_due(&mut self, blocks: &[BlockMeta], now: Tick) {
        while let Some((&key, &block)) = self.shifts.first_key_value() {
            if key / self.time_factor > now {
                break;
            }
            self.shifts.remove(&key);
            // the key may predate a threshold raise
            match self.shift_of(&blocks[block as usize]) {
                Some(raw) if raw <= now => {
                    self.class0.insert(block);
                    self.slot[block as usize] = Slot::Class0;
                }
                later => self.insert_class1(block, later),
            }
        }
    }

    /// Keeps the `c0` best of `cands` in class 0, re-keys the rest under the new
    /// threshold, and returns the best candidate.
    fn retain_best(&mut self, blocks: &[BlockMeta], mut cands: Vec<(Score, BlockId)>) -> BlockId {
        let keep = self.params.c0.min(cands.len());
        if keep < cands.len() {
            cands.select_nth_unstable_by(keep - 1, rank);
        }
        let (retained, demoted) = cands.split_at(keep);
        let worst = retained.iter().min_by(|a, b| rank(b, a)).unwrap();
        let best = retained.iter().min_by(|a, b| rank(a, b)).unwrap();
        self.threshold = worst.0;
        self.threshold_id = worst.1;
        for &(_, b) in retained {
            if self.slot[b as usize] != Slot::Class0 {
                self.detach(b);
                self.class0.insert(b);
                self.slot[b as usize] = Slot::Class0;
            }
        }
        for &(_, b) in demoted {
            self.detach(b);
            let shift = self.shift_of(&blocks[b as usize]);
            self.insert_class1(b, shift);
        }
        best.1
    }

    fn rebuild_empty(&mut self, blocks: &[BlockMeta], now: Tick) -> BlockId {
        let cands: Vec<_> = self
            .registered
            .iter()
            .map(|b| (self.score(&blocks[b as usize], now), b))
            .collect();
        self.last_scan = cands.len() as u64;
        // every block gets re-keyed, the threshold may have dropped
        self.shifts.clear();
        for &(_, b) in &cands {
            self.slot[b as usize] = Slot::Class1(None);
        }
        self.counters.rebuild_empty += 1;
        self.retain_best(blocks, cands)
    }

    fn rebuild_overflow(&mut self, blocks: &[BlockMeta], now: Tick) -> BlockId {
        let cands: Vec<_> = self
            .class0
            .iter()
            .map(|b| (self.score(&blocks[b as usize], now), b))
            .collect();
        self.last_scan = cands.len() as u64;
        self.counters.rebuild_overflow += 1;
        self.retain_best(blocks, cands)
    }
}

impl VictimSelector for FastCb {
    fn on_block_full(&mut self, blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if !self.registered.insert(block) {
            return Err(SelectorError::AlreadyRegistered(block));
        }
        let shift = self.shift_of(&blocks[block as usize]);
        self.insert_class1(block, shift);
        Ok(())
    }

    fn on_page_invalidated(&mut self, blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if !self.registered.contains(block) {
            return Err(SelectorError::UnknownBlock(block));
        }
        self.detach(block);
        let shift = self.shift_of(&blocks[block as usize]);
        self.insert_class1(block, shift);
        Ok(())
    }

    fn on_block_erased(&mut self, block: BlockId) {
        if self.registered.remove(block) {
            self.detach(block);
        }
    }

    fn select_victim(&mut self, blocks: &[BlockMeta], now: Tick) -> Option<BlockId> {
        self.last_rebuilt = false;
        if self.registered.is_empty() {
            return None;
        }
        self.promote_due(blocks, now);

        let victim = if self.class0.is_empty() {
            self.last_rebuilt = true;
            self.rebuild_empty(blocks, now)
        } else if self.class0.len() > self.params.t0 {
            self.last_rebuilt = true;
            self.rebuild_overflow(blocks, now)
        } else {
            let mut best: Option<(Score, BlockId)> = None;
            for b in self.class0.iter() {
                let cand = (self.score(&blocks[b as usize], now), b);
                if best.as_ref().is_none_or(|cur| better(&cand, cur)) {
                    best = Some(cand);
                }
            }
            self.last_scan = self.class0.len() as u64;
            best.unwrap().1
        };

        self.detach(victim);
        self.registered.remove(victim);
        self.counters.selections += 1;
        self.counters.scan_cost_total += self.last_scan;
        Some(victim)
    }

    fn scan_cost_last_selection(&self) -> u64 {
        self.last_scan
    }

    fn registered(&self) -> usize {
        self.registered.len()
    }

    fn counters(&self) -> SelectorCounters {
        self.counters
    }

    fn last_selection_rebuilt(&self) -> bool {
        self.last_rebuilt
    }
}
