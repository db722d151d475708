//! Strategies that evaluate every registered block on each selection.

use super::{better, BlockSet, SelectorCounters, SelectorError, VictimSelector};
use crate::flash::{BlockId, BlockMeta, Tick};
use crate::score::{cat_value, cb_value, cwa_value, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    CostBenefit,
    CostAgeTimes,
    CostWithAge,
}

impl ScoreKind {
    pub fn evaluate(self, meta: &BlockMeta, pages_per_block: u32, now: Tick) -> Score {
        match self {
            ScoreKind::CostBenefit => cb_value(meta.valid_count, pages_per_block, meta.cb_age(now)),
            ScoreKind::CostAgeTimes => cat_value(
                meta.valid_count,
                pages_per_block,
                meta.creation_age(now),
                meta.erase_count,
            ),
            ScoreKind::CostWithAge => {
                let cwa = cwa_value(meta.inv_count, meta.inv_time_sum, now);
                #[cfg(debug_assertions)]
                debug_assert_eq!(cwa, meta.cwa_brute(now), "block {}", meta.block_id);
                Score::integer(cwa)
            }
        }
    }
}

/// Argmax of a score over all registered blocks (CB, CAT, FeGC).
pub struct LinearScan {
    kind: ScoreKind,
    pages_per_block: u32,
    set: BlockSet,
    last_scan: u64,
    counters: SelectorCounters,
}

impl LinearScan {
    pub fn new(kind: ScoreKind, total_blocks: usize, pages_per_block: u32) -> Self {
        LinearScan {
            kind,
            pages_per_block,
            set: BlockSet::new(total_blocks),
            last_scan: 0,
            counters: SelectorCounters::default(),
        }
    }
}

impl VictimSelector for LinearScan {
    fn on_block_full(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.set.insert(block) {
            Ok(())
        } else {
            Err(SelectorError::AlreadyRegistered(block))
        }
    }

    fn on_page_invalidated(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.set.contains(block) {
            Ok(())
        } else {
            Err(SelectorError::UnknownBlock(block))
        }
    }

    fn on_block_erased(&mut self, block: BlockId) {
        self.set.remove(block);
    }

    fn select_victim(&mut self, blocks: &[BlockMeta], now: Tick) -> Option<BlockId> {
        let mut best: Option<(Score, BlockId)> = None;
        for b in self.set.iter() {
            let cand = (self.kind.evaluate(&blocks[b as usize], self.pages_per_block, now), b);
            if best.as_ref().is_none_or(|cur| better(&cand, cur)) {
                best = Some(cand);
            }
        }
        let (_, victim) = best?;
        self.last_scan = self.set.len() as u64;
        self.counters.selections += 1;
        self.counters.scan_cost_total += self.last_scan;
        self.set.remove(victim);
        Some(victim)
    }

    fn scan_cost_last_selection(&self) -> u64 {
        self.last_scan
    }

    fn registered(&self) -> usize {
        self.set.len()
    }

    fn counters(&self) -> SelectorCounters {
        self.counters
    }
}

/// Fewest valid pages among blocks at least `tau` ticks old (age counted from
/// the first page write). Falls back to the global minimum when no block is
/// old enough.
pub struct AgeThreshold {
    tau: u64,
    set: BlockSet,
    last_scan: u64,
    counters: SelectorCounters,
}

impl AgeThreshold {
    pub fn new(tau: u64, total_blocks: usize) -> Self {
        AgeThreshold {
            tau,
            set: BlockSet::new(total_blocks),
            last_scan: 0,
            counters: SelectorCounters::default(),
        }
    }
}

impl VictimSelector for AgeThreshold {
    fn on_block_full(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.set.insert(block) {
            Ok(())
        } else {
            Err(SelectorError::AlreadyRegistered(block))
        }
    }

    fn on_page_invalidated(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.set.contains(block) {
            Ok(())
        } else {
            Err(SelectorError::UnknownBlock(block))
        }
    }

    fn on_block_erased(&mut self, block: BlockId) {
        self.set.remove(block);
    }

    fn select_victim(&mut self, blocks: &[BlockMeta], now: Tick) -> Option<BlockId> {
        let mut old_enough: Option<(u32, BlockId)> = None;
        let mut any: Option<(u32, BlockId)> = None;
        for b in self.set.iter() {
            let meta = &blocks[b as usize];
            let key = (meta.valid_count, b);
            if any.is_none_or(|cur| key < cur) {
                any = Some(key);
            }
            if meta.creation_age(now) >= self.tau && old_enough.is_none_or(|cur| key < cur) {
                old_enough = Some(key);
            }
        }
        let (_, victim) = old_enough.or(any)?;
        self.last_scan = self.set.len() as u64;
        self.counters.selections += 1;
        self.counters.scan_cost_total += self.last_scan;
        self.set.remove(victim);
        Some(victim)
    }

    fn scan_cost_last_selection(&self) -> u64 {
        self.last_scan
    }

    fn registered(&self) -> usize {
        self.set.len()
    }

    fn counters(&self) -> SelectorCounters {
        self.counters
    }
}
