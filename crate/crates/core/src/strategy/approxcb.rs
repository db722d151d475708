//! Approximative cost-benefit: a cache of the best `q` blocks found by one full
//! scan serves the following selections until it runs dry.

use std::fmt;
use std::str::FromStr;

use super::{better, BlockSet, SelectorCounters, SelectorError, VictimSelector};
use crate::flash::{BlockId, BlockMeta, Tick};
use crate::score::{cb_value, Score};

/// Cache size, as a percentage of the registered blocks or an absolute count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QParam {
    Percent(f64),
    Absolute(usize),
}

impl QParam {
    /// `max(1, floor(q% * registered))`.
    pub fn resolve(&self, registered: usize) -> usize {
        match *self {
            QParam::Percent(p) => ((p / 100.0 * registered as f64).floor() as usize).max(1),
            QParam::Absolute(n) => n.max(1),
        }
    }
}

impl FromStr for QParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(pct) = s.strip_suffix('%') {
            let p: f64 = pct
                .trim()
                .parse()
                .map_err(|e| format!("bad q percentage `{s}`: {e}"))?;
            if !(p > 0.0 && p <= 100.0) {
                return Err(format!("q percentage must be in (0, 100], got {p}"));
            }
            Ok(QParam::Percent(p))
        } else {
            let n: usize = s.parse().map_err(|e| format!("bad q `{s}`: {e}"))?;
            if n == 0 {
                return Err("q must be at least 1".into());
            }
            Ok(QParam::Absolute(n))
        }
    }
}

impl fmt::Display for QParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QParam::Percent(p) => write!(f, "{p}%"),
            QParam::Absolute(n) => write!(f, "{n}"),
        }
    }
}

pub struct ApproxCb {
    q: QParam,
    pages_per_block: u32,
    registered: BlockSet,
    cache: BlockSet,
    last_scan: u64,
    last_refill: bool,
    counters: SelectorCounters,
}

impl ApproxCb {
    pub fn new(q: QParam, total_blocks: usize, pages_per_block: u32) -> Self {
        ApproxCb {
            q,
            pages_per_block,
            registered: BlockSet::new(total_blocks),
            cache: BlockSet::new(total_blocks),
            last_scan: 0,
            last_refill: false,
            counters: SelectorCounters::default(),
        }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    pub fn cached(&self, block: BlockId) -> bool {
        self.cache.contains(block)
    }

    fn score(&self, meta: &BlockMeta, now: Tick) -> Score {
        cb_value(meta.valid_count, self.pages_per_block, meta.cb_age(now))
    }

    fn refill(&mut self, blocks: &[BlockMeta], now: Tick) -> BlockId {
        let mut cands: Vec<(Score, BlockId)> = self
            .registered
            .iter()
            .map(|b| (self.score(&blocks[b as usize], now), b))
            .collect();
        self.last_scan = cands.len() as u64;
        let q = self.q.resolve(cands.len()).min(cands.len());
        let rank = |a: &(Score, BlockId), b: &(Score, BlockId)| b.0.cmp(&a.0).then(a.1.cmp(&b.1));
        if q < cands.len() {
            cands.select_nth_unstable_by(q - 1, rank);
        }
        let top = &cands[..q];
        for &(_, b) in top {
            self.cache.insert(b);
        }
        self.counters.refills += 1;
        top.iter().min_by(|a, b| rank(a, b)).unwrap().1
    }
}

impl VictimSelector for ApproxCb {
    fn on_block_full(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.registered.insert(block) {
            Ok(())
        } else {
            Err(SelectorError::AlreadyRegistered(block))
        }
    }

    fn on_page_invalidated(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        // cache membership is deliberately left alone
        if self.registered.contains(block) {
            Ok(())
        } else {
            Err(SelectorError::UnknownBlock(block))
        }
    }

    fn on_block_erased(&mut self, block: BlockId) {
        self.registered.remove(block);
        self.cache.remove(block);
    }

    fn select_victim(&mut self, blocks: &[BlockMeta], now: Tick) -> Option<BlockId> {
        self.last_refill = false;
        if self.registered.is_empty() {
            return None;
        }
        let victim = if self.cache.is_empty() {
            self.last_refill = true;
            self.refill(blocks, now)
        } else {
            let mut best: Option<(Score, BlockId)> = None;
            for b in self.cache.iter() {
                let cand = (self.score(&blocks[b as usize], now), b);
                if best.as_ref().is_none_or(|cur| better(&cand, cur)) {
                    best = Some(cand);
                }
            }
            self.last_scan = self.cache.len() as u64;
            best.unwrap().1
        };
        self.cache.remove(victim);
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
        self.last_refill
    }
}
