//! GC victim selection.
//!
//! Every strategy implements [`VictimSelector`], an event-driven interface fed
//! by one channel of the FTL. A selector only ever sees `Used` blocks: a block
//! is registered by `on_block_full`, updated by `on_page_invalidated`, handed
//! out (and forgotten) by `select_victim`, and `on_block_erased` drops any
//! remaining reference. All strategies break ties toward the lowest block id.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::flash::{BlockId, BlockMeta, Tick};

mod approxcb;
mod fastcb;
mod fifo;
mod greedy;
mod linear;

pub use approxcb::{ApproxCb, QParam};
pub use fastcb::{fastcb_shift_time, FastCb, FastCbParams};
pub use fifo::Fifo;
pub use greedy::{BucketGreedy, HeapGreedy};
pub use linear::{AgeThreshold, LinearScan, ScoreKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectorError {
    #[error("block {0} is not registered with the selector")]
    UnknownBlock(BlockId),
    #[error("block {0} is already registered")]
    AlreadyRegistered(BlockId),
}

/// Cumulative per-selector bookkeeping counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelectorCounters {
    pub selections: u64,
    pub scan_cost_total: u64,
    pub rebuild_empty: u64,
    pub rebuild_overflow: u64,
    pub refills: u64,
}

impl std::ops::Sub for SelectorCounters {
    type Output = SelectorCounters;

    fn sub(self, rhs: Self) -> Self {
        SelectorCounters {
            selections: self.selections - rhs.selections,
            scan_cost_total: self.scan_cost_total - rhs.scan_cost_total,
            rebuild_empty: self.rebuild_empty - rhs.rebuild_empty,
            rebuild_overflow: self.rebuild_overflow - rhs.rebuild_overflow,
            refills: self.refills - rhs.refills,
        }
    }
}

impl std::ops::AddAssign for SelectorCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.selections += rhs.selections;
        self.scan_cost_total += rhs.scan_cost_total;
        self.rebuild_empty += rhs.rebuild_empty;
        self.rebuild_overflow += rhs.rebuild_overflow;
        self.refills += rhs.refills;
    }
}

pub trait VictimSelector: Send {
    /// Registers a block that just became `Used`.
    fn on_block_full(
        &mut self,
        blocks: &[BlockMeta],
        block: BlockId,
        now: Tick,
    ) -> Result<(), SelectorError>;

    /// A page of a registered block was invalidated at `now`.
    fn on_page_invalidated(
        &mut self,
        blocks: &[BlockMeta],
        block: BlockId,
        now: Tick,
    ) -> Result<(), SelectorError>;

    fn on_block_erased(&mut self, block: BlockId);

    /// Picks a victim and removes it from the candidate set.
    fn select_victim(&mut self, blocks: &[BlockMeta], now: Tick) -> Option<BlockId>;

    /// Blocks whose score was evaluated by the last `select_victim` call.
    fn scan_cost_last_selection(&self) -> u64;

    fn registered(&self) -> usize;

    fn counters(&self) -> SelectorCounters;

    /// True when the last selection rebuilt its candidate structure with a
    /// full or oversized scan (fast CB adjustments, approximative CB refills).
    fn last_selection_rebuilt(&self) -> bool {
        false
    }
}

/// Dense membership set over block ids with O(1) insert/remove.
#[derive(Debug, Clone)]
pub(crate) struct BlockSet {
    members: Vec<BlockId>,
    pos: Vec<u32>,
}

const NOT_MEMBER: u32 = u32::MAX;

impl BlockSet {
    pub fn new(capacity: usize) -> Self {
        BlockSet {
            members: Vec::new(),
            pos: vec![NOT_MEMBER; capacity],
        }
    }

    #[inline]
    pub fn contains(&self, b: BlockId) -> bool {
        self.pos.get(b as usize).is_some_and(|&p| p != NOT_MEMBER)
    }

    pub fn insert(&mut self, b: BlockId) -> bool {
        if self.contains(b) {
            return false;
        }
        if b as usize >= self.pos.len() {
            self.pos.resize(b as usize + 1, NOT_MEMBER);
        }
        self.pos[b as usize] = self.members.len() as u32;
        self.members.push(b);
        true
    }

    pub fn remove(&mut self, b: BlockId) -> bool {
        if !self.contains(b) {
            return false;
        }
        let i = self.pos[b as usize] as usize;
        self.members.swap_remove(i);
        if let Some(&moved) = self.members.get(i) {
            self.pos[moved as usize] = i as u32;
        }
        self.pos[b as usize] = NOT_MEMBER;
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.members.iter().copied()
    }
}

/// Parsed strategy string, e.g. `cb`, `approxcb:q=1%`, `age-threshold:tau=5000`.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Greedy,
    ConstGreedy,
    Fifo,
    Cb,
    Cat,
    Fegc,
    FastCb(FastCbParams),
    ApproxCb(QParam),
    AgeThreshold { tau: u64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("bad strategy `{spec}`: {reason}")]
pub struct StrategyParseError {
    pub spec: String,
    pub reason: String,
}

impl StrategySpec {
    /// Instantiates a selector for one channel.
    pub fn build(&self, total_blocks: usize, pages_per_block: u32) -> Box<dyn VictimSelector> {
        match self {
            StrategySpec::Greedy => Box::new(HeapGreedy::new(total_blocks)),
            StrategySpec::ConstGreedy => Box::new(BucketGreedy::new(total_blocks, pages_per_block)),
            StrategySpec::Fifo => Box::new(Fifo::new(total_blocks)),
            StrategySpec::Cb => Box::new(LinearScan::new(ScoreKind::CostBenefit, total_blocks, pages_per_block)),
            StrategySpec::Cat => Box::new(LinearScan::new(ScoreKind::CostAgeTimes, total_blocks, pages_per_block)),
            StrategySpec::Fegc => Box::new(LinearScan::new(ScoreKind::CostWithAge, total_blocks, pages_per_block)),
            StrategySpec::FastCb(p) => Box::new(FastCb::new(*p, total_blocks, pages_per_block)),
            StrategySpec::ApproxCb(q) => Box::new(ApproxCb::new(*q, total_blocks, pages_per_block)),
            StrategySpec::AgeThreshold { tau } => {
                Box::new(AgeThreshold::new(*tau, total_blocks))
            }
        }
    }
}

fn parse_params(spec: &str, params: &str) -> Result<Vec<(String, String)>, StrategyParseError> {
    params
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| StrategyParseError {
                spec: spec.into(),
                reason: format!("expected key=value, got `{kv}`"),
            })?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

impl FromStr for StrategySpec {
    type Err = StrategyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: String| StrategyParseError {
            spec: s.to_string(),
            reason,
        };
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p),
            None => (s.trim(), ""),
        };
        let params = parse_params(s, params)?;
        let num = |v: &str| v.parse::<u64>().map_err(|e| err(format!("`{v}`: {e}")));
        let no_params = |spec: StrategySpec| {
            if params.is_empty() {
                Ok(spec)
            } else {
                Err(err(format!("`{name}` takes no parameters")))
            }
        };
        match name {
            "greedy" => no_params(StrategySpec::Greedy),
            "const-greedy" => no_params(StrategySpec::ConstGreedy),
            "fifo" => no_params(StrategySpec::Fifo),
            "cb" => no_params(StrategySpec::Cb),
            "cat" => no_params(StrategySpec::Cat),
            "fegc" => no_params(StrategySpec::Fegc),
            "fastcb" => {
                let mut p = FastCbParams::default();
                for (k, v) in &params {
                    match k.as_str() {
                        "t0" => p.t0 = num(v)? as usize,
                        "c0" => p.c0 = num(v)? as usize,
                        "tf" | "time_factor" => p.time_factor = num(v)?,
                        _ => return Err(err(format!("unknown fastcb parameter `{k}`"))),
                    }
                }
                p.validate().map_err(err)?;
                Ok(StrategySpec::FastCb(p))
            }
            "approxcb" => {
                let mut q = None;
                for (k, v) in &params {
                    match k.as_str() {
                        "q" => q = Some(v.parse::<QParam>().map_err(err)?),
                        _ => return Err(err(format!("unknown approxcb parameter `{k}`"))),
                    }
                }
                Ok(StrategySpec::ApproxCb(
                    q.ok_or_else(|| err("approxcb requires q=<pct>%".into()))?,
                ))
            }
            "age-threshold" => {
                let mut tau = None;
                for (k, v) in &params {
                    match k.as_str() {
                        "tau" => tau = Some(num(v)?),
                        _ => return Err(err(format!("unknown age-threshold parameter `{k}`"))),
                    }
                }
                Ok(StrategySpec::AgeThreshold {
                    tau: tau.ok_or_else(|| err("age-threshold requires tau=<n>".into()))?,
                })
            }
            other => Err(err(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Greedy => write!(f, "greedy"),
            StrategySpec::ConstGreedy => write!(f, "const-greedy"),
            StrategySpec::Fifo => write!(f, "fifo"),
            StrategySpec::Cb => write!(f, "cb"),
            StrategySpec::Cat => write!(f, "cat"),
            StrategySpec::Fegc => write!(f, "fegc"),
            StrategySpec::FastCb(p) if *p == FastCbParams::default() => write!(f, "fastcb"),
            StrategySpec::FastCb(p) => {
                write!(f, "fastcb:t0={},c0={},tf={}", p.t0, p.c0, p.time_factor)
            }
            StrategySpec::ApproxCb(q) => write!(f, "approxcb:q={q}"),
            StrategySpec::AgeThreshold { tau } => write!(f, "age-threshold:tau={tau}"),
        }
    }
}

/// Picks the best of `(score, block)` pairs: highest score, then lowest id.
#[inline]
pub(crate) fn better<S: Ord>(a: &(S, BlockId), b: &(S, BlockId)) -> bool {
    match a.0.cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.1 < b.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_all_strategy_strings() {
        for s in [
            "greedy",
            "const-greedy",
            "fifo",
            "cb",
            "cat",
            "fegc",
            "fastcb",
            "approxcb:q=1%",
            "approxcb:q=0.1%",
            "approxcb:q=3",
            "age-threshold:tau=50",
            "fastcb:t0=50,c0=10,tf=4096",
        ] {
            let spec: StrategySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!(
            "approxcb:q=25%".parse::<StrategySpec>().unwrap(),
            StrategySpec::ApproxCb(QParam::Percent(25.0))
        );
    }

    #[test]
    fn parse_errors() {
        for s in [
            "lru",
            "approxcb",
            "approxcb:q=abc",
            "approxcb:q=0%",
            "age-threshold",
            "cb:q=1%",
            "fastcb:c0=200",
            "fastcb:t0=0",
        ] {
            assert!(s.parse::<StrategySpec>().is_err(), "{s} should fail");
        }
    }

    #[test]
    fn block_set_ops() {
        let mut s = BlockSet::new(4);
        assert!(s.insert(3));
        assert!(s.insert(1));
        assert!(!s.insert(3));
        assert!(s.insert(9));
        assert!(s.remove(3));
        assert!(!s.contains(3));
        let mut v: Vec<_> = s.iter().collect();
        v.sort();
        assert_eq!(v, vec![1, 9]);
        assert!(s.remove(1) && s.remove(9));
        assert!(s.is_empty());
        assert!(!s.contains(1));
    }
}
