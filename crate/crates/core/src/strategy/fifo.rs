use std::collections::VecDeque;

use super::{SelectorCounters, SelectorError, VictimSelector};
use crate::flash::{BlockId, BlockMeta, Tick};

/// First-filled, first-collected.
pub struct Fifo {
    // (block, registration stamp); entries whose stamp no longer matches are stale
    order: VecDeque<(BlockId, u64)>,
    stamp: Vec<u64>,
    next_stamp: u64,
    len: usize,
    last_scan: u64,
    counters: SelectorCounters,
}

impl Fifo {
    pub fn new(total_blocks: usize) -> Self {
        Fifo {
            order: VecDeque::new(),
            stamp: vec![0; total_blocks],
            next_stamp: 1,
            len: 0,
            last_scan: 0,
            counters: SelectorCounters::default(),
        }
    }
}

impl VictimSelector for Fifo {
    fn on_block_full(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.stamp[block as usize] != 0 {
            return Err(SelectorError::AlreadyRegistered(block));
        }
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        self.stamp[block as usize] = stamp;
        self.order.push_back((block, stamp));
        self.len += 1;
        Ok(())
    }

    fn on_page_invalidated(&mut self, _blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.stamp[block as usize] != 0 {
            Ok(())
        } else {
            Err(SelectorError::UnknownBlock(block))
        }
    }

    fn on_block_erased(&mut self, block: BlockId) {
        if std::mem::take(&mut self.stamp[block as usize]) != 0 {
            self.len -= 1;
        }
    }

    fn select_victim(&mut self, _blocks: &[BlockMeta], _now: Tick) -> Option<BlockId> {
        while let Some((block, stamp)) = self.order.pop_front() {
            if self.stamp[block as usize] == stamp {
                self.stamp[block as usize] = 0;
                self.len -= 1;
                self.last_scan = 1;
                self.counters.selections += 1;
                self.counters.scan_cost_total += 1;
                return Some(block);
            }
        }
        None
    }

    fn scan_cost_last_selection(&self) -> u64 {
        self.last_scan
    }

    fn registered(&self) -> usize {
        self.len
    }

    fn counters(&self) -> SelectorCounters {
        self.counters
    }
}
