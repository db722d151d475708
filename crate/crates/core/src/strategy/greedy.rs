//! Greedy selection: the block with the fewest valid pages.

use std::collections::BTreeSet;

use super::{SelectorCounters, SelectorError, VictimSelector};
use crate::flash::{BlockId, BlockMeta, Tick};
use crate::heap::IndexedMinHeap;

/// Logarithmic engine: indexed min-heap on the valid count, decrease-key on
/// every invalidation.
pub struct HeapGreedy {
    heap: IndexedMinHeap<u32>,
    last_scan: u64,
    counters: SelectorCounters,
}

impl HeapGreedy {
    pub fn new(total_blocks: usize) -> Self {
        HeapGreedy {
            heap: IndexedMinHeap::with_capacity(total_blocks),
            last_scan: 0,
            counters: SelectorCounters::default(),
        }
    }
}

impl VictimSelector for HeapGreedy {
    fn on_block_full(&mut self, blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.heap.contains(block) {
            return Err(SelectorError::AlreadyRegistered(block));
        }
        self.heap.push(block, blocks[block as usize].valid_count);
        Ok(())
    }

    fn on_page_invalidated(&mut self, blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.heap.change_key(block, blocks[block as usize].valid_count) {
            Ok(())
        } else {
            Err(SelectorError::UnknownBlock(block))
        }
    }

    fn on_block_erased(&mut self, block: BlockId) {
        self.heap.remove(block);
    }

    fn select_victim(&mut self, _blocks: &[BlockMeta], _now: Tick) -> Option<BlockId> {
        let (block, _) = self.heap.pop()?;
        self.last_scan = 1;
        self.counters.selections += 1;
        self.counters.scan_cost_total += 1;
        Some(block)
    }

    fn scan_cost_last_selection(&self) -> u64 {
        self.last_scan
    }

    fn registered(&self) -> usize {
        self.heap.len()
    }

    fn counters(&self) -> SelectorCounters {
        self.counters
    }
}

/// Constant-time engine: one bucket per possible valid count, scanned upward
/// from zero.
pub struct BucketGreedy {
    buckets: Vec<BTreeSet<BlockId>>,
    bucket_of: Vec<Option<u32>>,
    len: usize,
    last_scan: u64,
    counters: SelectorCounters,
}

impl BucketGreedy {
    pub fn new(total_blocks: usize, pages_per_block: u32) -> Self {
        BucketGreedy {
            buckets: vec![BTreeSet::new(); pages_per_block as usize + 1],
            bucket_of: vec![None; total_blocks],
            len: 0,
            last_scan: 0,
            counters: SelectorCounters::default(),
        }
    }
}

impl VictimSelector for BucketGreedy {
    fn on_block_full(&mut self, blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        if self.bucket_of[block as usize].is_some() {
            return Err(SelectorError::AlreadyRegistered(block));
        }
        let v = blocks[block as usize].valid_count;
        self.buckets[v as usize].insert(block);
        self.bucket_of[block as usize] = Some(v);
        self.len += 1;
        Ok(())
    }

    fn on_page_invalidated(&mut self, blocks: &[BlockMeta], block: BlockId, _now: Tick) -> Result<(), SelectorError> {
        let old = self.bucket_of[block as usize].ok_or(SelectorError::UnknownBlock(block))?;
        let v = blocks[block as usize].valid_count;
        if v != old {
            self.buckets[old as usize].remove(&block);
            self.buckets[v as usize].insert(block);
            self.bucket_of[block as usize] = Some(v);
        }
        Ok(())
    }

    fn on_block_erased(&mut self, block: BlockId) {
        if let Some(v) = self.bucket_of[block as usize].take() {
            self.buckets[v as usize].remove(&block);
            self.len -= 1;
        }
    }

    fn select_victim(&mut self, _blocks: &[BlockMeta], _now: Tick) -> Option<BlockId> {
        let bucket = self.buckets.iter_mut().find(|b| !b.is_empty())?;
        let block = bucket.pop_first()?;
        self.bucket_of[block as usize] = None;
        self.len -= 1;
        self.last_scan = 1;
        self.counters.selections += 1;
        self.counters.scan_cost_total += 1;
        Some(block)
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
