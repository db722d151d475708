//! A bare block table for driving selectors without a full device.

#![allow(dead_code)]

use ftlsim::flash::{BlockId, BlockMeta, BlockState, Tick};
use ftlsim::score::{cb_value, Score};
use ftlsim::strategy::VictimSelector;

pub struct Model {
    pub np: u32,
    pub now: Tick,
    pub blocks: Vec<BlockMeta>,
}

impl Model {
    pub fn new(n: usize, np: u32) -> Self {
        Model {
            np,
            now: 0,
            blocks: (0..n as BlockId).map(|b| BlockMeta::new(b, 0)).collect(),
        }
    }

    /// Marks `b` full with every page valid, as of `now`.
    pub fn fill(&mut self, b: BlockId) {
        let np = self.np;
        let now = self.now;
        let m = &mut self.blocks[b as usize];
        assert_eq!(m.state, BlockState::Clean);
        m.state = BlockState::Used;
        m.write_ptr = np;
        m.valid_count = np;
        m.created_at = Some(now);
        m.filled_at = Some(now);
    }

    /// Full block whose pages were invalidated so that `valid` remain, the last
    /// invalidation at `last_inv`.
    pub fn used(&mut self, b: BlockId, valid: u32, last_inv: Tick) {
        self.fill(b);
        let m = &mut self.blocks[b as usize];
        m.created_at = Some(0);
        m.filled_at = Some(0);
        for _ in valid..self.np {
            m.valid_count -= 1;
            m.inv_count += 1;
            m.inv_time_sum += last_inv;
            #[cfg(debug_assertions)]
            m.inv_log.push(last_inv);
        }
        if valid < self.np {
            m.last_invalidation_at = Some(last_inv);
        }
    }

    pub fn invalidate(&mut self, b: BlockId) {
        let now = self.now;
        let m = &mut self.blocks[b as usize];
        assert!(m.valid_count > 0 && m.state == BlockState::Used);
        m.valid_count -= 1;
        m.inv_count += 1;
        m.inv_time_sum += now;
        m.last_invalidation_at = Some(now);
        #[cfg(debug_assertions)]
        m.inv_log.push(now);
    }

    pub fn erase(&mut self, b: BlockId) {
        let m = &mut self.blocks[b as usize];
        let erases = m.erase_count + 1;
        *m = BlockMeta::new(b, 0);
        m.erase_count = erases;
    }

    pub fn cb(&self, b: BlockId) -> Score {
        let m = &self.blocks[b as usize];
        cb_value(m.valid_count, self.np, m.cb_age(self.now))
    }

    pub fn register(&self, sel: &mut dyn VictimSelector, b: BlockId) {
        sel.on_block_full(&self.blocks, b, self.now).unwrap();
    }

    pub fn notify_invalidated(&self, sel: &mut dyn VictimSelector, b: BlockId) {
        sel.on_page_invalidated(&self.blocks, b, self.now).unwrap();
    }

    pub fn select(&self, sel: &mut dyn VictimSelector) -> Option<BlockId> {
        sel.select_victim(&self.blocks, self.now)
    }
}
