//! Physical flash model: pages, blocks, channels and the logical/physical map.
//!
//! Blocks are numbered globally, channel-major: block `b` lives on channel
//! `b / blocks_per_channel`. A physical page address is `block * N_p + page`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Logical page address.
pub type Lpa = u64;
/// Physical page address, `block * pages_per_block + page`.
pub type Ppa = u64;
/// Global block index.
pub type BlockId = u32;
/// Logical time: host page writes since the start of the simulation.
pub type Tick = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlashError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("block {block} is not active")]
    NotActive { block: BlockId },
    #[error("out-of-order write to block {block}: page {page}, write pointer at {write_ptr}")]
    OutOfOrder {
        block: BlockId,
        page: u32,
        write_ptr: u32,
    },
    #[error("logical page {0} is already mapped")]
    AlreadyMapped(Lpa),
    #[error("physical page {0} does not hold valid data")]
    NotValid(Ppa),
    #[error("block {block} still holds {valid} valid pages")]
    ValidPagesRemain { block: BlockId, valid: u32 },
    #[error("block {block} is not in the used state")]
    NotUsed { block: BlockId },
    #[error("address {0} out of range")]
    OutOfRange(u64),
    #[error("no clean block left on channel {0}")]
    NoCleanBlock(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub channels: u32,
    pub blocks_per_channel: u32,
    pub pages_per_block: u32,
    pub page_size: u64,
    pub logical_pages: u64,
    pub op_factor: f64,
}

impl DeviceGeometry {
    pub const DEFAULT_OP_FACTOR: f64 = 1.07;

    /// Geometry with the largest logical space the overprovisioning factor allows.
    pub fn with_max_logical(
        channels: u32,
        blocks_per_channel: u32,
        pages_per_block: u32,
        page_size: u64,
        op_factor: f64,
    ) -> Self {
        let physical = channels as u64 * blocks_per_channel as u64 * pages_per_block as u64;
        let mut logical = (physical as f64 / op_factor).floor() as u64;
        // float rounding can leave us one page over the bound
        while logical > 0 && required_physical(logical, op_factor) > physical {
            logical -= 1;
        }
        DeviceGeometry {
            channels,
            blocks_per_channel,
            pages_per_block,
            page_size,
            logical_pages: logical,
            op_factor,
        }
    }

    pub fn total_blocks(&self) -> u64 {
        self.channels as u64 * self.blocks_per_channel as u64
    }

    pub fn physical_pages(&self) -> u64 {
        self.total_blocks() * self.pages_per_block as u64
    }

    pub fn validate(&self) -> Result<(), FlashError> {
        if self.channels == 0 {
            return Err(FlashError::Geometry("at least one channel is required".into()));
        }
        if self.blocks_per_channel == 0 {
            return Err(FlashError::Geometry("blocks_per_channel must be positive".into()));
        }
        if self.pages_per_block < 2 {
            return Err(FlashError::Geometry(format!(
                "pages_per_block must be at least 2, got {}",
                self.pages_per_block
            )));
        }
        if self.page_size == 0 {
            return Err(FlashError::Geometry("page_size must be positive".into()));
        }
        if !(self.op_factor >= 1.0) || !self.op_factor.is_finite() {
            return Err(FlashError::Geometry(format!(
                "op_factor must be a finite ratio >= 1.0, got {}",
                self.op_factor
            )));
        }
        if self.total_blocks() > BlockId::MAX as u64 {
            return Err(FlashError::Geometry("too many blocks".into()));
        }
        let need = required_physical(self.logical_pages, self.op_factor);
        if self.physical_pages() < need {
            return Err(FlashError::Geometry(format!(
                "capacity shortfall: {} physical pages < ceil({} * {}) = {}",
                self.physical_pages(),
                self.logical_pages,
                self.op_factor,
                need
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn channel_of(&self, block: BlockId) -> u32 {
        block / self.blocks_per_channel
    }

    #[inline]
    pub fn ppa(&self, block: BlockId, page: u32) -> Ppa {
        block as u64 * self.pages_per_block as u64 + page as u64
    }

    /// Splits a physical page address into `(channel, block, page)`.
    #[inline]
    pub fn decode(&self, ppa: Ppa) -> (u32, BlockId, u32) {
        let block = (ppa / self.pages_per_block as u64) as BlockId;
        let page = (ppa % self.pages_per_block as u64) as u32;
        (self.channel_of(block), block, page)
    }
}

fn required_physical(logical: u64, op_factor: f64) -> u64 {
    (logical as f64 * op_factor).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageState {
    Clean,
    ValidWritten(Lpa),
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockState {
    Clean,
    Active,
    Used,
}

#[derive(Debug, Clone)]
pub struct BlockMeta {
    pub block_id: BlockId,
    pub channel: u32,
    pub state: BlockState,
    pub valid_count: u32,
    pub write_ptr: u32,
    /// Time of the first page write since the block was opened.
    pub created_at: Option<Tick>,
    /// Time the last page was written and the block became `Used`.
    pub filled_at: Option<Tick>,
    pub last_invalidation_at: Option<Tick>,
    pub erase_count: u64,
    pub inv_count: u32,
    pub inv_time_sum: u64,
    #[cfg(debug_assertions)]
    pub inv_log: Vec<Tick>,
}

impl BlockMeta {
    pub fn new(block_id: BlockId, channel: u32) -> Self {
        BlockMeta {
            block_id,
            channel,
            state: BlockState::Clean,
            valid_count: 0,
            write_ptr: 0,
            created_at: None,
            filled_at: None,
            last_invalidation_at: None,
            erase_count: 0,
            inv_count: 0,
            inv_time_sum: 0,
            #[cfg(debug_assertions)]
            inv_log: Vec::new(),
        }
    }

    /// Reference point for the cost-benefit age: the last invalidation, or the
    /// fill time for a block that has never seen one.
    pub fn age_reference(&self) -> Tick {
        self.last_invalidation_at
            .or(self.filled_at)
            .or(self.created_at)
            .unwrap_or(0)
    }

    /// Cost-benefit age at `now`.
    pub fn cb_age(&self, now: Tick) -> Tick {
        now.saturating_sub(self.age_reference())
    }

    /// Age since the block received its first page.
    pub fn creation_age(&self, now: Tick) -> Tick {
        now.saturating_sub(self.created_at.unwrap_or(now))
    }

    /// Sum of the ages of the invalid pages, recomputed from the retained log.
    #[cfg(debug_assertions)]
    pub fn cwa_brute(&self, now: Tick) -> u128 {
        self.inv_log.iter().map(|&t| (now - t) as u128).sum()
    }

    #[inline]
    fn check(&self) {
        debug_assert_eq!(self.inv_count + self.valid_count, self.write_ptr);
    }
}

#[derive(Debug, Clone)]
pub struct MappingTable {
    forward: Vec<Option<Ppa>>,
    reverse: Vec<Option<Lpa>>,
    mapped: u64,
}

impl MappingTable {
    pub fn new(logical_pages: u64, physical_pages: u64) -> Self {
        MappingTable {
            forward: vec![None; logical_pages as usize],
            reverse: vec![None; physical_pages as usize],
            mapped: 0,
        }
    }

    #[inline]
    pub fn lookup(&self, lpa: Lpa) -> Option<Ppa> {
        self.forward.get(lpa as usize).copied().flatten()
    }

    #[inline]
    pub fn reverse(&self, ppa: Ppa) -> Option<Lpa> {
        self.reverse.get(ppa as usize).copied().flatten()
    }

    pub fn mapped_count(&self) -> u64 {
        self.mapped
    }

    fn map(&mut self, lpa: Lpa, ppa: Ppa) {
        debug_assert!(self.forward[lpa as usize].is_none());
        debug_assert!(self.reverse[ppa as usize].is_none());
        self.forward[lpa as usize] = Some(ppa);
        self.reverse[ppa as usize] = Some(lpa);
        self.mapped += 1;
    }

    fn unmap(&mut self, ppa: Ppa) -> Option<Lpa> {
        let lpa = self.reverse[ppa as usize].take()?;
        debug_assert_eq!(self.forward[lpa as usize], Some(ppa));
        self.forward[lpa as usize] = None;
        self.mapped -= 1;
        Some(lpa)
    }
}

/// Notifications a device mutation produces for the GC strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockEvent {
    Full(BlockId),
    PageInvalidated(BlockId),
}

#[derive(Debug, Clone)]
pub struct Device {
    geometry: DeviceGeometry,
    blocks: Vec<BlockMeta>,
    pages: Vec<PageState>,
    map: MappingTable,
    clean: Vec<VecDeque<BlockId>>,
    valid_pages: u64,
    invalid_pages: u64,
    physical_writes: u64,
}

impl Device {
    pub fn new(geometry: DeviceGeometry) -> Result<Self, FlashError> {
        geometry.validate()?;
        let total = geometry.total_blocks() as BlockId;
        let blocks = (0..total)
            .map(|b| BlockMeta::new(b, geometry.channel_of(b)))
            .collect();
        let clean = (0..geometry.channels)
            .map(|ch| {
                let first = ch * geometry.blocks_per_channel;
                (first..first + geometry.blocks_per_channel).collect()
            })
            .collect();
        Ok(Device {
            geometry,
            blocks,
            pages: vec![PageState::Clean; geometry.physical_pages() as usize],
            map: MappingTable::new(geometry.logical_pages, geometry.physical_pages()),
            clean,
            valid_pages: 0,
            invalid_pages: 0,
            physical_writes: 0,
        })
    }

    pub fn geometry(&self) -> &DeviceGeometry {
        &self.geometry
    }

    pub fn blocks(&self) -> &[BlockMeta] {
        &self.blocks
    }

    pub fn block(&self, block: BlockId) -> &BlockMeta {
        &self.blocks[block as usize]
    }

    pub fn mapping(&self) -> &MappingTable {
        &self.map
    }

    pub fn page(&self, ppa: Ppa) -> PageState {
        self.pages[ppa as usize]
    }

    /// Page states of one block, in page order.
    pub fn block_pages(&self, block: BlockId) -> &[PageState] {
        let np = self.geometry.pages_per_block as usize;
        let start = block as usize * np;
        &self.pages[start..start + np]
    }

    pub fn clean_blocks(&self, channel: u32) -> usize {
        self.clean[channel as usize].len()
    }

    /// Lifetime count of page programs, host and GC alike.
    pub fn physical_writes(&self) -> u64 {
        self.physical_writes
    }

    pub fn valid_pages(&self) -> u64 {
        self.valid_pages
    }

    pub fn invalid_pages(&self) -> u64 {
        self.invalid_pages
    }

    /// Takes the next clean block of `channel` and makes it active.
    pub fn open_block(&mut self, channel: u32) -> Result<BlockId, FlashError> {
        let block = self.clean[channel as usize]
            .pop_front()
            .ok_or(FlashError::NoCleanBlock(channel))?;
        let meta = &mut self.blocks[block as usize];
        debug_assert_eq!(meta.state, BlockState::Clean);
        meta.state = BlockState::Active;
        Ok(block)
    }

    /// Programs `ppa` with `lpa`. Returns `BlockEvent::Full` when this write
    /// filled the block.
    pub fn write_physical(
        &mut self,
        ppa: Ppa,
        lpa: Lpa,
        now: Tick,
    ) -> Result<Option<BlockEvent>, FlashError> {
        if ppa >= self.geometry.physical_pages() {
            return Err(FlashError::OutOfRange(ppa));
        }
        if lpa >= self.geometry.logical_pages {
            return Err(FlashError::OutOfRange(lpa));
        }
        if self.map.lookup(lpa).is_some() {
            return Err(FlashError::AlreadyMapped(lpa));
        }
        let (_, block, page) = self.geometry.decode(ppa);
        let np = self.geometry.pages_per_block;
        let meta = &mut self.blocks[block as usize];
        if meta.state != BlockState::Active {
            return Err(FlashError::NotActive { block });
        }
        if page != meta.write_ptr {
            return Err(FlashError::OutOfOrder {
                block,
                page,
                write_ptr: meta.write_ptr,
            });
        }
        debug_assert_eq!(self.pages[ppa as usize], PageState::Clean);
        if meta.write_ptr == 0 {
            meta.created_at = Some(now);
        }
        meta.write_ptr += 1;
        meta.valid_count += 1;
        let full = meta.write_ptr == np;
        if full {
            meta.state = BlockState::Used;
            meta.filled_at = Some(now);
        }
        meta.check();
        self.pages[ppa as usize] = PageState::ValidWritten(lpa);
        self.map.map(lpa, ppa);
        self.valid_pages += 1;
        self.physical_writes += 1;
        Ok(full.then_some(BlockEvent::Full(block)))
    }

    /// Marks a valid page invalid. Returns `BlockEvent::PageInvalidated` when
    /// the owning block is `Used` (active blocks are not yet GC candidates).
    pub fn invalidate(&mut self, ppa: Ppa, now: Tick) -> Result<Option<BlockEvent>, FlashError> {
        if ppa >= self.geometry.physical_pages() {
            return Err(FlashError::OutOfRange(ppa));
        }
        if !matches!(self.pages[ppa as usize], PageState::ValidWritten(_)) {
            return Err(FlashError::NotValid(ppa));
        }
        let block = (ppa / self.geometry.pages_per_block as u64) as BlockId;
        let meta = &mut self.blocks[block as usize];
        meta.valid_count -= 1;
        meta.inv_count += 1;
        meta.inv_time_sum += now;
        meta.last_invalidation_at = Some(now);
        #[cfg(debug_assertions)]
        meta.inv_log.push(now);
        meta.check();
        let used = meta.state == BlockState::Used;
        self.pages[ppa as usize] = PageState::Invalid;
        self.map.unmap(ppa);
        self.valid_pages -= 1;
        self.invalid_pages += 1;
        Ok(used.then_some(BlockEvent::PageInvalidated(block)))
    }

    /// Erases a fully invalid `Used` block and returns it to its channel's clean pool.
    pub fn erase(&mut self, block: BlockId) -> Result<(), FlashError> {
        let np = self.geometry.pages_per_block;
        let meta = self
            .blocks
            .get_mut(block as usize)
            .ok_or(FlashError::OutOfRange(block as u64))?;
        if meta.state != BlockState::Used {
            return Err(FlashError::NotUsed { block });
        }
        if meta.valid_count != 0 {
            return Err(FlashError::ValidPagesRemain {
                block,
                valid: meta.valid_count,
            });
        }
        self.invalid_pages -= meta.inv_count as u64;
        meta.state = BlockState::Clean;
        meta.erase_count += 1;
        meta.write_ptr = 0;
        meta.inv_count = 0;
        meta.inv_time_sum = 0;
        meta.created_at = None;
        meta.filled_at = None;
        meta.last_invalidation_at = None;
        #[cfg(debug_assertions)]
        meta.inv_log.clear();
        let channel = meta.channel;
        let start = block as usize * np as usize;
        self.pages[start..start + np as usize].fill(PageState::Clean);
        self.clean[channel as usize].push_back(block);
        Ok(())
    }

    /// Full O(n) audit of the page, mapping and block-counter invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let np = self.geometry.pages_per_block;
        let (mut clean, mut valid, mut invalid) = (0u64, 0u64, 0u64);
        let mut lifetime_writes = 0u64;
        for meta in &self.blocks {
            if meta.inv_count + meta.valid_count != meta.write_ptr {
                return Err(format!("block {}: inv + valid != write_ptr", meta.block_id));
            }
            if meta.state == BlockState::Used && meta.write_ptr != np {
                return Err(format!("block {}: used but not full", meta.block_id));
            }
            let mut v = 0;
            for (i, p) in self.block_pages(meta.block_id).iter().enumerate() {
                match p {
                    PageState::Clean => {
                        if (i as u32) < meta.write_ptr {
                            return Err(format!("block {}: clean page below write_ptr", meta.block_id));
                        }
                        clean += 1
                    }
                    PageState::ValidWritten(lpa) => {
                        let ppa = self.geometry.ppa(meta.block_id, i as u32);
                        if self.map.lookup(*lpa) != Some(ppa) {
                            return Err(format!("ppa {ppa} not mapped back from lpa {lpa}"));
                        }
                        v += 1;
                        valid += 1
                    }
                    PageState::Invalid => invalid += 1,
                }
            }
            if v != meta.valid_count {
                return Err(format!("block {}: valid_count mismatch", meta.block_id));
            }
            lifetime_writes += meta.erase_count * np as u64 + meta.write_ptr as u64;
        }
        if clean + valid + invalid != self.geometry.physical_pages() {
            return Err("page conservation violated".into());
        }
        if valid != self.map.mapped_count() || valid != self.valid_pages {
            return Err("mapped lpas != valid pages".into());
        }
        if invalid != self.invalid_pages {
            return Err("invalid page counter drift".into());
        }
        if lifetime_writes != self.physical_writes {
            return Err("lifetime writes != physical write counter".into());
        }
        Ok(())
    }
}
