//! Page-mapped FTL: host write path, hotness-separated placement, per-channel
//! GC and trace replay.
//!
//! The logical clock counts host page writes; GC copies do not advance it.
//! Host pages are spread over channels round-robin, one page at a time, and
//! each channel collects its own blocks with its own selector instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flash::{BlockEvent, BlockId, BlockState, Device, DeviceGeometry, FlashError, Lpa, PageState, Tick};
use crate::metrics::{coefficient_of_variation, PhaseTotals, Recorder, SimReport};
use crate::score::{cb_value, Score};
use crate::strategy::{SelectorCounters, SelectorError, StrategySpec, VictimSelector};
use crate::workload::{default_quantiles, precharacterize, HotnessMap, WorkloadError, WorkloadSpec, WriteRequest};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Flash(#[from] FlashError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("device wedged: GC on channel {channel} cannot get above {clean} clean blocks (too little overprovisioning for the watermark)")]
    Wedged { channel: u32, clean: usize },
    #[error("logical page {lpa} out of range (logical space is {logical_pages} pages)")]
    LpaOutOfRange { lpa: Lpa, logical_pages: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtlConfig {
    pub geometry: DeviceGeometry,
    pub strategy: StrategySpec,
    pub hotness_levels: u8,
    /// GC runs on a channel while it has fewer clean blocks than this.
    pub gc_low_watermark: usize,
    pub warm_up: bool,
    pub seed: u64,
    /// Host writes per WA window; defaults to 1/100 of the replayed page writes.
    pub window: Option<u64>,
}

impl FtlConfig {
    pub fn new(geometry: DeviceGeometry, strategy: StrategySpec) -> Self {
        FtlConfig {
            geometry,
            strategy,
            hotness_levels: 3,
            gc_low_watermark: 4,
            warm_up: true,
            seed: 0,
            window: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.geometry.validate()?;
        if self.hotness_levels == 0 {
            return Err(SimError::Config("at least one hotness level is required".into()));
        }
        let min_watermark = self.hotness_levels as usize + 1;
        if self.gc_low_watermark < min_watermark {
            return Err(SimError::Config(format!(
                "gc_low_watermark {} below hotness_levels + 1 = {min_watermark}",
                self.gc_low_watermark
            )));
        }
        let needed = self.gc_low_watermark + self.hotness_levels as usize + 1;
        if (self.geometry.blocks_per_channel as usize) < needed {
            return Err(SimError::Config(format!(
                "{} blocks per channel cannot hold the watermark, active blocks and one used block ({needed})",
                self.geometry.blocks_per_channel
            )));
        }
        if self.window == Some(0) {
            return Err(SimError::Config("window must be positive".into()));
        }
        Ok(())
    }
}

/// One GC victim as seen at selection time.
#[derive(Debug, Clone, PartialEq)]
pub struct VictimRecord {
    pub now: Tick,
    pub channel: u32,
    pub block: BlockId,
    pub valid_count: u32,
    pub cb_score: Score,
    pub scan_cost: u64,
    pub rebuilt: bool,
    pub registered_before: usize,
}

pub struct Ftl {
    config: FtlConfig,
    device: Device,
    selectors: Vec<Box<dyn VictimSelector>>,
    hotness: HotnessMap,
    active: Vec<Vec<Option<BlockId>>>,
    clock: Tick,
    round_robin: u64,
    recorder: Recorder,
    warmup: Option<Recorder>,
    counters_at_start: SelectorCounters,
    victim_log: Option<Vec<VictimRecord>>,
    audit_every: Option<u64>,
    dropped_requests: u64,
    dropped_pages: u64,
}

impl Ftl {
    pub fn new(config: FtlConfig, hotness: HotnessMap) -> Result<Self, SimError> {
        config.validate()?;
        let g = config.geometry;
        if hotness.len() as u64 != g.logical_pages || hotness.n_levels() != config.hotness_levels {
            return Err(SimError::Config(format!(
                "hotness map covers {} pages at {} levels, expected {} pages at {} levels",
                hotness.len(),
                hotness.n_levels(),
                g.logical_pages,
                config.hotness_levels
            )));
        }
        let device = Device::new(g)?;
        let total = g.total_blocks() as usize;
        let selectors = (0..g.channels)
            .map(|_| config.strategy.build(total, g.pages_per_block))
            .collect();
        Ok(Ftl {
            active: vec![vec![None; config.hotness_levels as usize]; g.channels as usize],
            recorder: Recorder::new(total, config.window.unwrap_or(1)),
            config,
            device,
            selectors,
            hotness,
            clock: 0,
            round_robin: 0,
            warmup: None,
            counters_at_start: SelectorCounters::default(),
            victim_log: None,
            audit_every: None,
            dropped_requests: 0,
            dropped_pages: 0,
        })
    }

    /// Keeps a record of every victim selection.
    pub fn with_victim_log(mut self) -> Self {
        self.victim_log = Some(Vec::new());
        self
    }

    /// Runs the full device audit every `n` host writes; failures panic.
    pub fn with_audit_every(mut self, n: u64) -> Self {
        self.audit_every = Some(n.max(1));
        self
    }

    pub fn victim_log(&self) -> &[VictimRecord] {
        self.victim_log.as_deref().unwrap_or(&[])
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn config(&self) -> &FtlConfig {
        &self.config
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    pub fn selector(&self, channel: u32) -> &dyn VictimSelector {
        self.selectors[channel as usize].as_ref()
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn active_block(&self, channel: u32, level: u8) -> Option<BlockId> {
        self.active[channel as usize][level as usize]
    }

    pub fn hotness(&self) -> &HotnessMap {
        &self.hotness
    }

    pub fn host_write(&mut self, lpa: Lpa) -> Result<(), SimError> {
        let g = *self.device.geometry();
        if lpa >= g.logical_pages {
            return Err(SimError::LpaOutOfRange {
                lpa,
                logical_pages: g.logical_pages,
            });
        }
        self.clock += 1;
        let now = self.clock;
        let channel = (self.round_robin % g.channels as u64) as u32;
        self.round_robin += 1;

        if let Some(old) = self.device.mapping().lookup(lpa) {
            if let Some(BlockEvent::PageInvalidated(b)) = self.device.invalidate(old, now)? {
                let owner = g.channel_of(b) as usize;
                self.selectors[owner].on_page_invalidated(self.device.blocks(), b, now)?;
            }
        }
        // a cycle that copies a whole block frees nothing; more cycles than
        // there are blocks means the spare space is too small to make progress
        let mut cycles = 0;
        while self.device.clean_blocks(channel) < self.config.gc_low_watermark {
            if cycles > g.blocks_per_channel {
                return Err(SimError::Wedged {
                    channel,
                    clean: self.device.clean_blocks(channel),
                });
            }
            self.gc_cycle(channel)?;
            cycles += 1;
        }
        self.append(channel, self.hotness.level(lpa), lpa)?;
        self.recorder.record_host_write();

        debug_assert!(self.device.clean_blocks(channel) + 1 >= self.config.gc_low_watermark);
        if let Some(n) = self.audit_every {
            if now % n == 0 {
                if let Err(e) = self.device.check_invariants() {
                    panic!("device audit failed at tick {now}: {e}");
                }
            }
        }
        Ok(())
    }

    fn append(&mut self, channel: u32, level: u8, lpa: Lpa) -> Result<(), SimError> {
        let slot = &mut self.active[channel as usize][level as usize];
        let block = match *slot {
            Some(b) => b,
            None => {
                let b = self.device.open_block(channel).map_err(|_| SimError::Wedged {
                    channel,
                    clean: 0,
                })?;
                *slot = Some(b);
                b
            }
        };
        let ppa = self
            .device
            .geometry()
            .ppa(block, self.device.block(block).write_ptr);
        if let Some(BlockEvent::Full(b)) = self.device.write_physical(ppa, lpa, self.clock)? {
            self.active[channel as usize][level as usize] = None;
            self.selectors[channel as usize].on_block_full(self.device.blocks(), b, self.clock)?;
        }
        Ok(())
    }

    /// Collects one victim on `channel`: copy its valid pages to the active
    /// blocks of their hotness level, then erase it.
    pub fn gc_cycle(&mut self, channel: u32) -> Result<(), SimError> {
        let now = self.clock;
        let g = *self.device.geometry();
        let selector = &mut self.selectors[channel as usize];
        let registered_before = selector.registered();
        let victim = selector
            .select_victim(self.device.blocks(), now)
            .ok_or(SimError::Wedged {
                channel,
                clean: self.device.clean_blocks(channel),
            })?;
        let scan_cost = selector.scan_cost_last_selection();
        let rebuilt = selector.last_selection_rebuilt();
        self.recorder.record_selection(scan_cost);

        let meta = self.device.block(victim);
        debug_assert_eq!(meta.channel, channel, "victim from a foreign channel");
        debug_assert_eq!(meta.state, BlockState::Used);
        if let Some(log) = self.victim_log.as_mut() {
            log.push(VictimRecord {
                now,
                channel,
                block: victim,
                valid_count: meta.valid_count,
                cb_score: cb_value(meta.valid_count, g.pages_per_block, meta.cb_age(now)),
                scan_cost,
                rebuilt,
                registered_before,
            });
        }

        for page in 0..g.pages_per_block {
            let ppa = g.ppa(victim, page);
            if let PageState::ValidWritten(lpa) = self.device.page(ppa) {
                // the victim is no longer registered, so no strategy event
                self.device.invalidate(ppa, now)?;
                self.append(channel, self.hotness.level(lpa), lpa)?;
                self.recorder.record_gc_copy();
            }
        }
        self.device.erase(victim)?;
        self.selectors[channel as usize].on_block_erased(victim);
        self.recorder.record_erase(victim);
        Ok(())
    }

    /// Writes the logical space once in order, then twice its size at uniformly
    /// random addresses. Counted in a separate recorder.
    pub fn warm_up(&mut self) -> Result<(), SimError> {
        let g = *self.device.geometry();
        let total = g.total_blocks() as usize;
        let window = (3 * g.logical_pages / 100).max(1);
        let measured = std::mem::replace(&mut self.recorder, Recorder::new(total, window));
        for lpa in 0..g.logical_pages {
            self.host_write(lpa)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1);
        for _ in 0..2 * g.logical_pages {
            let lpa = rng.gen_range(0..g.logical_pages);
            self.host_write(lpa)?;
        }
        self.warmup = Some(std::mem::replace(&mut self.recorder, measured));
        self.counters_at_start = self.selector_counters();
        Ok(())
    }

    fn selector_counters(&self) -> SelectorCounters {
        let mut total = SelectorCounters::default();
        for s in &self.selectors {
            total += s.counters();
        }
        total
    }

    /// Replays `requests` on a fresh device (after the warm-up, if configured)
    /// and reports the measured phase.
    pub fn run(&mut self, requests: &[WriteRequest]) -> Result<SimReport, SimError> {
        let g = *self.device.geometry();
        let window = self
            .config
            .window
            .unwrap_or_else(|| (in_range_pages(requests, &g).count() as u64 / 100).max(1));
        self.recorder = Recorder::new(g.total_blocks() as usize, window);
        if self.config.warm_up {
            self.warm_up()?;
        }
        for req in requests {
            let pages = req.pages(g.page_size);
            if pages.start >= g.logical_pages {
                self.dropped_requests += 1;
                self.dropped_pages += pages.end - pages.start;
                continue;
            }
            let end = pages.end.min(g.logical_pages);
            self.dropped_pages += pages.end - end;
            for lpa in pages.start..end {
                self.host_write(lpa)?;
            }
        }
        Ok(self.report())
    }

    /// Snapshot of the measured phase so far.
    pub fn report(&self) -> SimReport {
        let g = self.device.geometry();
        let r = &self.recorder;
        let counters = self.selector_counters() - self.counters_at_start;
        let warm_host = self.warmup.as_ref().map_or(0, |w| w.host_writes());
        let warm_copies = self.warmup.as_ref().map_or(0, |w| w.gc_copies());
        debug_assert_eq!(
            self.device.physical_writes(),
            r.host_writes() + r.gc_copies() + warm_host + warm_copies,
            "write conservation"
        );
        debug_assert_eq!(counters.scan_cost_total, r.scan_cost_total());
        SimReport {
            strategy: self.config.strategy.to_string(),
            workload: String::new(),
            seed: self.config.seed,
            channels: g.channels,
            blocks_per_channel: g.blocks_per_channel,
            pages_per_block: g.pages_per_block,
            logical_pages: g.logical_pages,
            host_page_writes: r.host_writes(),
            gc_copy_writes: r.gc_copies(),
            wa_final: r.wa(),
            wa_series: r.wa_series().to_vec(),
            window: r.window(),
            erase_histogram: r.erase_counts().to_vec(),
            erase_cv: coefficient_of_variation(r.erase_counts()),
            gc_count: r.gc_count(),
            selections: r.selections(),
            fastcb_rebuild_empty: counters.rebuild_empty,
            fastcb_rebuild_overflow: counters.rebuild_overflow,
            approx_refills: counters.refills,
            scan_cost_total: r.scan_cost_total(),
            scan_cost_mean: if r.selections() == 0 {
                0.0
            } else {
                r.scan_cost_total() as f64 / r.selections() as f64
            },
            dropped_requests: self.dropped_requests,
            dropped_pages: self.dropped_pages,
            total_physical_writes: self.device.physical_writes(),
            warmup: self.warmup.as_ref().map(|w| PhaseTotals {
                host_page_writes: w.host_writes(),
                gc_copy_writes: w.gc_copies(),
                gc_count: w.gc_count(),
                wa: w.wa(),
            }),
            wall_clock_seconds: None,
            ops_per_sec: None,
        }
    }
}

/// In-range page addresses touched by `requests`, in replay order.
pub fn in_range_pages<'a>(
    requests: &'a [WriteRequest],
    g: &'a DeviceGeometry,
) -> impl Iterator<Item = Lpa> + 'a {
    requests.iter().flat_map(move |r| {
        let p = r.pages(g.page_size);
        p.start.min(g.logical_pages)..p.end.min(g.logical_pages)
    })
}

/// Hotness levels from the access counts of `requests`.
pub fn characterize(config: &FtlConfig, requests: &[WriteRequest]) -> HotnessMap {
    let g = config.geometry;
    precharacterize(
        in_range_pages(requests, &g),
        g.logical_pages,
        &default_quantiles(config.hotness_levels),
    )
}

/// Pre-characterises hotness from `requests` and replays them.
pub fn simulate(config: &FtlConfig, requests: &[WriteRequest]) -> Result<SimReport, SimError> {
    Ftl::new(config.clone(), characterize(config, requests))?.run(requests)
}

/// Loads (or generates) the workload and simulates it.
pub fn simulate_spec(config: &FtlConfig, workload: &WorkloadSpec) -> Result<SimReport, SimError> {
    let g = config.geometry;
    let requests = workload.load(g.logical_pages, g.page_size, config.seed)?;
    let mut report = simulate(config, &requests)?;
    report.workload = workload.to_string();
    Ok(report)
}
