use std::collections::BTreeSet;

use ftlsim::flash::{BlockState, DeviceGeometry, PageState};
use ftlsim::ftl::{in_range_pages, simulate, Ftl, FtlConfig, SimError};
use ftlsim::strategy::StrategySpec;
use ftlsim::workload::{default_quantiles, gen_hotspot, precharacterize, HotnessMap, WriteRequest};

fn single_level(geometry: DeviceGeometry, strategy: StrategySpec) -> Ftl {
    let mut cfg = FtlConfig::new(geometry, strategy);
    cfg.hotness_levels = 1;
    cfg.gc_low_watermark = 2;
    cfg.warm_up = false;
    Ftl::new(cfg, HotnessMap::uniform(geometry.logical_pages, 1)).unwrap()
}

fn small() -> DeviceGeometry {
    DeviceGeometry::with_max_logical(1, 16, 4, 4096, 1.07)
}

fn req(seq: u64, page: u64, pages: u64) -> WriteRequest {
    WriteRequest {
        seq,
        byte_offset: page * 4096,
        length: pages * 4096,
    }
}

#[test]
fn first_write_and_overwrite() {
    let mut ftl = single_level(small(), StrategySpec::Greedy);
    ftl.host_write(5).unwrap();
    assert_eq!(ftl.device().invalid_pages(), 0);
    assert_eq!(ftl.device().physical_writes(), 1);
    ftl.host_write(5).unwrap();
    assert_eq!(ftl.device().invalid_pages(), 1);
    assert_eq!(ftl.device().physical_writes(), 2);
    assert_eq!(ftl.device().valid_pages(), 1);
    assert_eq!(ftl.clock(), 2);
}

#[test]
fn a_block_worth_of_writes_fills_one_block() {
    let mut ftl = single_level(small(), StrategySpec::Greedy);
    for lpa in 0..4 {
        ftl.host_write(lpa).unwrap();
    }
    let used = ftl.device().blocks().iter().filter(|b| b.state == BlockState::Used).count();
    assert_eq!(used, 1);
    assert_eq!(ftl.selector(0).registered(), 1);
    assert_eq!(ftl.active_block(0, 0), None);
}

#[test]
fn out_of_range_write_is_rejected() {
    let mut ftl = single_level(small(), StrategySpec::Greedy);
    let logical = small().logical_pages;
    assert!(matches!(ftl.host_write(logical), Err(SimError::LpaOutOfRange { .. })));
}

#[test]
fn gc_copies_exactly_the_valid_pages() {
    let mut ftl = single_level(small(), StrategySpec::Greedy);
    for lpa in 0..8 {
        ftl.host_write(lpa).unwrap();
    }
    for lpa in 0..4 {
        ftl.host_write(lpa).unwrap();
    }
    // first block is now empty of valid data
    ftl.gc_cycle(0).unwrap();
    assert_eq!(ftl.recorder().gc_copies(), 0);
    assert_eq!(ftl.recorder().gc_count(), 1);

    ftl.host_write(4).unwrap();
    ftl.host_write(5).unwrap();
    let before = ftl.device().physical_writes();
    ftl.gc_cycle(0).unwrap();
    assert_eq!(ftl.recorder().gc_copies(), 2);
    assert_eq!(ftl.recorder().gc_count(), 2);
    assert_eq!(ftl.device().physical_writes(), before + 2);
    assert_eq!(ftl.clock(), 14);
    ftl.device().check_invariants().unwrap();
}

fn hotspot_ftl(strategy: StrategySpec, channels: u32, warm_up: bool, seed: u64) -> (Ftl, Vec<WriteRequest>) {
    let g = DeviceGeometry::with_max_logical(channels, 256, 16, 4096, 1.07);
    let reqs = gen_hotspot(6000, 1, &[(0.1, 0.9), (0.9, 0.1)], g.logical_pages, 4096, seed).unwrap();
    let hot = precharacterize(in_range_pages(&reqs, &g), g.logical_pages, &default_quantiles(3));
    let mut cfg = FtlConfig::new(g, strategy);
    cfg.warm_up = warm_up;
    cfg.seed = seed;
    (Ftl::new(cfg, hot).unwrap().with_victim_log().with_audit_every(97), reqs)
}

#[test]
fn copies_land_in_blocks_of_their_hotness() {
    let (mut ftl, reqs) = hotspot_ftl(StrategySpec::Cb, 2, true, 3);
    ftl.run(&reqs).unwrap();
    assert!(ftl.recorder().gc_copies() > 0);
    let g = *ftl.device().geometry();
    for b in ftl.device().blocks() {
        let levels: BTreeSet<u8> = ftl
            .device()
            .block_pages(b.block_id)
            .iter()
            .filter_map(|p| match p {
                PageState::ValidWritten(lpa) => Some(ftl.hotness().level(*lpa)),
                _ => None,
            })
            .collect();
        assert!(levels.len() <= 1, "block {} mixes levels {levels:?}", b.block_id);
    }
    assert!(g.channels == 2);
}

#[test]
fn victims_come_from_the_collecting_channel() {
    let (mut ftl, reqs) = hotspot_ftl(StrategySpec::Greedy, 4, true, 9);
    ftl.run(&reqs).unwrap();
    let g = *ftl.device().geometry();
    assert!(!ftl.victim_log().is_empty());
    for v in ftl.victim_log() {
        assert_eq!(g.channel_of(v.block), v.channel);
    }
}

#[test]
fn warm_up_writes_three_times_the_logical_space() {
    let g = DeviceGeometry {
        channels: 1,
        blocks_per_channel: 20,
        pages_per_block: 8,
        page_size: 4096,
        logical_pages: 100,
        op_factor: 1.07,
    };
    let mut cfg = FtlConfig::new(g, StrategySpec::Greedy);
    cfg.seed = 5;
    let run = |cfg: &FtlConfig| {
        let mut ftl = Ftl::new(cfg.clone(), HotnessMap::uniform(100, 3)).unwrap();
        ftl.run(&[]).unwrap()
    };
    let report = run(&cfg);
    let warm = report.warmup.clone().unwrap();
    assert_eq!(warm.host_page_writes, 300);
    assert_eq!(report.host_page_writes, 0);
    assert_eq!(report.wa_final, 1.0);
    assert_eq!(report.total_physical_writes, 300 + warm.gc_copy_writes);
    assert_eq!(run(&cfg), report);

    // the post-warm-up state depends only on the seed
    let state = |seed: u64| {
        let mut c = cfg.clone();
        c.seed = seed;
        let mut ftl = Ftl::new(c, HotnessMap::uniform(100, 3)).unwrap();
        ftl.warm_up().unwrap();
        (0..100).map(|l| ftl.device().mapping().lookup(l)).collect::<Vec<_>>()
    };
    assert_eq!(state(5), state(5));
    assert_ne!(state(5), state(6));

    cfg.warm_up = false;
    let mut ftl = Ftl::new(cfg, HotnessMap::uniform(100, 3)).unwrap();
    let report = ftl.run(&[]).unwrap();
    assert!(report.warmup.is_none());
    assert_eq!(ftl.device().physical_writes(), 0);
    assert_eq!(ftl.device().mapping().mapped_count(), 0);
}

#[test]
fn requests_are_split_into_pages_and_clipped() {
    let g = small();
    let mut cfg = FtlConfig::new(g, StrategySpec::Greedy);
    cfg.warm_up = false;
    let logical = g.logical_pages;
    let reqs = vec![
        // 2.5 pages starting mid-page 0
        WriteRequest {
            seq: 0,
            byte_offset: 100,
            length: 10_240,
        },
        req(1, logical + 3, 2),
        req(2, logical - 1, 3),
    ];
    let report = simulate(&cfg, &reqs).unwrap();
    assert_eq!(report.host_page_writes, 3 + 1);
    assert_eq!(report.dropped_requests, 1);
    assert_eq!(report.dropped_pages, 2 + 2);
}

#[test]
fn empty_workload_reports_unit_wa() {
    let mut cfg = FtlConfig::new(small(), StrategySpec::Cb);
    cfg.warm_up = false;
    let report = simulate(&cfg, &[]).unwrap();
    assert_eq!(report.host_page_writes, 0);
    assert_eq!(report.wa_final, 1.0);
    assert!(report.wa_series.is_empty());
}

#[test]
fn too_little_spare_space_wedges() {
    let g = DeviceGeometry {
        channels: 1,
        blocks_per_channel: 16,
        pages_per_block: 4,
        page_size: 4096,
        logical_pages: 64,
        op_factor: 1.0,
    };
    let mut cfg = FtlConfig::new(g, StrategySpec::Greedy);
    cfg.warm_up = false;
    let reqs: Vec<_> = (0..64).map(|p| req(p, p, 1)).collect();
    let err = simulate(&cfg, &reqs).unwrap_err();
    assert!(matches!(err, SimError::Wedged { channel: 0, .. }), "{err}");
}

#[test]
fn config_validation() {
    let mut cfg = FtlConfig::new(small(), StrategySpec::Cb);
    cfg.gc_low_watermark = 3;
    assert!(cfg.validate().is_err());
    cfg.gc_low_watermark = 4;
    assert!(cfg.validate().is_ok());
    cfg.hotness_levels = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = FtlConfig::new(DeviceGeometry::with_max_logical(1, 6, 4, 4096, 1.07), StrategySpec::Cb);
    cfg.warm_up = false;
    assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
}

#[test]
fn progress_and_conservation_over_a_long_run() {
    for strategy in ["greedy", "const-greedy", "fifo", "cb", "cat", "fegc", "fastcb", "approxcb:q=5%", "age-threshold:tau=2000"] {
        let (mut ftl, reqs) = hotspot_ftl(strategy.parse().unwrap(), 2, true, 1);
        let watermark = ftl.config().gc_low_watermark;
        let report = ftl.run(&reqs).unwrap();
        for ch in 0..2 {
            assert!(ftl.device().clean_blocks(ch) + 1 >= watermark, "{strategy}");
        }
        let warm = report.warmup.as_ref().unwrap();
        assert_eq!(
            report.total_physical_writes,
            report.host_page_writes + report.gc_copy_writes + warm.host_page_writes + warm.gc_copy_writes,
            "{strategy}"
        );
        assert!(report.wa_final >= 1.0);
        assert_eq!(report.host_page_writes, 6000);
        assert_eq!(report.gc_count, report.selections);
        assert_eq!(report.erase_histogram.iter().sum::<u64>(), report.gc_count);
        ftl.device().check_invariants().unwrap();
    }
}

#[test]
fn identical_inputs_give_identical_reports() {
    let run = || {
        let (mut ftl, reqs) = hotspot_ftl(StrategySpec::FastCb(Default::default()), 2, true, 21);
        ftl.run(&reqs).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn windows_follow_the_host_write_count() {
    let (mut ftl, reqs) = hotspot_ftl(StrategySpec::Greedy, 1, true, 4);
    let report = ftl.run(&reqs).unwrap();
    assert_eq!(report.window, 60);
    assert_eq!(report.wa_series.len(), 100);
    assert_eq!(report.wa_series.last().unwrap().0, 6000);
    let copies: f64 = report.wa_series.iter().map(|&(_, wa)| (wa - 1.0) * 60.0).sum();
    assert!((copies - report.gc_copy_writes as f64).abs() < 1e-6);
}
