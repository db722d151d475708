mod common;

use common::Model;
use ftlsim::flash::{BlockId, BlockState};
use ftlsim::score::{cwa_value, Score};
use ftlsim::strategy::{
    ApproxCb, BucketGreedy, FastCb, FastCbParams, HeapGreedy, LinearScan, QParam, ScoreKind, VictimSelector,
};
use proptest::prelude::*;

const BLOCKS: usize = 48;
const NP: u32 = 8;

#[derive(Debug, Clone)]
enum Op {
    Fill(usize),
    Invalidate(usize, u8),
    Tick(u16),
    Select,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => (0..BLOCKS).prop_map(Op::Fill),
        6 => (0..BLOCKS, 1..4u8).prop_map(|(b, n)| Op::Invalidate(b, n)),
        2 => prop_oneof![4 => 0..40u16, 1 => 0..5000u16].prop_map(Op::Tick),
        2 => Just(Op::Select),
    ]
}

/// Applies `ops` to a shared block table and to every selector, calling
/// `check(model, victims, selectors)` after each selection round. Victims
/// must coincide so that all selectors keep seeing the same blocks.
fn drive<F>(ops: &[Op], sels: &mut [Box<dyn VictimSelector>], mut check: F) -> Result<(), TestCaseError>
where
    F: FnMut(&Model, &[Option<BlockId>], &[Box<dyn VictimSelector>]) -> Result<(), TestCaseError>,
{
    let mut m = Model::new(BLOCKS, NP);
    for op in ops {
        match *op {
            Op::Fill(b) => {
                if m.blocks[b].state == BlockState::Clean {
                    m.fill(b as BlockId);
                    for s in sels.iter_mut() {
                        m.register(s.as_mut(), b as BlockId);
                    }
                }
            }
            Op::Invalidate(b, n) => {
                for _ in 0..n {
                    if m.blocks[b].state == BlockState::Used && m.blocks[b].valid_count > 0 {
                        m.invalidate(b as BlockId);
                        for s in sels.iter_mut() {
                            m.notify_invalidated(s.as_mut(), b as BlockId);
                        }
                    }
                }
            }
            Op::Tick(dt) => m.now += dt as u64,
            Op::Select => {
                let victims: Vec<_> = sels.iter_mut().map(|s| m.select(s.as_mut())).collect();
                check(&m, &victims, sels)?;
                if let Some(v) = victims[0] {
                    prop_assert!(victims.iter().all(|&x| x == Some(v)), "victims diverged: {victims:?}");
                    m.erase(v);
                    for s in sels.iter_mut() {
                        s.on_block_erased(v);
                    }
                }
            }
        }
    }
    Ok(())
}

fn fastcb(t0: usize, c0: usize, tf: u64) -> Box<dyn VictimSelector> {
    Box::new(FastCb::new(FastCbParams { t0, c0, time_factor: tf }, BLOCKS, NP))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fastcb_matches_cb(ops in prop::collection::vec(op(), 1..600)) {
        let variants = [(125, 25, 1024), (4, 2, 1), (10, 10, 2), (3, 1, 1024)];
        let mut sels: Vec<Box<dyn VictimSelector>> =
            vec![Box::new(LinearScan::new(ScoreKind::CostBenefit, BLOCKS, NP))];
        for (t0, c0, tf) in variants {
            sels.push(fastcb(t0, c0, tf));
        }
        drive(&ops, &mut sels, |m, victims, sels| {
            let reference = victims[0].map(|b| m.cb(b));
            for (i, v) in victims.iter().enumerate().skip(1) {
                prop_assert_eq!(v.map(|b| m.cb(b)), reference, "variant {}", i);
                if v.is_some() && !sels[i].last_selection_rebuilt() {
                    prop_assert!(sels[i].scan_cost_last_selection() <= variants[i - 1].0 as u64);
                }
            }
            Ok(())
        })?;
    }

    #[test]
    fn rebuild_scans_stay_within_registered(ops in prop::collection::vec(op(), 1..600)) {
        let mut sels = vec![fastcb(4, 2, 1024)];
        let mut registered = 0usize;
        let mut m = Model::new(BLOCKS, NP);
        for op in &ops {
            match *op {
                Op::Fill(b) if m.blocks[b].state == BlockState::Clean => {
                    m.fill(b as BlockId);
                    m.register(sels[0].as_mut(), b as BlockId);
                    registered += 1;
                }
                Op::Invalidate(b, _) if m.blocks[b].state == BlockState::Used && m.blocks[b].valid_count > 0 => {
                    m.invalidate(b as BlockId);
                    m.notify_invalidated(sels[0].as_mut(), b as BlockId);
                }
                Op::Tick(dt) => m.now += dt as u64,
                Op::Select => {
                    prop_assert_eq!(sels[0].registered(), registered);
                    if let Some(v) = m.select(sels[0].as_mut()) {
                        prop_assert!(sels[0].scan_cost_last_selection() <= registered as u64);
                        registered -= 1;
                        m.erase(v);
                        sels[0].on_block_erased(v);
                    }
                }
                _ => {}
            }
        }
    }

    #[test]
    fn approx_with_single_slot_cache_matches_cb(ops in prop::collection::vec(op(), 1..600)) {
        let mut sels: Vec<Box<dyn VictimSelector>> = vec![
            Box::new(LinearScan::new(ScoreKind::CostBenefit, BLOCKS, NP)),
            Box::new(ApproxCb::new(QParam::Absolute(1), BLOCKS, NP)),
            Box::new(ApproxCb::new(QParam::Percent(0.1), BLOCKS, NP)),
        ];
        drive(&ops, &mut sels, |_, _, _| Ok(()))?;
    }

    #[test]
    fn greedy_engines_agree(ops in prop::collection::vec(op(), 1..600)) {
        let mut sels: Vec<Box<dyn VictimSelector>> = vec![
            Box::new(HeapGreedy::new(BLOCKS)),
            Box::new(BucketGreedy::new(BLOCKS, NP)),
        ];
        drive(&ops, &mut sels, |m, victims, _| {
            let counts: Vec<_> = victims
                .iter()
                .map(|v| v.map(|b| m.blocks[b as usize].valid_count))
                .collect();
            prop_assert_eq!(counts[0], counts[1]);
            if let Some(v) = victims[0] {
                let min = m
                    .blocks
                    .iter()
                    .filter(|b| b.state == BlockState::Used)
                    .map(|b| b.valid_count)
                    .min();
                prop_assert_eq!(Some(m.blocks[v as usize].valid_count), min);
            }
            Ok(())
        })?;
    }

    #[test]
    fn incremental_cwa_matches_log(times in prop::collection::vec(0..1_000_000u64, 0..200), extra in 0..1_000_000u64) {
        let mut sorted = times.clone();
        sorted.sort_unstable();
        let now = sorted.last().copied().unwrap_or(0) + extra;
        let brute: u128 = sorted.iter().map(|&t| (now - t) as u128).sum();
        let sum: u64 = sorted.iter().sum();
        prop_assert_eq!(cwa_value(sorted.len() as u32, sum, now), brute);
    }

    #[test]
    fn halving_scores_keeps_argmax(scores in prop::collection::vec((1..1000u128, 1..1000u128), 1..40)) {
        let s: Vec<Score> = scores.iter().map(|&(n, d)| Score::new(n, d)).collect();
        let arg = |v: &[Score]| (0..v.len()).max_by(|&a, &b| v[a].cmp(&v[b]).then(b.cmp(&a))).unwrap();
        let halved: Vec<Score> = s.iter().map(|x| x.scale(1, 2)).collect();
        prop_assert_eq!(arg(&s), arg(&halved));
    }
}

/// FeGC evaluation checks its incremental value against the invalidation log
/// on every scan (debug builds); this stream exercises that check.
#[test]
fn fegc_scans_agree_with_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut m = Model::new(BLOCKS, NP);
    let mut sel = LinearScan::new(ScoreKind::CostWithAge, BLOCKS, NP);
    let mut events = 0u64;
    while events < 20_000 {
        let b = rng.gen_range(0..BLOCKS);
        m.now += rng.gen_range(0..10);
        match m.blocks[b].state {
            BlockState::Clean => {
                m.fill(b as BlockId);
                m.register(&mut sel, b as BlockId);
            }
            BlockState::Used if m.blocks[b].valid_count > 0 => {
                m.invalidate(b as BlockId);
                m.notify_invalidated(&mut sel, b as BlockId);
                events += 1;
            }
            _ => {}
        }
        if rng.gen_ratio(1, 20) {
            if let Some(v) = m.select(&mut sel) {
                let x = &m.blocks[v as usize];
                #[cfg(debug_assertions)]
                assert_eq!(cwa_value(x.inv_count, x.inv_time_sum, m.now), x.cwa_brute(m.now));
                let _ = x;
                m.erase(v);
                sel.on_block_erased(v);
            }
        }
    }
}
