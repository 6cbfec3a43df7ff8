use proptest::prelude::*;

use matchpool::geometry::{diag_coord, worth};
use matchpool::metrics::strip_census;
use matchpool::simulation::run_seed;
use matchpool::strategy::{accepts, reasonable_threshold, AgentView};
use matchpool::{
    GridPoint, Market, MarketParams, RunConfig, StrategyKind, StripKind, StripPartition,
};

fn covering_strips(part: &StripPartition, d: i64) -> usize {
    part.strips()
        .filter(|&s| {
            let (lo, hi) = part.diag_range(s);
            lo <= d && d < hi
        })
        .count()
}

#[test]
fn partition_is_exact_by_enumeration() {
    for t in [4u32, 16, 64, 100, 256] {
        let part = StripPartition::build(t).unwrap();
        let mut hits = vec![0usize; part.strip_count()];
        for v in t..2 * t {
            for a in 0..t {
                let d = diag_coord(v, a);
                assert_eq!(covering_strips(&part, d), 1, "T={t} v={v} a={a}");
                let s = part.strip_of(GridPoint::new(v, a, t).unwrap()).unwrap();
                let (lo, hi) = part.diag_range(s);
                assert!(lo <= d && d < hi);
                hits[part.slot(s)] += 1;
            }
        }
        assert_eq!(hits.iter().sum::<usize>(), (t * t) as usize);
        assert!(hits.iter().all(|&h| h > 0), "T={t} has an empty strip");
    }
}

/// Steps spent in `[lo, hi)` by an agent whose diagonal starts at `d` and
/// drops by 2 each step.
fn steps_inside(d: i64, lo: i64, hi: i64) -> u32 {
    let mut d = d;
    let mut n = 0;
    while d >= lo {
        if d < hi {
            n += 1;
        }
        d -= 2;
    }
    n
}

proptest! {
    #[test]
    fn random_points_land_in_one_strip(t in 4u32..600, vi in 0u32..600, a in 0u32..600) {
        let (vi, a) = (vi % t, a % t);
        let part = StripPartition::build(t).unwrap();
        let d = diag_coord(t + vi, a);
        prop_assert_eq!(covering_strips(&part, d), 1);
        let s = part.strip_at(part.slot_of(t + vi, a));
        let (lo, hi) = part.diag_range(s);
        prop_assert!(lo <= d && d < hi);
    }

    #[test]
    fn heights_sum_to_lifetime(t in 4u32..5000) {
        let part = StripPartition::build(t).unwrap();
        prop_assert_eq!(part.type2_heights().iter().sum::<u32>(), t);
        prop_assert_eq!(*part.diag_boundaries().last().unwrap(), -(t as i64));
        prop_assert!(part.type2_heights().iter().all(|&h| h >= 1 && h <= t / 2));
    }

    #[test]
    fn traversal_times(t in 4u32..400) {
        let part = StripPartition::build(t).unwrap();
        let w = part.width();
        for s in part.strips() {
            let (lo, hi) = part.diag_range(s);
            let crossing = [steps_inside(hi - 1, lo, hi), steps_inside(hi - 2, lo, hi)];
            match s.kind {
                StripKind::Type2 => {
                    let h = part.type2_heights()[s.index as usize - 1];
                    prop_assert_eq!(crossing, [h, h]);
                }
                // the top strip is only entered from the top edge
                StripKind::Type1 if s.index < w => {
                    prop_assert_eq!(crossing.iter().copied().max(), Some(w.div_ceil(2)));
                    prop_assert_eq!(crossing.iter().copied().min(), Some(w / 2));
                }
                StripKind::Type1 => {}
            }
        }
    }

    #[test]
    fn worth_is_monotone(t in 4u32..1000, vi in 0u32..999, a in 0u32..999) {
        let (vi, a) = (vi % (t - 1), a % (t - 1));
        let p = GridPoint { value: t + vi, age: a };
        let older = GridPoint { value: t + vi, age: a + 1 };
        let richer = GridPoint { value: t + vi + 1, age: a };
        prop_assert!(worth(p, t) > worth(older, t));
        prop_assert!(worth(richer, t) > worth(p, t));
    }

    #[test]
    fn modified_acceptance_is_symmetric(
        t in 4u32..300,
        x in (0u32..300, 0u32..300),
        y in (0u32..300, 0u32..300),
    ) {
        let part = StripPartition::build(t).unwrap();
        let a = AgentView::new(t + x.0 % t, x.1 % t);
        let b = AgentView::new(t + y.0 % t, y.1 % t);
        let kind = StrategyKind::ModifiedReasonable;
        prop_assert_eq!(accepts(kind, a, b, &part), accepts(kind, b, a, &part));
    }

    #[test]
    fn accept_all_dominates(
        t in 4u32..300,
        x in (0u32..300, 0u32..300),
        y in (0u32..300, 0u32..300),
    ) {
        let part = StripPartition::build(t).unwrap();
        let a = AgentView::new(t + x.0 % t, x.1 % t);
        let b = AgentView::new(t + y.0 % t, y.1 % t);
        for kind in [StrategyKind::Reasonable, StrategyKind::ModifiedReasonable] {
            if accepts(kind, a, b, &part) {
                prop_assert!(accepts(StrategyKind::AcceptAll, a, b, &part));
            }
        }
    }

    #[test]
    fn reasonable_threshold_at_entry(t in 4u32..2000, vi in 0u32..2000) {
        let v = t + vi % t;
        let expected = v as f64 * t as f64 * (1.0 - 1.0 / (t as f64).sqrt());
        let got = reasonable_threshold(AgentView::new(v, 0), t);
        prop_assert!((got - expected).abs() <= 1e-9 * expected);
    }
}

fn strategy() -> impl Strategy<Value = StrategyKind> {
    prop::sample::select(StrategyKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn market_invariants(
        n in 0usize..40,
        t in 4u32..40,
        kind in strategy(),
        seed in any::<u64>(),
        steps in 1u64..120,
    ) {
        let params = MarketParams { n, lifetime: t, strategy: kind };
        let mut market = Market::new(params, seed).unwrap();
        let part = market.partition().unwrap().clone();
        let (mut entered, mut matched, mut aged) = (0usize, 0usize, 0usize);
        for _ in 0..steps {
            let mut census = Vec::new();
            let mut pop = 0;
            let report = market.step_observed(|m| {
                census = strip_census(m.step_count(), m.agents(), &part);
                pop = m.population();
            });
            prop_assert_eq!(census.iter().map(|r| r.population()).sum::<usize>(), pop);
            for r in &census {
                prop_assert_eq!(r.imbalance % 2, r.population() % 2);
            }
            prop_assert!(report.matches.len() <= report.proposed_pairs);
            prop_assert_eq!(
                report.proposed_pairs,
                report.men_after_entry.min(report.women_after_entry)
            );
            entered += report.entrants;
            matched += 2 * report.matches.len();
            aged += report.aged_out.len();
            prop_assert_eq!(entered, matched + aged + market.population());
            prop_assert!(market.agents().all(|a| a.age < t));
        }
    }

    #[test]
    fn reruns_are_identical(
        n in 1usize..30,
        t in 4u32..30,
        kind in strategy(),
        seed in any::<u64>(),
    ) {
        let cfg = RunConfig::new(n, t, kind).with_steps(60);
        let a = run_seed(&cfg, seed).unwrap();
        let b = run_seed(&cfg, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn modified_matches_respect_per_match_bound(
        n in 1usize..60,
        root in 2u32..10,
        seed in any::<u64>(),
    ) {
        let t = root * root;
        let cfg = RunConfig::new(n, t, StrategyKind::ModifiedReasonable).with_steps(100);
        let r = run_seed(&cfg, seed).unwrap();
        prop_assert_eq!(r.summary.match_bound_violations, 0);
    }
}

#[test]
fn powers_of_four_strip_count() {
    for i in 1..=7u32 {
        let t = 4u32.pow(i);
        let part = StripPartition::build(t).unwrap();
        let root = 2u32.pow(i);
        assert_eq!(part.strip_count() as u32, root + i + 1, "T={t}");
    }
}

/// A wide remainder strip breaks the per-match bound: at T = 23 the top
/// Type 1 strip spans 11 diagonals while the bound allows a value gap of
/// about 2√T at age 0.
#[test]
fn remainder_strip_can_exceed_per_match_bound() {
    let r = matchpool::oracles::strip_pair_loss_scan(23).unwrap();
    assert!(r.violations > 0);
    let (p, q) = r.worst_pair.unwrap();
    assert_eq!((p.age, q.age), (0, 0));
    for root in 2..=16u32 {
        assert_eq!(
            matchpool::oracles::strip_pair_loss_scan(root * root)
                .unwrap()
                .violations,
            0
        );
    }
}
