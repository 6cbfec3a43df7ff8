//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;

use matchpool::continuum::continuum_run;
use matchpool::geometry::diag_coord;
use matchpool::metrics::{constraints_satisfied, strip_census, Clause};
use matchpool::oracles::{
    acceptall_expected_loss, cylinder_sweep, frequency_outcome, match_probability_sweep,
    strip_pair_loss_scan,
};
use matchpool::output::{batch_summary, timeseries_csv, BatchSummary};
use matchpool::simulation::{run_batch, run_seed};
use matchpool::{Market, RunConfig, StrategyKind, StripPartition};

const N: usize = 500;
const T: u32 = 100;
const STEPS: u64 = 2000;
const RUNS: usize = 10;

const SWEEP_T: [u32; 5] = [100, 200, 300, 400, 500];
const SWEEP_LOSS: [f64; 5] = [22.1, 33.03, 40.8, 47.71, 53.95];
const SWEEP_POP: [f64; 5] = [4747.1, 7154.4, 8823.2, 10404.9, 11698.0];

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn pct(x: f64, target: f64) -> String {
    format!("{:+.1}%", (x / target - 1.0) * 100.0)
}

struct Batches {
    cache: BTreeMap<(u8, u32), BatchSummary>,
}

impl Batches {
    fn get(&mut self, strategy: StrategyKind, lifetime: u32) -> &BatchSummary {
        let key = (strategy as u8, lifetime);
        self.cache.entry(key).or_insert_with(|| {
            let cfg = RunConfig::new(N, lifetime, strategy)
                .with_steps(STEPS)
                .with_runs(RUNS);
            let results = run_batch(&cfg).expect("valid config");
            batch_summary(&cfg, &results).expect("non-empty batch")
        })
    }
}

type Check = Box<dyn Fn(&mut Batches) -> Outcome>;

struct Outcome {
    passed: bool,
    detail: String,
}

/// Population and loss/T against targets; either loss denominator may match.
fn reproduction(s: &BatchSummary, pop: f64, pop_tol: f64, loss: f64, loss_tol: f64) -> Outcome {
    let p = s.population.mean;
    let la = s.loss_over_t.map(|x| x.mean).unwrap_or(f64::NAN);
    let lm = s.loss_matched_over_t.map(|x| x.mean).unwrap_or(f64::NAN);
    let pop_ok = within(p, pop, pop_tol);
    let loss_ok = within(la, loss, loss_tol) || within(lm, loss, loss_tol);
    Outcome {
        passed: pop_ok && loss_ok,
        detail: format!(
            "population {p:.1} vs {pop} ({}, ±{:.0}% allowed, spread ±{:.2}%); loss/T all {la:.2} ({}) matched {lm:.2} ({}) vs {loss} (±{:.0}%)",
            pct(p, pop),
            pop_tol * 100.0,
            s.population.half_range_pct,
            pct(la, loss),
            pct(lm, loss),
            loss_tol * 100.0
        ),
    }
}

fn criterion_1(b: &mut Batches) -> Outcome {
    reproduction(
        b.get(StrategyKind::ModifiedReasonable, T),
        4747.1,
        0.05,
        22.1,
        0.10,
    )
}

fn criterion_2(b: &mut Batches) -> Outcome {
    reproduction(b.get(StrategyKind::Reasonable, T), 1511.7, 0.05, 9.99, 0.10)
}

fn criterion_3(b: &mut Batches) -> Outcome {
    let mut passed = true;
    let mut cells = Vec::new();
    let mut norm_pop = Vec::new();
    let mut norm_loss = Vec::new();
    for i in 0..SWEEP_T.len() {
        let s = b.get(StrategyKind::ModifiedReasonable, SWEEP_T[i]);
        let o = reproduction(s, SWEEP_POP[i], 0.07, SWEEP_LOSS[i], 0.10);
        passed &= o.passed;
        cells.push(format!(
            "T={} pop {:.0} ({}) loss/T {:.2} ({}) {}",
            SWEEP_T[i],
            s.population.mean,
            pct(s.population.mean, SWEEP_POP[i]),
            s.loss_over_t.map(|x| x.mean).unwrap_or(f64::NAN),
            pct(
                s.loss_over_t.map(|x| x.mean).unwrap_or(f64::NAN),
                SWEEP_LOSS[i]
            ),
            if o.passed { "ok" } else { "off" }
        ));
        norm_pop.push(s.normalized_population);
        norm_loss.push(s.normalized_loss.unwrap_or(f64::NAN));
    }
    let variation = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo
    };
    let (vp, vl) = (variation(&norm_pop), variation(&norm_loss));
    passed &= vp < 0.20 && vl < 0.20;
    Outcome {
        passed,
        detail: format!(
            "{}; normalized population varies {:.1}%, normalized loss varies {:.1}% (< 20% required)",
            cells.join("; "),
            vp * 100.0,
            vl * 100.0
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (kind, pop, loss) in [
        (StrategyKind::ModifiedReasonable, 4484.8, 20.85),
        (StrategyKind::Reasonable, 1180.9, 8.89),
    ] {
        let cfg = RunConfig::new(N, T, kind).with_steps(STEPS);
        let s = continuum_run(&cfg).expect("valid config");
        let l = s.loss_over_t.unwrap_or(f64::NAN);
        let lm = s.loss_matched_over_t.unwrap_or(f64::NAN);
        let ok = within(s.avg_population, pop, 0.03)
            && (within(l, loss, 0.07) || within(lm, loss, 0.07))
            && s.converged_at.is_some_and(|c| c < 500);
        passed &= ok;
        parts.push(format!(
            "{kind}: population {:.1} vs {pop} ({}), loss/T {l:.2} / matched {lm:.2} vs {loss} ({}), converged at {:?}",
            s.avg_population,
            pct(s.avg_population, pop),
            pct(l, loss),
            s.converged_at
        ));
    }
    Outcome {
        passed,
        detail: parts.join("; "),
    }
}

fn criterion_5(b: &mut Batches) -> Outcome {
    let t = T as f64;
    let (lo, hi) = (t * t.sqrt() / 20.0, 11.0 * t * t.sqrt());
    let mut passed = true;
    let mut parts = Vec::new();
    for kind in StrategyKind::ALL {
        let s = b.get(kind, T);
        let losses: Vec<f64> = s.runs.iter().filter_map(|r| r.avg_loss_all).collect();
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ok = losses.len() == s.runs.len()
            && min >= lo
            && (kind != StrategyKind::ModifiedReasonable || max <= hi);
        passed &= ok;
        parts.push(format!("{kind} avg loss in [{min:.0}, {max:.0}]"));
    }
    Outcome {
        passed,
        detail: format!("window [{lo:.0}, {hi:.0}]: {}", parts.join(", ")),
    }
}

fn criterion_6(b: &mut Batches) -> Outcome {
    let mut violations = 0;
    let mut sides = 0;
    for t in SWEEP_T {
        let s = b.get(StrategyKind::ModifiedReasonable, t);
        violations += s.match_bound_violations;
        sides += s.sides_checked;
    }
    let scans: Vec<_> = [16, 100]
        .iter()
        .map(|&t| strip_pair_loss_scan(t).expect("within scan limit"))
        .collect();
    let scan_violations: u64 = scans.iter().map(|r| r.violations).sum();
    Outcome {
        passed: violations == 0 && scan_violations == 0 && sides > 0,
        detail: format!(
            "{violations} violations over {sides} matched sides; scan T=16: {} violations, T=100: {} violations",
            scans[0].violations, scans[1].violations
        ),
    }
}

fn criterion_7() -> Outcome {
    let outcomes = [
        match_probability_sweep(6).expect("within limits"),
        cylinder_sweep(4).expect("within limits"),
        frequency_outcome(1).expect("within limits"),
    ];
    Outcome {
        passed: outcomes.iter().all(|o| o.passed),
        detail: outcomes
            .iter()
            .map(|o| format!("{}: {}", o.name, o.detail))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_8(b: &mut Batches) -> Outcome {
    let target = acceptall_expected_loss(T);
    let target = *target.numer() as f64 / *target.denom() as f64;
    let s = b.get(StrategyKind::AcceptAll, T);
    let losses: Vec<f64> = s.runs.iter().filter_map(|r| r.avg_loss_all).collect();
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    Outcome {
        passed: within(mean, target, 0.05),
        detail: format!("avg loss {mean:.1} vs {target} ({})", pct(mean, target)),
    }
}

fn criterion_9() -> Outcome {
    let cfg = RunConfig::new(N, T, StrategyKind::ModifiedReasonable).with_steps(STEPS);
    let mut market = Market::new(cfg.market_params(), cfg.seed).expect("valid params");
    let part = StripPartition::build(T).expect("T >= 4");
    let mut failures = Vec::new();
    let (mut entered, mut left) = (0usize, 0usize);
    for _ in 0..STEPS {
        let mut ok_census = true;
        let mut ok_parity = true;
        let mut ok_partition = true;
        let report = market.step_observed(|m| {
            let census = strip_census(m.step_count(), m.agents(), &part);
            ok_census = census.iter().map(|r| r.population()).sum::<usize>() == m.population();
            ok_parity = census.iter().all(|r| r.imbalance % 2 == r.population() % 2);
            ok_partition = m.agents().all(|a| {
                let (lo, hi) = part.diag_range(part.strip_at(part.slot_of(a.value, a.age)));
                let d = diag_coord(a.value, a.age);
                lo <= d && d < hi
            });
        });
        entered += report.entrants;
        left += 2 * report.matches.len() + report.aged_out.len();
        let step = report.step;
        if entered != left + market.population() {
            failures.push(format!("conservation at step {step}"));
        }
        for (ok, what) in [
            (ok_census, "census sum"),
            (ok_parity, "imbalance parity"),
            (ok_partition, "partition"),
        ] {
            if !ok {
                failures.push(format!("{what} at step {step}"));
            }
        }
    }
    let a = run_seed(&cfg, 1).expect("valid config");
    let b = run_seed(&cfg, 1).expect("valid config");
    let identical = a == b && timeseries_csv(&a.series) == timeseries_csv(&b.series);
    if !identical {
        failures.push("rerun differs".into());
    }
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "{STEPS} steps checked, {} failures{}",
            failures.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" (first: {})", failures[0])
            }
        ),
    }
}

fn criterion_10(b: &mut Batches) -> Outcome {
    let s = b.get(StrategyKind::ModifiedReasonable, T);
    let constraints = constraints_satisfied(N as f64, T as f64, 1.0);
    let mut passed = !constraints.satisfied;
    let mut parts = Vec::new();
    for c in &s.bounds {
        let frac = c.satisfied_fraction.unwrap_or(0.0);
        let gated = [
            Clause::TotalPopulation,
            Clause::Type1Population,
            Clause::Type2Population,
            Clause::BottomStripPopulation,
        ]
        .iter()
        .any(|g| g.id() == c.clause);
        if gated {
            passed &= c.observed_steps > 0 && frac >= 0.95;
        }
        parts.push(format!(
            "{} {:.1}% (mean margin {:.3}){}",
            c.clause,
            frac * 100.0,
            c.mean_margin.unwrap_or(f64::NAN),
            if c.exempt { " exempt" } else { "" }
        ));
    }
    Outcome {
        passed,
        detail: format!(
            "{}; constraints_satisfied(500, 100, 1) = {} (T < 676), so the imbalance clause is not gated",
            parts.join(", "),
            constraints.satisfied
        ),
    }
}

fn main() -> ExitCode {
    let mut batches = Batches {
        cache: BTreeMap::new(),
    };
    let criteria: Vec<(&str, Check)> = vec![
        ("modified discrete reproduction", Box::new(criterion_1)),
        ("reasonable discrete reproduction", Box::new(criterion_2)),
        ("lifetime sweep reproduction", Box::new(criterion_3)),
        ("continuum reproduction", Box::new(|_| criterion_4())),
        ("average-loss window", Box::new(criterion_5)),
        ("per-match loss bound", Box::new(criterion_6)),
        ("oracle exactness", Box::new(|_| criterion_7())),
        ("accept-all closed form", Box::new(criterion_8)),
        ("structural invariants", Box::new(|_| criterion_9())),
        ("population clause diagnostics", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check(&mut batches);
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {}", i + 1, o.detail);
        failed += !o.passed as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
