//! Deterministic mean-field version of the pool.
//!
//! The grid holds the mass of one gender per `(value, age)` cell; the other
//! gender is identical by symmetry, so reported populations are twice the grid
//! total. Each step adds `n/(2T)` to every age-0 cell, then removes from every
//! cell `x` the matched mass `μ_x · A(x) / M`, where `M` is the grid total and
//! `A(x)` the mass of cells that mutually accept `x`. The survivors age by one
//! step and the mass leaving age `T−1` exits.
//!
//! Mutual acceptance is time-invariant, so it is precomputed as, for every
//! cell, a list of row spans: contiguous value ranges of one age row. Row
//! prefix sums of `μ` and `μ·v` then give both `A(x)` and the loss integral
//! in O(1) per span.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{StripId, StripPartition};
use crate::strategy::{mutually_accept, AgentView, StrategyKind};

/// Contiguous run `[lo, hi)` of value indices (`value − T`) in one age row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSpan {
    pub age: u32,
    pub lo: u32,
    pub hi: u32,
}

/// Mutual acceptance as span lists. Cells that share a partner set (every
/// cell under accept-all, every cell of one strip under the modified rule)
/// share one list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptanceRelation {
    lifetime: u32,
    cell_list: Vec<u32>,
    lists: Vec<Vec<RowSpan>>,
}

impl AcceptanceRelation {
    pub fn build(kind: StrategyKind, part: &StripPartition) -> Self {
        match kind {
            StrategyKind::AcceptAll => Self::accept_all(part.lifetime()),
            StrategyKind::ModifiedReasonable => Self::from_strips(part),
            StrategyKind::Reasonable => Self::scan(kind, part),
        }
    }

    fn accept_all(lifetime: u32) -> Self {
        let cells = (lifetime * lifetime) as usize;
        let all = (0..lifetime)
            .map(|age| RowSpan {
                age,
                lo: 0,
                hi: lifetime,
            })
            .collect();
        AcceptanceRelation {
            lifetime,
            cell_list: vec![0; cells],
            lists: vec![all],
        }
    }

    /// Same-strip relation straight from the diagonal ranges: strip `[lo, hi)`
    /// meets row `a` in values `[lo + 2a, hi + 2a)`.
    pub fn from_strips(part: &StripPartition) -> Self {
        let t = part.lifetime();
        let lists = part
            .strips()
            .map(|strip| {
                let (lo_d, hi_d) = part.diag_range(strip);
                (0..t)
                    .filter_map(|age| {
                        let lo = (lo_d + 2 * age as i64).max(t as i64);
                        let hi = (hi_d + 2 * age as i64).min(2 * t as i64);
                        (lo < hi).then(|| RowSpan {
                            age,
                            lo: (lo - t as i64) as u32,
                            hi: (hi - t as i64) as u32,
                        })
                    })
                    .collect()
            })
            .collect();
        let mut cell_list = vec![0; (t * t) as usize];
        for age in 0..t {
            for vi in 0..t {
                cell_list[cell_index(t, age, vi)] = part.slot_of(t + vi, age) as u32;
            }
        }
        AcceptanceRelation {
            lifetime: t,
            cell_list,
            lists,
        }
    }

    /// Evaluates the acceptance rule on every cell pair, O(T⁴).
    pub fn scan(kind: StrategyKind, part: &StripPartition) -> Self {
        let t = part.lifetime();
        let mut lists = Vec::with_capacity((t * t) as usize);
        for age in 0..t {
            for vi in 0..t {
                let me = AgentView::new(t + vi, age);
                let mut spans = Vec::new();
                for other_age in 0..t {
                    let mut run: Option<u32> = None;
                    for ovi in 0..=t {
                        let ok = ovi < t
                            && mutually_accept(kind, me, AgentView::new(t + ovi, other_age), part);
                        match (ok, run) {
                            (true, None) => run = Some(ovi),
                            (false, Some(lo)) => {
                                spans.push(RowSpan {
                                    age: other_age,
                                    lo,
                                    hi: ovi,
                                });
                                run = None;
                            }
                            _ => {}
                        }
                    }
                }
                lists.push(spans);
            }
        }
        AcceptanceRelation {
            lifetime: t,
            cell_list: (0..t * t).collect(),
            lists,
        }
    }

    pub fn lifetime(&self) -> u32 {
        self.lifetime
    }

    /// Partner spans of the cell `(value, age)`.
    pub fn spans(&self, value: u32, age: u32) -> &[RowSpan] {
        let t = self.lifetime;
        &self.lists[self.cell_list[cell_index(t, age, value - t)] as usize]
    }

    pub fn accepts(&self, x: AgentView, y: AgentView) -> bool {
        let vi = y.value - self.lifetime;
        self.spans(x.value, x.age)
            .iter()
            .any(|s| s.age == y.age && s.lo <= vi && vi < s.hi)
    }
}

#[inline]
fn cell_index(lifetime: u32, age: u32, value_index: u32) -> usize {
    (age * lifetime + value_index) as usize
}

/// Per-gender mass on the `T × T` grid, stored row-major by age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    lifetime: u32,
    mass: Vec<f64>,
    step: u64,
}

impl DensityGrid {
    pub fn lifetime(&self) -> u32 {
        self.lifetime
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn mass(&self, value: u32, age: u32) -> f64 {
        self.mass[cell_index(self.lifetime, age, value - self.lifetime)]
    }

    /// Per-gender total `M`.
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Both genders.
    pub fn population(&self) -> f64 {
        2.0 * self.total()
    }

    fn row(&self, age: u32) -> &[f64] {
        let t = self.lifetime as usize;
        let a = age as usize;
        &self.mass[a * t..(a + 1) * t]
    }
}

pub fn continuum_init(lifetime: u32) -> Result<DensityGrid> {
    if lifetime < 4 {
        return Err(Error::invalid(format!("T must be >= 4, got {lifetime}")));
    }
    Ok(DensityGrid {
        lifetime,
        mass: vec![0.0; (lifetime * lifetime) as usize],
        step: 0,
    })
}

/// Mass flows of one step, summed over both genders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub entered_mass: f64,
    /// Post-entry population, the observation point.
    pub population_after_entry: f64,
    pub matched_mass: f64,
    pub aged_out_mass: f64,
    /// Loss of matched and expelled mass together.
    pub loss_added: f64,
    pub matched_loss_added: f64,
}

/// Mean-field stepper for one `(strategy, T, n)`.
#[derive(Debug, Clone)]
pub struct ContinuumSolver {
    kind: StrategyKind,
    n: f64,
    part: StripPartition,
    relation: AcceptanceRelation,
    grid: DensityGrid,
    // scratch
    prefix_mass: Vec<f64>,
    prefix_value_mass: Vec<f64>,
    matched: Vec<f64>,
}

impl ContinuumSolver {
    pub fn new(kind: StrategyKind, n: usize, lifetime: u32) -> Result<Self> {
        let part = StripPartition::build(lifetime)?;
        let relation = AcceptanceRelation::build(kind, &part);
        Self::with_relation(kind, n, part, relation)
    }

    pub fn with_relation(
        kind: StrategyKind,
        n: usize,
        part: StripPartition,
        relation: AcceptanceRelation,
    ) -> Result<Self> {
        let t = part.lifetime();
        if relation.lifetime() != t {
            return Err(Error::invalid("relation built for a different T"));
        }
        let grid = continuum_init(t)?;
        let row_len = (t + 1) as usize;
        Ok(ContinuumSolver {
            kind,
            n: n as f64,
            part,
            relation,
            grid,
            prefix_mass: vec![0.0; t as usize * row_len],
            prefix_value_mass: vec![0.0; t as usize * row_len],
            matched: vec![0.0; (t * t) as usize],
        })
    }

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn partition(&self) -> &StripPartition {
        &self.part
    }

    /// Per-gender mass in each strip, slot order.
    pub fn strip_masses(&self) -> Vec<(StripId, f64)> {
        let t = self.grid.lifetime;
        let mut sums = vec![0.0; self.part.strip_count()];
        for age in 0..t {
            for vi in 0..t {
                sums[self.part.slot_of(t + vi, age)] += self.grid.mass(t + vi, age);
            }
        }
        sums.into_iter()
            .enumerate()
            .map(|(s, m)| (self.part.strip_at(s), m))
            .collect()
    }

    pub fn step(&mut self) -> FlowReport {
        let t = self.grid.lifetime;
        let tu = t as usize;
        let tf = t as f64;
        let row_len = tu + 1;

        // entry
        let per_cell = self.n / (2.0 * tf);
        for m in &mut self.grid.mass[..tu] {
            *m += per_cell;
        }
        let total = self.grid.total();
        let mut flow = FlowReport {
            entered_mass: self.n,
            population_after_entry: 2.0 * total,
            ..Default::default()
        };

        // row prefix sums of μ and μ·v
        for age in 0..tu {
            let row = self.grid.row(age as u32);
            let pm = &mut self.prefix_mass[age * row_len..(age + 1) * row_len];
            let pv = &mut self.prefix_value_mass[age * row_len..(age + 1) * row_len];
            pm[0] = 0.0;
            pv[0] = 0.0;
            for (j, &m) in row.iter().enumerate() {
                pm[j + 1] = pm[j] + m;
                pv[j + 1] = pv[j] + m * (t + j as u32) as f64;
            }
        }

        // matching, computed against the pre-match grid
        let mut matched_total = 0.0;
        let mut matched_loss = 0.0;
        if total > 0.0 {
            for age in 0..t {
                for vi in 0..t {
                    let idx = cell_index(t, age, vi);
                    let mx = self.grid.mass[idx];
                    if mx <= 0.0 {
                        self.matched[idx] = 0.0;
                        continue;
                    }
                    let value = (t + vi) as f64;
                    let own_target = value * tf;
                    let mut partner_mass = 0.0;
                    let mut loss = 0.0;
                    for s in self.relation.spans(t + vi, age) {
                        let base = s.age as usize * row_len;
                        let pm = &self.prefix_mass[base..base + row_len];
                        let pv = &self.prefix_value_mass[base..base + row_len];
                        let lo = s.lo as usize;
                        let hi = s.hi as usize;
                        partner_mass += pm[hi] - pm[lo];
                        // loss is positive while partner value · c < value · T
                        let c = (t - age.max(s.age)) as f64;
                        let cut_value = (own_target / c).ceil() as i64;
                        let cut = (cut_value - t as i64).clamp(lo as i64, hi as i64) as usize;
                        loss += own_target * (pm[cut] - pm[lo]) - c * (pv[cut] - pv[lo]);
                    }
                    let matched = mx * partner_mass / total;
                    self.matched[idx] = matched;
                    matched_total += matched;
                    matched_loss += mx * loss / total;
                }
            }
        }
        for (m, out) in self.grid.mass.iter_mut().zip(&self.matched) {
            *m = (*m - out).max(0.0);
        }

        // expulsion from the last row, then aging
        let last = (tu - 1) * tu;
        let mut aged_out = 0.0;
        let mut aged_loss = 0.0;
        for vi in 0..tu {
            let m = self.grid.mass[last + vi];
            aged_out += m;
            aged_loss += m * (t as usize + vi) as f64 * tf;
        }
        self.grid.mass.copy_within(0..last, tu);
        self.grid.mass[..tu].fill(0.0);
        self.matched.fill(0.0);
        self.grid.step += 1;

        flow.matched_mass = 2.0 * matched_total;
        flow.aged_out_mass = 2.0 * aged_out;
        flow.matched_loss_added = 2.0 * matched_loss;
        flow.loss_added = 2.0 * (matched_loss + aged_loss);
        flow
    }
}

/// Relative population change below this, sustained for `T` consecutive
/// steps, counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSummary {
    pub strategy: StrategyKind,
    pub n: usize,
    pub lifetime: u32,
    pub steps: u64,
    /// Post-entry population per step.
    pub population: Vec<f64>,
    /// Loss per departing mass, aged-out mass included, cumulative per step.
    pub avg_loss_series: Vec<Option<f64>>,
    pub avg_population: f64,
    /// Average over steps `>= T`.
    pub avg_population_after_burn_in: Option<f64>,
    pub avg_loss_all: Option<f64>,
    pub avg_loss_matched: Option<f64>,
    pub loss_over_t: Option<f64>,
    pub loss_matched_over_t: Option<f64>,
    /// Loss per departing mass restricted to steps `>= T`.
    pub loss_over_t_after_burn_in: Option<f64>,
    pub final_population: f64,
    /// Loss per departing mass in the last step.
    pub final_loss_over_t: Option<f64>,
    pub converged: bool,
    /// First step of the sustained quiet window.
    pub converged_at: Option<u64>,
    pub total_entered: f64,
    pub total_matched: f64,
    pub total_aged_out: f64,
}

pub fn continuum_run(config: &RunConfig) -> Result<ContinuumSummary> {
    config.validate()?;
    let solver = ContinuumSolver::new(config.strategy, config.n, config.lifetime)?;
    Ok(run_solver(solver, config.steps))
}

pub fn run_solver(mut solver: ContinuumSolver, steps: u64) -> ContinuumSummary {
    let t = solver.grid.lifetime;
    let burn_in = t as u64;
    let mut population = Vec::with_capacity(steps as usize);
    let mut avg_loss_series = Vec::with_capacity(steps as usize);
    let (mut loss, mut departed, mut loss_m, mut matched) = (0.0, 0.0, 0.0, 0.0);
    let (mut loss_b, mut departed_b) = (0.0, 0.0);
    let (mut entered, mut aged_out) = (0.0, 0.0);
    let mut quiet_since: Option<u64> = None;
    let mut converged_at = None;
    let mut last = FlowReport::default();

    for step in 0..steps {
        let f = solver.step();
        let prev = population.last().copied();
        population.push(f.population_after_entry);
        loss += f.loss_added;
        departed += f.matched_mass + f.aged_out_mass;
        loss_m += f.matched_loss_added;
        matched += f.matched_mass;
        entered += f.entered_mass;
        aged_out += f.aged_out_mass;
        if step >= burn_in {
            loss_b += f.loss_added;
            departed_b += f.matched_mass + f.aged_out_mass;
        }
        avg_loss_series.push((departed > 0.0).then(|| loss / departed));

        let quiet = prev.is_some_and(|p| {
            p > 0.0 && ((f.population_after_entry - p) / p).abs() < CONVERGENCE_TOLERANCE
        });
        if quiet {
            let since = *quiet_since.get_or_insert(step);
            if converged_at.is_none() && step + 1 - since >= t as u64 {
                converged_at = Some(since);
            }
        } else {
            quiet_since = None;
        }
        last = f;
    }

    let tf = t as f64;
    let avg = |x: f64, d: f64| (d > 0.0).then(|| x / d);
    let avg_loss_all = avg(loss, departed);
    let avg_loss_matched = avg(loss_m, matched);
    let after: Vec<f64> = population.iter().skip(burn_in as usize).copied().collect();
    ContinuumSummary {
        strategy: solver.kind,
        n: solver.n as usize,
        lifetime: t,
        steps,
        avg_population: population.iter().sum::<f64>() / population.len().max(1) as f64,
        avg_population_after_burn_in: (!after.is_empty())
            .then(|| after.iter().sum::<f64>() / after.len() as f64),
        avg_loss_all,
        avg_loss_matched,
        loss_over_t: avg_loss_all.map(|l| l / tf),
        loss_matched_over_t: avg_loss_matched.map(|l| l / tf),
        loss_over_t_after_burn_in: avg(loss_b, departed_b).map(|l| l / tf),
        final_population: population.last().copied().unwrap_or(0.0),
        final_loss_over_t: avg(last.loss_added, last.matched_mass + last.aged_out_mass)
            .map(|l| l / tf),
        converged: converged_at.is_some(),
        converged_at,
        total_entered: entered,
        total_matched: matched,
        total_aged_out: aged_out,
        population,
        avg_loss_series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct transcription of the update rule over every cell pair.
    fn reference_step(
        mass: &mut [f64],
        kind: StrategyKind,
        part: &StripPartition,
        n: f64,
    ) -> FlowReport {
        let t = part.lifetime();
        let tf = t as f64;
        for m in &mut mass[..t as usize] {
            *m += n / (2.0 * tf);
        }
        let total: f64 = mass.iter().sum();
        let mut matched = vec![0.0; mass.len()];
        let (mut mt, mut ml) = (0.0, 0.0);
        for ax in 0..t {
            for vx in 0..t {
                let x = AgentView::new(t + vx, ax);
                let mx = mass[cell_index(t, ax, vx)];
                for ay in 0..t {
                    for vy in 0..t {
                        let y = AgentView::new(t + vy, ay);
                        if !mutually_accept(kind, x, y, part) {
                            continue;
                        }
                        let pair = mx * mass[cell_index(t, ay, vy)] / total;
                        matched[cell_index(t, ax, vx)] += pair;
                        let c = (t - ax.max(ay)) as f64;
                        let loss = ((t + vx) as f64 * tf - (t + vy) as f64 * c).max(0.0);
                        ml += pair * loss;
                    }
                }
                mt += matched[cell_index(t, ax, vx)];
            }
        }
        for (m, out) in mass.iter_mut().zip(&matched) {
            *m -= out;
        }
        let tu = t as usize;
        let last = (tu - 1) * tu;
        let mut out = 0.0;
        let mut out_loss = 0.0;
        for vi in 0..tu {
            out += mass[last + vi];
            out_loss += mass[last + vi] * (tu + vi) as f64 * tf;
        }
        mass.copy_within(0..last, tu);
        mass[..tu].fill(0.0);
        FlowReport {
            entered_mass: n,
            population_after_entry: 2.0 * total,
            matched_mass: 2.0 * mt,
            aged_out_mass: 2.0 * out,
            loss_added: 2.0 * (ml + out_loss),
            matched_loss_added: 2.0 * ml,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn init_is_empty() {
        let g = continuum_init(16).unwrap();
        assert_eq!(g.total(), 0.0);
        assert!(continuum_init(3).is_err());
    }

    #[test]
    fn first_step_population_is_n() {
        for kind in StrategyKind::ALL {
            let mut s = ContinuumSolver::new(kind, 500, 16).unwrap();
            let f = s.step();
            assert!(close(f.population_after_entry, 500.0, 1e-12));
        }
    }

    #[test]
    fn matches_reference_stepper() {
        for t in [9u32, 16] {
            let part = StripPartition::build(t).unwrap();
            for kind in StrategyKind::ALL {
                let mut solver = ContinuumSolver::new(kind, 40, t).unwrap();
                let mut mass = vec![0.0; (t * t) as usize];
                for step in 0..3 * t {
                    let a = solver.step();
                    let b = reference_step(&mut mass, kind, &part, 40.0);
                    for (x, y) in [
                        (a.population_after_entry, b.population_after_entry),
                        (a.matched_mass, b.matched_mass),
                        (a.aged_out_mass, b.aged_out_mass),
                        (a.loss_added, b.loss_added),
                        (a.matched_loss_added, b.matched_loss_added),
                    ] {
                        assert!(close(x, y, 1e-9), "{kind} T={t} step {step}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn strip_relation_equals_scanned_relation() {
        for t in [4u32, 9, 16, 25, 30] {
            let part = StripPartition::build(t).unwrap();
            let fast = AcceptanceRelation::from_strips(&part);
            let slow = AcceptanceRelation::scan(StrategyKind::ModifiedReasonable, &part);
            for ax in 0..t {
                for vx in t..2 * t {
                    assert_eq!(fast.spans(vx, ax), slow.spans(vx, ax), "T={t} ({vx},{ax})");
                }
            }
        }
    }

    #[test]
    fn conservation_every_step() {
        for kind in StrategyKind::ALL {
            let mut s = ContinuumSolver::new(kind, 500, 25).unwrap();
            let mut before = 0.0;
            for _ in 0..200 {
                let f = s.step();
                let after = s.grid().population();
                let expected = before + f.entered_mass - f.matched_mass - f.aged_out_mass;
                assert!(
                    close(after, expected, 1e-12),
                    "{kind}: {after} vs {expected}"
                );
                assert!(after <= 500.0 * 25.0);
                before = after;
            }
        }
    }

    #[test]
    fn accept_all_steady_state() {
        let t = 16;
        let cfg = RunConfig::new(500, t, StrategyKind::AcceptAll).with_steps(100);
        let s = continuum_run(&cfg).unwrap();
        assert!(s.population.iter().all(|&p| close(p, 500.0, 1e-12)));
        let expected = (t * t - 1) as f64 / 6.0 / t as f64;
        assert!(close(s.loss_over_t.unwrap(), expected, 1e-12));
        assert_eq!(s.total_aged_out, 0.0);
    }

    #[test]
    fn accept_all_population_is_smallest() {
        let run = |kind| {
            let cfg = RunConfig::new(500, 36, kind).with_steps(300);
            continuum_run(&cfg).unwrap().final_population
        };
        let all = run(StrategyKind::AcceptAll);
        assert!(all <= run(StrategyKind::ModifiedReasonable));
        assert!(all <= run(StrategyKind::Reasonable));
    }

    #[test]
    fn converges_and_is_deterministic() {
        let cfg = RunConfig::new(500, 36, StrategyKind::ModifiedReasonable).with_steps(600);
        let a = continuum_run(&cfg).unwrap();
        let b = continuum_run(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.converged);
        assert!(a.converged_at.unwrap() < 600);
        assert!(a.avg_population_after_burn_in.is_some());
    }

    #[test]
    fn relation_rejects_mismatched_lifetime() {
        let part = StripPartition::build(16).unwrap();
        let rel = AcceptanceRelation::from_strips(&StripPartition::build(25).unwrap());
        assert!(
            ContinuumSolver::with_relation(StrategyKind::ModifiedReasonable, 5, part, rel).is_err()
        );
    }
}
