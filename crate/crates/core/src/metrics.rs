//! Loss accounting, censuses and the diagnostic bound clauses.

use serde::{Deserialize, Serialize};

use crate::geometry::{diag_coord, StripId, StripKind, StripPartition};
use crate::market::{Agent, Gender, MatchRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DepartureCause {
    Matched,
    AgedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepartureRecord {
    pub value: u32,
    /// Age at the match, or `T` for an agent expelled at the end of its lifetime.
    pub age_at_departure: u32,
    pub utility: u64,
    pub loss: u64,
    pub cause: DepartureCause,
}

impl DepartureRecord {
    pub fn aged_out(value: u32, lifetime: u32) -> Self {
        DepartureRecord {
            value,
            age_at_departure: lifetime,
            utility: 0,
            loss: value as u64 * lifetime as u64,
            cause: DepartureCause::AgedOut,
        }
    }
}

/// Running loss totals under both denominators: every departure, and matched
/// departures only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossAccumulator {
    pub loss_all: u64,
    pub departures: u64,
    pub loss_matched: u64,
    pub matched: u64,
    pub aged_out: u64,
}

impl LossAccumulator {
    pub fn record(&mut self, rec: &DepartureRecord) {
        self.loss_all += rec.loss;
        self.departures += 1;
        match rec.cause {
            DepartureCause::Matched => {
                self.loss_matched += rec.loss;
                self.matched += 1;
            }
            DepartureCause::AgedOut => self.aged_out += 1,
        }
    }

    pub fn merge(&mut self, other: &LossAccumulator) {
        self.loss_all += other.loss_all;
        self.departures += other.departures;
        self.loss_matched += other.loss_matched;
        self.matched += other.matched;
        self.aged_out += other.aged_out;
    }

    pub fn avg_loss_all(&self) -> Option<f64> {
        (self.departures > 0).then(|| self.loss_all as f64 / self.departures as f64)
    }

    pub fn avg_loss_matched(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.loss_matched as f64 / self.matched as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRow {
    pub step: u64,
    pub strip: StripId,
    pub men: usize,
    pub women: usize,
    pub imbalance: usize,
}

impl CensusRow {
    pub fn population(&self) -> usize {
        self.men + self.women
    }
}

/// Per-strip head counts, one row per strip in slot order.
pub fn strip_census<'a>(
    step: u64,
    agents: impl IntoIterator<Item = &'a Agent>,
    part: &StripPartition,
) -> Vec<CensusRow> {
    let mut counts = vec![(0usize, 0usize); part.strip_count()];
    for a in agents {
        let c = &mut counts[part.slot_of(a.value, a.age)];
        match a.gender {
            Gender::Man => c.0 += 1,
            Gender::Woman => c.1 += 1,
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(slot, (men, women))| CensusRow {
            step,
            strip: part.strip_at(slot),
            men,
            women,
            imbalance: men.abs_diff(women),
        })
        .collect()
}

/// Agents on the width-1 diagonal starting at value `3T/2`. Two consecutive
/// diagonal coordinates are counted so that both parities are covered.
pub fn diagonal_census<'a>(agents: impl IntoIterator<Item = &'a Agent>, lifetime: u32) -> usize {
    let start = (3 * lifetime / 2) as i64;
    agents
        .into_iter()
        .filter(|a| {
            let d = diag_coord(a.value, a.age);
            d == start || d == start + 1
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// Total population at most `3/2·nN + n`.
    TotalPopulation,
    /// Every Type 1 strip at most `2.6n`.
    Type1Population,
    /// Every Type 2 strip at most `7.5n√T / height`.
    Type2Population,
    /// Bottommost strip at most `60n/√T`.
    BottomStripPopulation,
    /// Imbalance at most `n/(25√T)` outside the bottommost strip.
    Imbalance,
    /// Total population at least `n√T/3`.
    PopulationLowerBound,
}

impl Clause {
    pub const ALL: [Clause; 6] = [
        Clause::TotalPopulation,
        Clause::Type1Population,
        Clause::Type2Population,
        Clause::BottomStripPopulation,
        Clause::Imbalance,
        Clause::PopulationLowerBound,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Clause::TotalPopulation => "h1_total_population",
            Clause::Type1Population => "h2_type1_population",
            Clause::Type2Population => "h3_type2_population",
            Clause::BottomStripPopulation => "h4_bottom_strip_population",
            Clause::Imbalance => "h5_imbalance",
            Clause::PopulationLowerBound => "lower_bound_population",
        }
    }

    pub fn is_lower_bound(&self) -> bool {
        matches!(self, Clause::PopulationLowerBound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClauseRecord {
    pub clause: Clause,
    pub threshold: f64,
    pub observed: f64,
    /// `observed / threshold`; per-strip clauses report their worst strip.
    pub margin: f64,
    pub satisfied: bool,
    pub strip: Option<StripId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub clauses: Vec<ClauseRecord>,
}

impl BoundReport {
    pub fn get(&self, clause: Clause) -> &ClauseRecord {
        self.clauses
            .iter()
            .find(|c| c.clause == clause)
            .expect("every clause is evaluated")
    }
}

/// Evaluates the population and imbalance clauses against one census.
/// Diagnostics only: violations are reported, never raised.
pub fn hypothesis_report(
    census: &[CensusRow],
    population: usize,
    n: usize,
    part: &StripPartition,
) -> BoundReport {
    let n = n as f64;
    let root = (part.lifetime() as f64).sqrt();
    let strips = part.strip_count() as f64;
    let bottom = part.bottom_strip();

    let whole = |clause: Clause, threshold: f64| {
        let observed = population as f64;
        let satisfied = if clause.is_lower_bound() {
            observed >= threshold
        } else {
            observed <= threshold
        };
        ClauseRecord {
            clause,
            threshold,
            observed,
            margin: observed / threshold,
            satisfied,
            strip: None,
        }
    };

    // Worst strip (largest observed/threshold) among those selected.
    let worst = |clause: Clause,
                 select: &dyn Fn(&CensusRow) -> bool,
                 measure: &dyn Fn(&CensusRow) -> f64,
                 threshold: &dyn Fn(StripId) -> f64| {
        let mut best: Option<ClauseRecord> = None;
        for row in census.iter().filter(|r| select(r)) {
            let thr = threshold(row.strip);
            let obs = measure(row);
            let rec = ClauseRecord {
                clause,
                threshold: thr,
                observed: obs,
                margin: obs / thr,
                satisfied: obs <= thr,
                strip: Some(row.strip),
            };
            if best.is_none_or(|b| rec.margin > b.margin) {
                best = Some(rec);
            }
        }
        best.expect("partition has strips of both kinds")
    };

    let pop = |r: &CensusRow| r.population() as f64;
    let clauses = vec![
        whole(Clause::TotalPopulation, 1.5 * n * strips + n),
        worst(
            Clause::Type1Population,
            &|r| r.strip.kind == StripKind::Type1,
            &pop,
            &|_| 2.6 * n,
        ),
        worst(
            Clause::Type2Population,
            &|r| r.strip.kind == StripKind::Type2,
            &pop,
            &|s| 7.5 * n * root / part.max_height(s),
        ),
        worst(
            Clause::BottomStripPopulation,
            &|r| r.strip == bottom,
            &pop,
            &|_| 60.0 * n / root,
        ),
        worst(
            Clause::Imbalance,
            &|r| r.strip != bottom,
            &|r| r.imbalance as f64,
            &|_| n / (25.0 * root),
        ),
        whole(Clause::PopulationLowerBound, n * root / 3.0),
    ];
    BoundReport { clauses }
}

/// Per-clause pass counts and margin extremes over the observed steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseTally {
    pub clause: Clause,
    pub observed_steps: u64,
    pub satisfied_steps: u64,
    pub min_margin: f64,
    pub max_margin: f64,
    pub margin_sum: f64,
}

impl ClauseTally {
    fn new(clause: Clause) -> Self {
        ClauseTally {
            clause,
            observed_steps: 0,
            satisfied_steps: 0,
            min_margin: f64::INFINITY,
            max_margin: f64::NEG_INFINITY,
            margin_sum: 0.0,
        }
    }

    pub fn violations(&self) -> u64 {
        self.observed_steps - self.satisfied_steps
    }

    pub fn satisfied_fraction(&self) -> Option<f64> {
        (self.observed_steps > 0).then(|| self.satisfied_steps as f64 / self.observed_steps as f64)
    }

    pub fn mean_margin(&self) -> Option<f64> {
        (self.observed_steps > 0).then(|| self.margin_sum / self.observed_steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisTally {
    pub clauses: Vec<ClauseTally>,
}

impl Default for HypothesisTally {
    fn default() -> Self {
        HypothesisTally {
            clauses: Clause::ALL.iter().copied().map(ClauseTally::new).collect(),
        }
    }
}

impl HypothesisTally {
    pub fn record(&mut self, report: &BoundReport) {
        for rec in &report.clauses {
            let t = self
                .clauses
                .iter_mut()
                .find(|t| t.clause == rec.clause)
                .expect("tally covers every clause");
            t.observed_steps += 1;
            t.satisfied_steps += rec.satisfied as u64;
            t.min_margin = t.min_margin.min(rec.margin);
            t.max_margin = t.max_margin.max(rec.margin);
            t.margin_sum += rec.margin;
        }
    }

    pub fn get(&self, clause: Clause) -> &ClauseTally {
        self.clauses
            .iter()
            .find(|t| t.clause == clause)
            .expect("tally covers every clause")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideCheck {
    pub man: bool,
    pub woman: bool,
}

impl SideCheck {
    pub fn both(&self) -> bool {
        self.man && self.woman
    }

    pub fn failures(&self) -> u64 {
        (!self.man) as u64 + (!self.woman) as u64
    }
}

/// Per-side bound `loss <= 4·T·age + 2·T·√T`, which holds for every
/// same-strip match.
pub fn match_loss_bound(age: u32, lifetime: u32) -> f64 {
    let t = lifetime as f64;
    4.0 * t * age as f64 + 2.0 * t * t.sqrt()
}

pub fn match_loss_bound_check(rec: &MatchRecord, lifetime: u32) -> SideCheck {
    SideCheck {
        man: rec.man_loss as f64 <= match_loss_bound(rec.man_age, lifetime),
        woman: rec.woman_loss as f64 <= match_loss_bound(rec.woman_age, lifetime),
    }
}

/// The tighter variant `4·T·age + 2·age·√T`. Recorded for comparison only; it
/// is zero at age 0 and so fails for most young matches.
pub fn age_scaled_loss_bound(age: u32, lifetime: u32) -> f64 {
    let t = lifetime as f64;
    4.0 * t * age as f64 + 2.0 * age as f64 * t.sqrt()
}

pub fn age_scaled_loss_bound_check(rec: &MatchRecord, lifetime: u32) -> SideCheck {
    SideCheck {
        man: rec.man_loss as f64 <= age_scaled_loss_bound(rec.man_age, lifetime),
        woman: rec.woman_loss as f64 <= age_scaled_loss_bound(rec.woman_age, lifetime),
    }
}

/// Outcome of the asymptotic-regime constraints on `(n, T, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub n: f64,
    pub lifetime: f64,
    pub c: f64,
    pub c_ok: bool,
    pub lifetime_ok: bool,
    /// Right-hand side of the lower bound on `n`.
    pub n_rhs: f64,
    pub n_ok: bool,
    pub satisfied: bool,
}

/// `c >= 1`, `T >= 676` and
/// `n >= (3654 + 2436e¹² + 546(e¹² + 1)c)² (3c + 4) T³ (log₂ n)² ln n`.
pub fn constraints_satisfied(n: f64, lifetime: f64, c: f64) -> ConstraintCheck {
    let e12 = 12f64.exp();
    let lead = 3654.0 + 2436.0 * e12 + 546.0 * (e12 + 1.0) * c;
    let n_rhs = lead * lead * (3.0 * c + 4.0) * lifetime.powi(3) * n.log2().powi(2) * n.ln();
    let c_ok = c >= 1.0;
    let lifetime_ok = lifetime >= 676.0;
    let n_ok = n >= n_rhs;
    ConstraintCheck {
        n,
        lifetime,
        c,
        c_ok,
        lifetime_ok,
        n_rhs,
        n_ok,
        satisfied: c_ok && lifetime_ok && n_ok,
    }
}

/// Mean and min–max spread of a per-run statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Half the range as a percentage of the mean.
    pub half_range_pct: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let half_range_pct = if mean != 0.0 {
            (max - min) / 2.0 / mean.abs() * 100.0
        } else {
            0.0
        };
        Some(Spread {
            mean,
            min,
            max,
            half_range_pct,
        })
    }
}

/// Everything a discrete run accumulates besides its time series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAccumulator {
    pub steps: u64,
    /// Sum of the post-entry population over all steps.
    pub population_sum: u64,
    pub loss: LossAccumulator,
    pub tally: HypothesisTally,
    /// Matched agents whose loss was checked against the per-match bound.
    pub sides_checked: u64,
    pub match_bound_violations: u64,
    pub age_scaled_bound_violations: u64,
}

impl RunAccumulator {
    pub fn record_match(&mut self, rec: &MatchRecord, lifetime: u32, check_bound: bool) {
        for d in rec.departures() {
            self.loss.record(&d);
        }
        if check_bound {
            self.sides_checked += 2;
            self.match_bound_violations += match_loss_bound_check(rec, lifetime).failures();
            self.age_scaled_bound_violations +=
                age_scaled_loss_bound_check(rec, lifetime).failures();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseViolations {
    pub clause: Clause,
    pub observed_steps: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    /// Time average of the post-entry population.
    pub avg_population: f64,
    /// Loss per departure, aged-out agents included.
    pub avg_loss_all: Option<f64>,
    /// Loss per matched departure.
    pub avg_loss_matched: Option<f64>,
    pub loss_over_t: Option<f64>,
    pub loss_matched_over_t: Option<f64>,
    /// `avg_population / (n·√T)`.
    pub normalized_population: f64,
    /// `(avg_loss_all / T) / √T`.
    pub normalized_loss: Option<f64>,
    pub departures: u64,
    pub matched_departures: u64,
    pub aged_out_departures: u64,
    pub clause_violations: Vec<ClauseViolations>,
    pub sides_checked: u64,
    pub match_bound_violations: u64,
    pub age_scaled_bound_violations: u64,
}

pub fn summarize(acc: &RunAccumulator, n: usize, lifetime: u32) -> RunSummary {
    let t = lifetime as f64;
    let root = t.sqrt();
    let avg_population = if acc.steps > 0 {
        acc.population_sum as f64 / acc.steps as f64
    } else {
        0.0
    };
    let avg_loss_all = acc.loss.avg_loss_all();
    let avg_loss_matched = acc.loss.avg_loss_matched();
    let scale = n as f64 * root;
    RunSummary {
        steps: acc.steps,
        avg_population,
        avg_loss_all,
        avg_loss_matched,
        loss_over_t: avg_loss_all.map(|l| l / t),
        loss_matched_over_t: avg_loss_matched.map(|l| l / t),
        normalized_population: if scale > 0.0 {
            avg_population / scale
        } else {
            0.0
        },
        normalized_loss: avg_loss_all.map(|l| l / t / root),
        departures: acc.loss.departures,
        matched_departures: acc.loss.matched,
        aged_out_departures: acc.loss.aged_out,
        clause_violations: acc
            .tally
            .clauses
            .iter()
            .map(|c| ClauseViolations {
                clause: c.clause,
                observed_steps: c.observed_steps,
                violations: c.violations(),
            })
            .collect(),
        sides_checked: acc.sides_checked,
        match_bound_violations: acc.match_bound_violations,
        age_scaled_bound_violations: acc.age_scaled_bound_violations,
    }
}
