//! CSV and JSON emitters. Formatting is fixed so that the same run always
//! produces byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::continuum::ContinuumSummary;
use crate::error::{Error, Result};
use crate::geometry::{StripKind, StripPartition};
use crate::metrics::{constraints_satisfied, Clause, ConstraintCheck, HypothesisTally, Spread};
use crate::simulation::{RunResult, StepRow};

pub const TIMESERIES_HEADER: &str = "step,population,men,women,entrants,matches,aged_out,cum_loss,avg_loss_all,avg_loss_matched,diag_population";
pub const CONTINUUM_HEADER: &str = "step,population,avg_loss_all";
pub const SWEEP_HEADER: &str = "n,T,runs,avg_population,population_spread_pct,loss_over_t,loss_spread_pct,loss_matched_over_t,normalized_population,normalized_loss";
pub const PARTITION_HEADER: &str = "slot,strip,kind,index,diag_lo,diag_hi,height";

const DECIMALS: usize = 6;

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.DECIMALS$}")).unwrap_or_default()
}

pub fn timeseries_csv(series: &[StepRow]) -> String {
    let mut out = String::with_capacity(64 * (series.len() + 1));
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for r in series {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.population,
            r.men,
            r.women,
            r.entrants,
            r.matches,
            r.aged_out,
            r.cum_loss,
            cell(r.avg_loss_all),
            cell(r.avg_loss_matched),
            r.diag_population,
        );
    }
    out
}

/// Both genders share one grid, so only the total is written.
pub fn continuum_csv(summary: &ContinuumSummary) -> String {
    let mut out = String::new();
    out.push_str(CONTINUUM_HEADER);
    out.push('\n');
    for (step, (pop, loss)) in summary
        .population
        .iter()
        .zip(&summary.avg_loss_series)
        .enumerate()
    {
        let _ = writeln!(out, "{step},{pop:.DECIMALS$},{}", cell(*loss));
    }
    out
}

pub fn partition_csv(part: &StripPartition) -> String {
    let mut out = String::new();
    out.push_str(PARTITION_HEADER);
    out.push('\n');
    for (slot, strip) in part.strips().enumerate() {
        let (lo, hi) = part.diag_range(strip);
        let kind = match strip.kind {
            StripKind::Type1 => "type1",
            StripKind::Type2 => "type2",
        };
        let _ = writeln!(
            out,
            "{slot},{strip},{kind},{},{lo},{hi},{}",
            strip.index,
            part.max_height(strip)
        );
    }
    out
}

/// One discrete run, as listed in a batch summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub seed: u64,
    pub avg_population: f64,
    pub avg_loss_all: Option<f64>,
    pub avg_loss_matched: Option<f64>,
    pub loss_over_t: Option<f64>,
    pub loss_matched_over_t: Option<f64>,
    pub departures: u64,
    pub match_bound_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseSummary {
    pub clause: &'static str,
    pub exempt: bool,
    pub observed_steps: u64,
    pub satisfied_steps: u64,
    pub satisfied_fraction: Option<f64>,
    pub min_margin: Option<f64>,
    pub mean_margin: Option<f64>,
    pub max_margin: Option<f64>,
}

fn clause_summaries(tally: &HypothesisTally) -> Vec<ClauseSummary> {
    Clause::ALL
        .iter()
        .map(|&c| {
            let t = tally.get(c);
            let seen = t.observed_steps > 0;
            ClauseSummary {
                clause: c.id(),
                exempt: c == Clause::Imbalance,
                observed_steps: t.observed_steps,
                satisfied_steps: t.satisfied_steps,
                satisfied_fraction: t.satisfied_fraction(),
                min_margin: seen.then_some(t.min_margin),
                mean_margin: t.mean_margin(),
                max_margin: seen.then_some(t.max_margin),
            }
        })
        .collect()
}

/// Summary of a multi-seed discrete batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRow>,
    pub population: Spread,
    pub loss_over_t: Option<Spread>,
    pub loss_matched_over_t: Option<Spread>,
    pub normalized_population: f64,
    pub normalized_loss: Option<f64>,
    /// Clause tallies pooled over all runs.
    pub bounds: Vec<ClauseSummary>,
    pub sides_checked: u64,
    pub match_bound_violations: u64,
    pub age_scaled_bound_violations: u64,
    pub constraints: ConstraintCheck,
}

fn spread_of(values: impl Iterator<Item = Option<f64>>) -> Option<Spread> {
    let v: Option<Vec<f64>> = values.collect();
    v.and_then(|v| Spread::of(&v))
}

pub fn batch_summary(config: &RunConfig, results: &[RunResult]) -> Result<BatchSummary> {
    if results.is_empty() {
        return Err(Error::invalid("summary needs at least one run"));
    }
    let runs: Vec<RunRow> = results
        .iter()
        .map(|r| RunRow {
            seed: r.seed,
            avg_population: r.summary.avg_population,
            avg_loss_all: r.summary.avg_loss_all,
            avg_loss_matched: r.summary.avg_loss_matched,
            loss_over_t: r.summary.loss_over_t,
            loss_matched_over_t: r.summary.loss_matched_over_t,
            departures: r.summary.departures,
            match_bound_violations: r.summary.match_bound_violations,
        })
        .collect();

    let mut tally = HypothesisTally::default();
    for r in results {
        for (pooled, t) in tally.clauses.iter_mut().zip(&r.tally.clauses) {
            pooled.observed_steps += t.observed_steps;
            pooled.satisfied_steps += t.satisfied_steps;
            pooled.margin_sum += t.margin_sum;
            pooled.min_margin = pooled.min_margin.min(t.min_margin);
            pooled.max_margin = pooled.max_margin.max(t.max_margin);
        }
    }

    let pops: Vec<f64> = runs.iter().map(|r| r.avg_population).collect();
    let population = Spread::of(&pops).expect("non-empty");
    let loss_over_t = spread_of(runs.iter().map(|r| r.loss_over_t));
    let t = config.lifetime as f64;
    let scale = config.n as f64 * t.sqrt();
    Ok(BatchSummary {
        config: config.clone(),
        seeds: results.iter().map(|r| r.seed).collect(),
        normalized_population: if scale > 0.0 {
            population.mean / scale
        } else {
            0.0
        },
        normalized_loss: loss_over_t.map(|s| s.mean / t.sqrt()),
        population,
        loss_over_t,
        loss_matched_over_t: spread_of(runs.iter().map(|r| r.loss_matched_over_t)),
        bounds: clause_summaries(&tally),
        sides_checked: results.iter().map(|r| r.summary.sides_checked).sum(),
        match_bound_violations: results
            .iter()
            .map(|r| r.summary.match_bound_violations)
            .sum(),
        age_scaled_bound_violations: results
            .iter()
            .map(|r| r.summary.age_scaled_bound_violations)
            .sum(),
        constraints: constraints_satisfied(config.n as f64, t, 1.0),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuumReport<'a> {
    pub config: &'a RunConfig,
    pub summary: &'a ContinuumSummary,
    pub constraints: ConstraintCheck,
}

impl<'a> ContinuumReport<'a> {
    pub fn new(config: &'a RunConfig, summary: &'a ContinuumSummary) -> Self {
        ContinuumReport {
            config,
            summary,
            constraints: constraints_satisfied(config.n as f64, config.lifetime as f64, 1.0),
        }
    }
}

/// One `(n, T)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    #[serde(rename = "T")]
    pub lifetime: u32,
    pub runs: usize,
    pub population: Spread,
    pub loss_over_t: Option<Spread>,
    pub loss_matched_over_t: Option<Spread>,
    /// `population / (n·√T)`.
    pub normalized_population: f64,
    /// `(loss / T) / √T`.
    pub normalized_loss: Option<f64>,
}

impl From<&BatchSummary> for SweepRow {
    fn from(b: &BatchSummary) -> Self {
        SweepRow {
            n: b.config.n,
            lifetime: b.config.lifetime,
            runs: b.runs.len(),
            population: b.population,
            loss_over_t: b.loss_over_t,
            loss_matched_over_t: b.loss_matched_over_t,
            normalized_population: b.normalized_population,
            normalized_loss: b.normalized_loss,
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.DECIMALS$},{:.DECIMALS$},{},{},{},{:.DECIMALS$},{}",
            r.n,
            r.lifetime,
            r.runs,
            r.population.mean,
            r.population.half_range_pct,
            cell(r.loss_over_t.map(|s| s.mean)),
            cell(r.loss_over_t.map(|s| s.half_range_pct)),
            cell(r.loss_matched_over_t.map(|s| s.mean)),
            r.normalized_population,
            cell(r.normalized_loss),
        );
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
