//! Full discrete runs: drives a [`Market`] for a fixed horizon and folds every
//! step into a time series and a [`RunSummary`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::StripPartition;
use crate::market::{Market, StepReport};
use crate::metrics::{
    diagonal_census, hypothesis_report, strip_census, summarize, CensusRow, HypothesisTally,
    RunAccumulator, RunSummary,
};
use crate::strategy::StrategyKind;

/// One row of the emitted time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    /// Post-entry population.
    pub population: usize,
    pub men: usize,
    pub women: usize,
    pub entrants: usize,
    pub matches: usize,
    pub aged_out: usize,
    pub cum_loss: u64,
    pub avg_loss_all: Option<f64>,
    pub avg_loss_matched: Option<f64>,
    pub diag_population: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub series: Vec<StepRow>,
    pub summary: RunSummary,
    pub tally: HypothesisTally,
}

/// First step at which the bound clauses are tallied (`t >= √T`).
pub fn observation_start(lifetime: u32) -> u64 {
    StripPartition::build(lifetime)
        .map(|p| p.width() as u64)
        .unwrap_or(0)
}

/// Runs `config` with `config.seed`.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    run_seed(config, config.seed)
}

pub fn run_seed(config: &RunConfig, seed: u64) -> Result<RunResult> {
    run_with(config, seed, |_, _| {})
}

/// Like [`run_seed`], additionally handing every step report and its
/// post-entry census to `on_step`.
pub fn run_with<F>(config: &RunConfig, seed: u64, mut on_step: F) -> Result<RunResult>
where
    F: FnMut(&StepReport, &[CensusRow]),
{
    config.validate()?;
    let params = config.market_params();
    let lifetime = params.lifetime;
    let mut market = Market::new(params, seed)?;
    let part = market.partition().expect("T >= 4 has a partition").clone();
    let check_bound = params.strategy == StrategyKind::ModifiedReasonable;
    let observe_from = observation_start(lifetime);

    let mut acc = RunAccumulator::default();
    let mut series = Vec::with_capacity(config.steps as usize);
    let mut census = Vec::new();
    let mut diag_population = 0;

    for _ in 0..config.steps {
        let report = market.step_observed(|m| {
            let step = m.step_count();
            census = strip_census(step, m.agents(), &part);
            diag_population = diagonal_census(m.agents(), lifetime);
            if step >= observe_from {
                let bounds = hypothesis_report(&census, m.population(), params.n, &part);
                acc.tally.record(&bounds);
            }
        });

        acc.steps += 1;
        acc.population_sum += report.population_after_entry as u64;
        for rec in &report.matches {
            acc.record_match(rec, lifetime, check_bound);
        }
        for rec in &report.aged_out {
            acc.loss.record(rec);
        }
        on_step(&report, &census);

        series.push(StepRow {
            step: report.step,
            population: report.population_after_entry,
            men: report.men_after_entry,
            women: report.women_after_entry,
            entrants: report.entrants,
            matches: report.matches.len(),
            aged_out: report.aged_out.len(),
            cum_loss: acc.loss.loss_all,
            avg_loss_all: acc.loss.avg_loss_all(),
            avg_loss_matched: acc.loss.avg_loss_matched(),
            diag_population,
        });
    }

    let summary = summarize(&acc, params.n, lifetime);
    Ok(RunResult {
        seed,
        series,
        summary,
        tally: acc.tally,
    })
}

/// All `config.runs` repetitions, run in parallel, returned in seed order.
pub fn run_batch(config: &RunConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    config
        .seeds()
        .into_par_iter()
        .map(|seed| run_seed(config, seed))
        .collect()
}
