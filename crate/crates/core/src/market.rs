//! Discrete matching pool.
//!
//! One call to [`Market::step`] runs, in order: entry of `n` agents, the
//! observation point (population and censuses), a uniformly random pairing of
//! all men with all women, mutual-accept matching, aging, and expulsion of
//! agents that reach age `T`. Entrants can match in the step they arrive.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::StripPartition;
use crate::metrics::{DepartureCause, DepartureRecord};
use crate::strategy::{
    match_utility, mutually_accept, reasonable_accepts, AgentView, StrategyKind,
};

/// Simulation RNG: ChaCha with 8 rounds, a counter-based generator whose
/// output stream is identical on every platform for a given seed.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Man,
    Woman,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    pub gender: Gender,
    pub value: u32,
    pub entry_step: u64,
    pub age: u32,
}

impl Agent {
    pub fn view(&self) -> AgentView {
        AgentView::new(self.value, self.age)
    }
}

/// `n` fresh agents with fair-coin genders and values uniform on `{T, …, 2T−1}`.
/// Ids are taken sequentially from `next_id`.
pub fn spawn_entrants<R: Rng>(
    n: usize,
    lifetime: u32,
    step: u64,
    next_id: &mut u64,
    rng: &mut R,
) -> Vec<Agent> {
    (0..n)
        .map(|_| {
            let gender = if rng.random::<bool>() {
                Gender::Man
            } else {
                Gender::Woman
            };
            let value = rng.random_range(lifetime..2 * lifetime);
            let id = *next_id;
            *next_id += 1;
            Agent {
                id,
                gender,
                value,
                entry_step: step,
                age: 0,
            }
        })
        .collect()
}

/// Uniform random pairing between two sides, returned as `(man, woman)` index
/// pairs. Both sides are shuffled (Fisher–Yates) and zipped, so the injection
/// from the smaller side into the larger one is uniform.
pub fn random_pairing<R: Rng>(men: usize, women: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut m: Vec<usize> = (0..men).collect();
    let mut w: Vec<usize> = (0..women).collect();
    m.shuffle(rng);
    w.shuffle(rng);
    m.into_iter().zip(w).collect()
}

/// A completed match, seen from both sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub step: u64,
    pub man_value: u32,
    pub woman_value: u32,
    pub man_age: u32,
    pub woman_age: u32,
    pub man_utility: u64,
    pub woman_utility: u64,
    pub man_loss: u64,
    pub woman_loss: u64,
}

impl MatchRecord {
    pub fn new(step: u64, man: AgentView, woman: AgentView, lifetime: u32) -> Self {
        let man_utility = match_utility(man, woman, lifetime);
        let woman_utility = match_utility(woman, man, lifetime);
        let t = lifetime as u64;
        MatchRecord {
            step,
            man_value: man.value,
            woman_value: woman.value,
            man_age: man.age,
            woman_age: woman.age,
            man_utility,
            woman_utility,
            man_loss: (man.value as u64 * t).saturating_sub(man_utility),
            woman_loss: (woman.value as u64 * t).saturating_sub(woman_utility),
        }
    }

    /// The two departures this match causes, man first.
    pub fn departures(&self) -> [DepartureRecord; 2] {
        [
            DepartureRecord {
                value: self.man_value,
                age_at_departure: self.man_age,
                utility: self.man_utility,
                loss: self.man_loss,
                cause: DepartureCause::Matched,
            },
            DepartureRecord {
                value: self.woman_value,
                age_at_departure: self.woman_age,
                utility: self.woman_utility,
                loss: self.woman_loss,
                cause: DepartureCause::Matched,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub entrants: usize,
    pub population_after_entry: usize,
    pub men_after_entry: usize,
    pub women_after_entry: usize,
    pub proposed_pairs: usize,
    pub matches: Vec<MatchRecord>,
    pub aged_out: Vec<DepartureRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Entrants per step.
    pub n: usize,
    pub lifetime: u32,
    pub strategy: StrategyKind,
}

/// Pool state. Both sides are kept in ascending id order.
#[derive(Debug, Clone)]
pub struct Market {
    params: MarketParams,
    partition: Option<StripPartition>,
    step: u64,
    next_id: u64,
    men: Vec<Agent>,
    women: Vec<Agent>,
    rng: SimRng,
}

impl Market {
    /// Lifetimes below 4 have no strip partition; they are accepted for the
    /// strategies that do not need one.
    pub fn new(params: MarketParams, seed: u64) -> Result<Self> {
        if params.lifetime == 0 {
            return Err(Error::invalid("lifetime must be positive"));
        }
        let partition = if params.lifetime >= 4 {
            Some(StripPartition::build(params.lifetime)?)
        } else if params.strategy == StrategyKind::ModifiedReasonable {
            return Err(Error::invalid(format!(
                "modified strategy needs T >= 4, got {}",
                params.lifetime
            )));
        } else {
            None
        };
        Ok(Self::build(params, partition, seed))
    }

    /// Uses a prebuilt partition; it must have been built for `params.lifetime`.
    pub fn with_partition(params: MarketParams, partition: StripPartition, seed: u64) -> Self {
        assert_eq!(partition.lifetime(), params.lifetime);
        Self::build(params, Some(partition), seed)
    }

    fn build(params: MarketParams, partition: Option<StripPartition>, seed: u64) -> Self {
        Market {
            params,
            partition,
            step: 0,
            next_id: 0,
            men: Vec::new(),
            women: Vec::new(),
            rng: seeded_rng(seed),
        }
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    /// Present whenever `T >= 4`.
    pub fn partition(&self) -> Option<&StripPartition> {
        self.partition.as_ref()
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn men(&self) -> &[Agent] {
        &self.men
    }

    pub fn women(&self) -> &[Agent] {
        &self.women
    }

    pub fn population(&self) -> usize {
        self.men.len() + self.women.len()
    }

    pub fn agents(&self) -> impl Iterator<Item = &Agent> + '_ {
        self.men.iter().chain(self.women.iter())
    }

    pub fn step(&mut self) -> StepReport {
        self.step_observed(|_| {})
    }

    /// Advances one step, calling `observe` once at the observation point
    /// (after entry, before pairing).
    pub fn step_observed<F: FnOnce(&Market)>(&mut self, observe: F) -> StepReport {
        let MarketParams {
            n,
            lifetime,
            strategy,
        } = self.params;
        let step = self.step;

        let entrants = spawn_entrants(n, lifetime, step, &mut self.next_id, &mut self.rng);
        for a in entrants {
            match a.gender {
                Gender::Man => self.men.push(a),
                Gender::Woman => self.women.push(a),
            }
        }

        let men_after_entry = self.men.len();
        let women_after_entry = self.women.len();
        observe(self);

        let pairs = random_pairing(self.men.len(), self.women.len(), &mut self.rng);
        let proposed_pairs = pairs.len();
        let mut man_gone = vec![false; self.men.len()];
        let mut woman_gone = vec![false; self.women.len()];
        let mut matches = Vec::new();
        for (mi, wi) in pairs {
            let man = self.men[mi].view();
            let woman = self.women[wi].view();
            if self.mutual(strategy, man, woman) {
                man_gone[mi] = true;
                woman_gone[wi] = true;
                matches.push(MatchRecord::new(step, man, woman, lifetime));
            }
        }

        let mut aged_out = Vec::new();
        age_side(&mut self.men, &man_gone, lifetime, &mut aged_out);
        age_side(&mut self.women, &woman_gone, lifetime, &mut aged_out);

        self.step += 1;
        StepReport {
            step,
            entrants: n,
            population_after_entry: men_after_entry + women_after_entry,
            men_after_entry,
            women_after_entry,
            proposed_pairs,
            matches,
            aged_out,
        }
    }

    #[inline]
    fn mutual(&self, strategy: StrategyKind, a: AgentView, b: AgentView) -> bool {
        match (&self.partition, strategy) {
            (Some(part), _) => mutually_accept(strategy, a, b, part),
            (None, StrategyKind::AcceptAll) => true,
            (None, StrategyKind::Reasonable) => {
                let t = self.params.lifetime;
                reasonable_accepts(a, b, t) && reasonable_accepts(b, a, t)
            }
            (None, StrategyKind::ModifiedReasonable) => unreachable!("rejected in Market::new"),
        }
    }
}

/// Drops matched agents, ages the rest and expels those reaching `lifetime`.
fn age_side(side: &mut Vec<Agent>, gone: &[bool], lifetime: u32, out: &mut Vec<DepartureRecord>) {
    let mut idx = 0;
    side.retain_mut(|a| {
        let matched = gone[idx];
        idx += 1;
        if matched {
            return false;
        }
        a.age += 1;
        if a.age >= lifetime {
            out.push(DepartureRecord::aged_out(a.value, lifetime));
            false
        } else {
            true
        }
    });
}
