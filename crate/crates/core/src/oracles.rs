//! Brute-force oracles on small instances: exhaustive pairing enumeration,
//! closed forms and an exhaustive same-strip loss scan.

use num_rational::Ratio;
use rand::SeedableRng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GridPoint, StripPartition};
use crate::market::{random_pairing, SimRng};
use crate::metrics::match_loss_bound;

pub type Exact = Ratio<i64>;

/// Largest side accepted by [`exact_match_probability`].
pub const MATCH_PROBABILITY_LIMIT: usize = 8;
/// Largest side accepted by [`cylinder_dependence_check`].
pub const CYLINDER_LIMIT: usize = 7;
/// Largest lifetime accepted by [`strip_pair_loss_scan`].
pub const SCAN_LIMIT: u32 = 256;

/// Every pairing that injects the smaller side into the larger one.
#[derive(Debug, Clone)]
pub struct PairingUniverse {
    men: usize,
    women: usize,
    /// For each pairing, the partner of every man (`None` when unpaired).
    pairings: Vec<Vec<Option<usize>>>,
}

impl PairingUniverse {
    pub fn enumerate(men: usize, women: usize) -> Self {
        let k = men.min(women);
        let mut pairings = Vec::new();
        let mut chosen = Vec::with_capacity(k);
        let mut used = vec![false; men.max(women)];
        injections(k, &mut chosen, &mut used, &mut |image| {
            let mut partner = vec![None; men];
            for (small, &large) in image.iter().enumerate() {
                if men <= women {
                    partner[small] = Some(large);
                } else {
                    partner[large] = Some(small);
                }
            }
            pairings.push(partner);
        });
        PairingUniverse {
            men,
            women,
            pairings,
        }
    }

    pub fn men(&self) -> usize {
        self.men
    }

    pub fn women(&self) -> usize {
        self.women
    }

    pub fn len(&self) -> usize {
        self.pairings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairings.is_empty()
    }

    pub fn pairings(&self) -> &[Vec<Option<usize>>] {
        &self.pairings
    }

    /// `max! / (max - min)!`.
    pub fn expected_len(men: usize, women: usize) -> u64 {
        let (hi, lo) = (men.max(women) as u64, men.min(women) as u64);
        ((hi - lo + 1)..=hi).product()
    }

    /// Number of pairings satisfying `pred`.
    pub fn count<F: Fn(&[Option<usize>]) -> bool>(&self, pred: F) -> i64 {
        self.pairings.iter().filter(|p| pred(p)).count() as i64
    }

    pub fn probability<F: Fn(&[Option<usize>]) -> bool>(&self, pred: F) -> Exact {
        Ratio::new(self.count(pred), self.len() as i64)
    }

    /// Exact probability that `man` is paired with `woman`.
    pub fn pair_probability(&self, man: usize, woman: usize) -> Exact {
        self.probability(|p| p[man] == Some(woman))
    }
}

fn injections<F: FnMut(&[usize])>(
    k: usize,
    chosen: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut F,
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            chosen.push(j);
            injections(k, chosen, used, visit);
            chosen.pop();
            used[j] = false;
        }
    }
}

fn refuse_above(limit: usize, men: usize, women: usize) -> Result<()> {
    if men > limit || women > limit {
        return Err(Error::TooLarge(format!(
            "enumeration limited to sides of at most {limit}, got {men}x{women}"
        )));
    }
    Ok(())
}

/// Probability that man 0 ends up paired with one of the first
/// `acceptable` women, all of whom accept him.
pub fn exact_match_probability(men: usize, women: usize, acceptable: usize) -> Result<Exact> {
    refuse_above(MATCH_PROBABILITY_LIMIT, men, women)?;
    if men == 0 {
        return Err(Error::invalid("need at least one man"));
    }
    if acceptable > women {
        return Err(Error::invalid(format!(
            "acceptable count {acceptable} exceeds {women} women"
        )));
    }
    let universe = PairingUniverse::enumerate(men, women);
    Ok(universe.probability(|p| matches!(p[0], Some(j) if j < acceptable)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderReport {
    pub e_prod: Exact,
    pub prod_e: Exact,
    pub e_prod_complement: Exact,
    pub prod_e_complement: Exact,
    pub ok_x: bool,
    pub ok_complement: bool,
}

impl CylinderReport {
    pub fn ok(&self) -> bool {
        self.ok_x && self.ok_complement
    }
}

/// `X_i` indicates that man `i` of `men_subset` is paired into
/// `women_subset`. Compares `E[∏X]` with `∏E[X]`, and likewise for `1 - X`.
pub fn cylinder_dependence_check(
    men: usize,
    women: usize,
    men_subset: &[usize],
    women_subset: &[usize],
) -> Result<CylinderReport> {
    refuse_above(CYLINDER_LIMIT, men, women)?;
    if let Some(&i) = men_subset.iter().find(|&&i| i >= men) {
        return Err(Error::invalid(format!("man {i} out of range")));
    }
    if let Some(&j) = women_subset.iter().find(|&&j| j >= women) {
        return Err(Error::invalid(format!("woman {j} out of range")));
    }
    let universe = PairingUniverse::enumerate(men, women);
    let hit = |p: &[Option<usize>], i: usize| matches!(p[i], Some(j) if women_subset.contains(&j));

    let e_prod = universe.probability(|p| men_subset.iter().all(|&i| hit(p, i)));
    let e_prod_complement = universe.probability(|p| men_subset.iter().all(|&i| !hit(p, i)));
    let mut prod_e = Ratio::from_integer(1);
    let mut prod_e_complement = Ratio::from_integer(1);
    for &i in men_subset {
        let e = universe.probability(|p| hit(p, i));
        prod_e *= e;
        prod_e_complement *= Ratio::from_integer(1) - e;
    }
    Ok(CylinderReport {
        ok_x: e_prod <= prod_e,
        ok_complement: e_prod_complement <= prod_e_complement,
        e_prod,
        prod_e,
        e_prod_complement,
        prod_e_complement,
    })
}

/// `T·E[(V1 - V2)+]` for independent uniform values on `T` consecutive
/// integers, i.e. `(T² - 1) / 6`.
pub fn acceptall_expected_loss(lifetime: u32) -> Exact {
    let t = lifetime as i64;
    Ratio::new(t * t - 1, 6)
}

/// The same quantity summed over all `T²` value pairs.
pub fn acceptall_expected_loss_enumerated(lifetime: u32) -> Exact {
    let t = lifetime as i64;
    let mut total = 0i64;
    for a in 0..t {
        for b in 0..a {
            total += a - b;
        }
    }
    Ratio::new(t * total, t * t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub lifetime: u32,
    pub pairs: u64,
    pub violations: u64,
    /// Smallest `bound - loss` seen.
    pub worst_margin: f64,
    pub worst_pair: Option<(GridPoint, GridPoint)>,
}

/// Every ordered pair of grid points sharing a strip, matched hypothetically;
/// checks the first point's loss against `4·T·age + 2·T·√T`.
pub fn strip_pair_loss_scan(lifetime: u32) -> Result<ScanReport> {
    if lifetime > SCAN_LIMIT {
        return Err(Error::TooLarge(format!(
            "scan limited to T <= {SCAN_LIMIT}, got {lifetime}"
        )));
    }
    let part = StripPartition::build(lifetime)?;
    let t = lifetime;
    let mut by_strip: Vec<Vec<GridPoint>> = vec![Vec::new(); part.strip_count()];
    for value in t..2 * t {
        for age in 0..t {
            by_strip[part.slot_of(value, age)].push(GridPoint { value, age });
        }
    }

    let bounds: Vec<f64> = (0..t).map(|a| match_loss_bound(a, t)).collect();
    let mut report = ScanReport {
        lifetime,
        pairs: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_pair: None,
    };
    for points in &by_strip {
        for &p in points {
            let ideal = p.value as i64 * t as i64;
            for &q in points {
                let remaining = (t - p.age.max(q.age)) as i64;
                let loss = (ideal - q.value as i64 * remaining).max(0);
                let margin = bounds[p.age as usize] - loss as f64;
                report.pairs += 1;
                if margin < 0.0 {
                    report.violations += 1;
                }
                if margin < report.worst_margin {
                    report.worst_margin = margin;
                    report.worst_pair = Some((p, q));
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub men: usize,
    pub women: usize,
    pub samples: u64,
    /// Largest `|observed - expected| / σ` over all man-woman cells.
    pub max_z: f64,
}

/// Samples the engine's pairing routine and compares each man-woman cell
/// frequency with the enumerated probability.
pub fn pairing_frequency_check(
    men: usize,
    women: usize,
    samples: u64,
    seed: u64,
) -> Result<FrequencyReport> {
    refuse_above(MATCH_PROBABILITY_LIMIT, men, women)?;
    let universe = PairingUniverse::enumerate(men, women);
    let mut counts = vec![0u64; men * women];
    let mut rng = SimRng::seed_from_u64(seed);
    for _ in 0..samples {
        for (i, j) in random_pairing(men, women, &mut rng) {
            counts[i * women + j] += 1;
        }
    }
    let n = samples as f64;
    let mut max_z: f64 = 0.0;
    for i in 0..men {
        for j in 0..women {
            let p = universe.pair_probability(i, j);
            let p = *p.numer() as f64 / *p.denom() as f64;
            let sigma = (n * p * (1.0 - p)).sqrt();
            let dev = (counts[i * women + j] as f64 - n * p).abs();
            let z = if sigma > 0.0 {
                dev / sigma
            } else if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            max_z = max_z.max(z);
        }
    }
    Ok(FrequencyReport {
        men,
        women,
        samples,
        max_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: String) -> OracleOutcome {
    OracleOutcome {
        name: name.to_owned(),
        passed,
        detail,
    }
}

/// `w'/max(m, w)` against enumeration for every `m, w <= max_side`.
pub fn match_probability_sweep(max_side: usize) -> Result<OracleOutcome> {
    let mut cases = 0;
    let mut failures = Vec::new();
    for m in 1..=max_side {
        for w in 0..=max_side {
            for acc in 0..=w {
                cases += 1;
                let got = exact_match_probability(m, w, acc)?;
                let want = Ratio::new(acc as i64, m.max(w) as i64);
                if got != want {
                    failures.push(format!("({m},{w},{acc}): {got} != {want}"));
                }
            }
        }
    }
    Ok(outcome(
        "match-probability",
        failures.is_empty(),
        format!("{cases} cases, {} mismatches {failures:?}", failures.len()),
    ))
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..1 << n).map(move |mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
}

/// Negative cylinder dependence for every pair of subsets, `m, w <= max_side`.
pub fn cylinder_sweep(max_side: usize) -> Result<OracleOutcome> {
    let mut cases = 0;
    let mut failures = Vec::new();
    for m in 1..=max_side {
        for w in 1..=max_side {
            for sa in subsets(m) {
                for sb in subsets(w) {
                    cases += 1;
                    if !cylinder_dependence_check(m, w, &sa, &sb)?.ok() {
                        failures.push(format!("m={m} w={w} {sa:?} {sb:?}"));
                    }
                }
            }
        }
    }
    Ok(outcome(
        "cylinder-dependence",
        failures.is_empty(),
        format!(
            "{cases} subset pairs, {} failures {failures:?}",
            failures.len()
        ),
    ))
}

pub fn acceptall_loss_sweep(max_lifetime: u32) -> OracleOutcome {
    let bad: Vec<u32> = (1..=max_lifetime)
        .filter(|&t| acceptall_expected_loss(t) != acceptall_expected_loss_enumerated(t))
        .collect();
    outcome(
        "acceptall-closed-form",
        bad.is_empty(),
        format!("T in 1..={max_lifetime}, mismatches at {bad:?}"),
    )
}

pub fn strip_scan_outcome(lifetime: u32) -> Result<OracleOutcome> {
    let r = strip_pair_loss_scan(lifetime)?;
    Ok(outcome(
        &format!("strip-pair-loss T={lifetime}"),
        r.violations == 0,
        format!(
            "{} pairs, {} violations, worst margin {:.1}",
            r.pairs, r.violations, r.worst_margin
        ),
    ))
}

/// Sizes and seed used by the engine frequency cross-check.
pub const FREQUENCY_CASES: [(usize, usize); 4] = [(3, 5), (5, 3), (4, 4), (1, 6)];
pub const FREQUENCY_SAMPLES: u64 = 100_000;

pub fn frequency_outcome(seed: u64) -> Result<OracleOutcome> {
    let mut worst: f64 = 0.0;
    for &(m, w) in &FREQUENCY_CASES {
        worst = worst.max(pairing_frequency_check(m, w, FREQUENCY_SAMPLES, seed)?.max_z);
    }
    Ok(outcome(
        "engine-pairing-frequencies",
        worst <= 3.0,
        format!("{FREQUENCY_SAMPLES} samples per case, max |z| = {worst:.3}"),
    ))
}

/// Everything `verify` runs.
pub fn verify_all() -> Result<Vec<OracleOutcome>> {
    Ok(vec![
        match_probability_sweep(6)?,
        cylinder_sweep(4)?,
        acceptall_loss_sweep(100),
        strip_scan_outcome(16)?,
        strip_scan_outcome(100)?,
        frequency_outcome(1)?,
    ])
}
