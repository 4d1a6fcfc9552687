//! Duration triples, scenario sampling and scenario CSV exchange.
//!
//! Triples are derived from a deterministic instance with two exact rational
//! factors: `min = floor(low * d)`, `mode = d`, `max = ceil(high * d)`.
//! Scenarios draw each task independently from a triangular law on
//! `[min, max]` peaking at `mode`, rounded to the nearest integer.

use std::fmt;
use std::io;
use std::str::FromStr;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Triangular};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, TaskId, Time};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UncertaintyError {
    #[error("cannot parse factor `{0}`")]
    BadFactor(String),
    #[error("factors must satisfy low <= 1 <= high (got low = {low}, high = {high})")]
    FactorRange { low: Factor, high: Factor },
    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),
    #[error("scenario csv: {0}")]
    Csv(String),
}

/// Non-negative exact rational used to scale durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor(Ratio<u64>);

impl Factor {
    pub fn new(numer: u64, denom: u64) -> Self {
        Factor(Ratio::new(numer, denom))
    }

    pub fn one() -> Self {
        Factor::new(1, 1)
    }

    pub fn floor_mul(self, d: Time) -> Time {
        (self.0 * d).floor().to_integer()
    }

    pub fn ceil_mul(self, d: Time) -> Time {
        (self.0 * d).ceil().to_integer()
    }
}

/// Exact rendering: a terminating decimal when one exists, `n/d` otherwise.
impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = (*self.0.numer() as u128, *self.0.denom() as u128);
        let Some(k) = (0..=19u32).find(|&k| 10u128.pow(k) % d == 0) else {
            return write!(f, "{n}/{d}");
        };
        let scaled = n * (10u128.pow(k) / d);
        let (int, frac) = (scaled / 10u128.pow(k), scaled % 10u128.pow(k));
        if k == 0 {
            return write!(f, "{int}");
        }
        let frac = format!("{frac:0width$}", width = k as usize);
        write!(f, "{int}.{}", frac.trim_end_matches('0'))
    }
}

/// Parses plain decimals (`1`, `0.85`, `1.3`) or fractions (`13/10`) exactly.
impl FromStr for Factor {
    type Err = UncertaintyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || UncertaintyError::BadFactor(s.to_owned());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Factor::new(n, d));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 18 {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_val: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let denom = 10u64.pow(frac.len() as u32);
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        Ok(Factor::new(numer, denom))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    #[default]
    Triangular,
    Uniform,
}

impl FromStr for DistributionKind {
    type Err = UncertaintyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangular" => Ok(DistributionKind::Triangular),
            "uniform" => Ok(DistributionKind::Uniform),
            other => Err(UncertaintyError::UnknownDistribution(other.to_owned())),
        }
    }
}

/// How duration triples are derived from base durations and how scenarios
/// are drawn from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UncertaintyModel {
    low: Factor,
    high: Factor,
    pub kind: DistributionKind,
}

impl UncertaintyModel {
    pub fn new(
        low: Factor,
        high: Factor,
        kind: DistributionKind,
    ) -> Result<Self, UncertaintyError> {
        if low > Factor::one() || high < Factor::one() {
            return Err(UncertaintyError::FactorRange { low, high });
        }
        Ok(UncertaintyModel { low, high, kind })
    }

    /// Model whose triples collapse to the base duration.
    pub fn deterministic() -> Self {
        UncertaintyModel {
            low: Factor::one(),
            high: Factor::one(),
            kind: DistributionKind::Triangular,
        }
    }

    pub fn low(&self) -> Factor {
        self.low
    }

    pub fn high(&self) -> Factor {
        self.high
    }
}

impl Default for UncertaintyModel {
    /// Factors `(0.85, 1.3)`, triangular law.
    fn default() -> Self {
        UncertaintyModel {
            low: Factor::new(85, 100),
            high: Factor::new(13, 10),
            kind: DistributionKind::Triangular,
        }
    }
}

/// Known statistics of one task's uncertain duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationTriple {
    pub min: Time,
    pub mode: Time,
    pub max: Time,
}

impl DurationTriple {
    pub fn new(min: Time, mode: Time, max: Time) -> Self {
        debug_assert!(min <= mode && mode <= max);
        DurationTriple { min, mode, max }
    }

    pub fn degenerate(d: Time) -> Self {
        DurationTriple::new(d, d, d)
    }

    pub fn is_degenerate(&self) -> bool {
        self.min == self.max
    }
}

/// Applies `model` to every task's base duration.
pub fn derive_triples(instance: &Instance, model: &UncertaintyModel) -> Vec<DurationTriple> {
    instance
        .tasks()
        .iter()
        .map(|task| {
            let d = task.duration;
            DurationTriple::new(model.low.floor_mul(d), d, model.high.ceil_mul(d))
        })
        .collect()
}

/// Triples with `min = mode = max` equal to each base duration.
pub fn degenerate_triples(instance: &Instance) -> Vec<DurationTriple> {
    instance
        .tasks()
        .iter()
        .map(|t| DurationTriple::degenerate(t.duration))
        .collect()
}

/// One joint realization of all task durations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub realized: Vec<Time>,
}

impl Scenario {
    pub fn duration(&self, t: TaskId) -> Time {
        self.realized[t]
    }
}

fn draw<R: Rng + ?Sized>(triple: &DurationTriple, kind: DistributionKind, rng: &mut R) -> Time {
    if triple.is_degenerate() {
        return triple.mode;
    }
    let (lo, hi) = (triple.min as f64, triple.max as f64);
    let x = match kind {
        DistributionKind::Triangular => Triangular::new(lo, hi, triple.mode as f64)
            .expect("triple is ordered")
            .sample(rng),
        DistributionKind::Uniform => rng.random_range(lo..=hi),
    };
    (x.round() as Time).clamp(triple.min, triple.max)
}

/// Triangular draw of every task, fully determined by `seed`.
pub fn sample_scenario(triples: &[DurationTriple], seed: u64) -> Scenario {
    sample_scenario_with(triples, DistributionKind::Triangular, seed)
}

pub fn sample_scenario_with(
    triples: &[DurationTriple],
    kind: DistributionKind,
    seed: u64,
) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = triples.len().saturating_sub(1);
    let realized = triples
        .iter()
        .enumerate()
        .map(|(t, triple)| {
            let d = draw(triple, kind, &mut rng);
            if t == 0 || t == last {
                0
            } else {
                d
            }
        })
        .collect();
    Scenario { seed, realized }
}

/// `n` scenarios seeded `base_seed + i`.
pub fn scenario_batch(triples: &[DurationTriple], base_seed: u64, n: usize) -> Vec<Scenario> {
    scenario_batch_with(triples, DistributionKind::Triangular, base_seed, n)
}

pub fn scenario_batch_with(
    triples: &[DurationTriple],
    kind: DistributionKind,
    base_seed: u64,
    n: usize,
) -> Vec<Scenario> {
    (0..n as u64)
        .map(|i| sample_scenario_with(triples, kind, base_seed.wrapping_add(i)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioRow {
    scenario: usize,
    seed: u64,
    task: TaskId,
    duration: Time,
}

/// Writes one row per (scenario, task): `scenario,seed,task,duration`.
pub fn write_scenarios_csv<W: io::Write>(
    scenarios: &[Scenario],
    out: W,
) -> Result<(), UncertaintyError> {
    let csv_err = |e: csv::Error| UncertaintyError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    for (i, s) in scenarios.iter().enumerate() {
        for (task, &duration) in s.realized.iter().enumerate() {
            w.serialize(ScenarioRow {
                scenario: i,
                seed: s.seed,
                task,
                duration,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| UncertaintyError::Csv(e.to_string()))
}

pub fn read_scenarios_csv<R: io::Read>(input: R) -> Result<Vec<Scenario>, UncertaintyError> {
    let mut out: Vec<Scenario> = Vec::new();
    let mut r = csv::Reader::from_reader(input);
    for (i, row) in r.deserialize::<ScenarioRow>().enumerate() {
        let row = row.map_err(|e| UncertaintyError::Csv(e.to_string()))?;
        if row.scenario == out.len() {
            out.push(Scenario {
                seed: row.seed,
                realized: Vec::new(),
            });
        } else if row.scenario + 1 != out.len() {
            return Err(UncertaintyError::Csv(format!(
                "row {}: scenarios out of order",
                i + 1
            )));
        }
        let s = out.last_mut().expect("pushed above");
        if s.seed != row.seed || row.task != s.realized.len() {
            return Err(UncertaintyError::Csv(format!(
                "row {}: inconsistent seed or task order",
                i + 1
            )));
        }
        s.realized.push(row.duration);
    }
    Ok(out)
}
