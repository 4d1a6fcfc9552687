//! Dataset-scale evaluation over sampled scenarios.
//!
//! Every (instance, method) pair builds one priority list, either by a rule
//! rollout on mode durations or from a list file, and executes it under the
//! same batch of sampled scenarios. Results are written as two CSV files:
//!
//! * per scenario: `instance,method,scenario,seed,makespan,solved`
//!   (`makespan` is empty when the cell is unsolved);
//! * aggregate per method:
//!   `method,instances,cells,solved,mean_makespan,mean_gap,coverage`, where
//!   `mean_makespan` averages every solved cell, `mean_gap` averages the
//!   per-instance gaps of the instance means against the best-known values,
//!   and `coverage` is the percentage of solved cells.
//!
//! Wall times are logged but kept out of both files so that equal seeds give
//! equal bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, Time};
use crate::ssgs::{execute_list, rule_rollout, PriorityList, Rule};
use crate::uncertainty::{derive_triples, scenario_batch_with, UncertaintyModel};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("gap needs a positive solution value, got {0}")]
    NonPositiveSolution(f64),
    #[error("unknown method `{0}` (expected spt, lpt, mis, grpw or list:<path>)")]
    UnknownMethod(String),
    #[error("best-known value {best} of `{instance}` is below its lower bound {bound}")]
    BestBelowBound {
        instance: String,
        best: f64,
        bound: Time,
    },
    #[error("best-known file: {0}")]
    BestFile(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `100 (sol - best) / sol`.
pub fn gap(sol: f64, best: f64) -> Result<f64, BenchError> {
    if sol.is_nan() || sol <= 0.0 {
        return Err(BenchError::NonPositiveSolution(sol));
    }
    Ok(100.0 * (sol - best) / sol)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Rule(Rule),
    /// One list file for every instance, or a directory of `<id>.list` files.
    List(PathBuf),
}

impl Method {
    pub fn id(&self) -> String {
        match self {
            Method::Rule(r) => r.name().to_owned(),
            Method::List(p) => format!("list:{}", p.display()),
        }
    }

    fn list_path(&self, instance_id: &str) -> Option<PathBuf> {
        match self {
            Method::Rule(_) => None,
            Method::List(p) if p.is_dir() => Some(p.join(format!("{instance_id}.list"))),
            Method::List(p) => Some(p.clone()),
        }
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("list:") {
            if path.is_empty() {
                return Err(BenchError::UnknownMethod(s.to_owned()));
            }
            return Ok(Method::List(PathBuf::from(path)));
        }
        s.parse::<Rule>()
            .map(Method::Rule)
            .map_err(|_| BenchError::UnknownMethod(s.to_owned()))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<Vec<Method>, BenchError> {
    s.split(',')
        .filter(|m| !m.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub count: usize,
    pub base_seed: u64,
    pub model: UncertaintyModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            count: 100,
            base_seed: 0,
            model: UncertaintyModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub instance: String,
    pub method: String,
    pub scenario: usize,
    pub seed: u64,
    pub makespan: Option<Time>,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub instance: String,
    pub method: String,
    /// One entry per scenario; `None` when unsolved.
    pub makespans: Vec<Option<Time>>,
    pub wall_time: Duration,
}

impl EvalRecord {
    pub fn solved(&self) -> usize {
        self.makespans.iter().flatten().count()
    }

    /// Mean over solved scenarios.
    pub fn mean_makespan(&self) -> Option<f64> {
        mean(self.makespans.iter().flatten().copied())
    }
}

fn mean(values: impl Iterator<Item = Time>) -> Option<f64> {
    let (sum, n) = values.fold((0u128, 0u64), |(s, n), v| (s + v as u128, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<EvalRecord>,
    pub rows: Vec<ScenarioRow>,
}

fn method_list(
    method: &Method,
    id: &str,
    instance: &Instance,
    mode: &[Time],
) -> Result<PriorityList, String> {
    match method {
        Method::Rule(rule) => {
            let triples = derive_triples(instance, &UncertaintyModel::deterministic());
            rule_rollout(*rule, instance, &triples, mode)
                .map(|(list, _)| list)
                .map_err(|e| e.to_string())
        }
        Method::List(_) => {
            let path = method.list_path(id).expect("list method");
            let file = File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            PriorityList::read(instance, BufReader::new(file))
                .map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

/// Runs every method on every instance under the same scenario batch per
/// instance. A method that cannot produce a list leaves its cells unsolved.
pub fn evaluate(
    instances: &[(String, Arc<Instance>)],
    methods: &[Method],
    config: &ScenarioConfig,
) -> Evaluation {
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (id, instance) in instances {
        let triples = derive_triples(instance, &config.model);
        let mode: Vec<Time> = triples.iter().map(|t| t.mode).collect();
        let scenarios =
            scenario_batch_with(&triples, config.model.kind, config.base_seed, config.count);
        for method in methods {
            let started = Instant::now();
            let list = method_list(method, id, instance, &mode);
            if let Err(e) = &list {
                log::warn!("{id} / {}: {e}", method.id());
            }
            let makespans: Vec<Option<Time>> = scenarios
                .iter()
                .map(|s| {
                    let list = list.as_ref().ok()?;
                    execute_list(instance, list, &s.realized)
                        .ok()
                        .map(|sch| sch.makespan)
                })
                .collect();
            let record = EvalRecord {
                instance: id.clone(),
                method: method.id(),
                makespans,
                wall_time: started.elapsed(),
            };
            log::debug!("{id} / {}: {:?}", record.method, record.wall_time);
            for (i, (s, m)) in scenarios.iter().zip(&record.makespans).enumerate() {
                rows.push(ScenarioRow {
                    instance: id.clone(),
                    method: record.method.clone(),
                    scenario: i,
                    seed: s.seed,
                    makespan: *m,
                    solved: m.is_some(),
                });
            }
            records.push(record);
        }
    }
    Evaluation { records, rows }
}

/// Best-known makespan (or mean makespan) per instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BestKnown(pub BTreeMap<String, f64>);

#[derive(Debug, Serialize, Deserialize)]
struct BestRow {
    instance: String,
    best: f64,
}

impl BestKnown {
    /// Reads an `instance,best` CSV.
    pub fn read<R: io::Read>(input: R) -> Result<Self, BenchError> {
        let mut map = BTreeMap::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let row: BestRow = row?;
            if map.insert(row.instance.clone(), row.best).is_some() {
                return Err(BenchError::BestFile(format!(
                    "duplicate instance `{}`",
                    row.instance
                )));
            }
        }
        Ok(BestKnown(map))
    }

    pub fn read_path(path: &Path) -> Result<Self, BenchError> {
        Self::read(File::open(path)?)
    }

    pub fn write<W: io::Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        for (instance, &best) in &self.0 {
            w.serialize(BestRow {
                instance: instance.clone(),
                best,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rejects values below the critical path under min durations, a lower
    /// bound on every sampled makespan.
    pub fn check_bounds(
        &self,
        instances: &[(String, Arc<Instance>)],
        model: &UncertaintyModel,
    ) -> Result<(), BenchError> {
        for (id, instance) in instances {
            let Some(&best) = self.0.get(id) else {
                continue;
            };
            let min: Vec<Time> = derive_triples(instance, model)
                .iter()
                .map(|t| t.min)
                .collect();
            let bound = instance.critical_path(&min).unwrap_or(0);
            if best < bound as f64 {
                return Err(BenchError::BestBelowBound {
                    instance: id.clone(),
                    best,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// Minimum instance mean over the evaluated methods.
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut map: BTreeMap<String, f64> = BTreeMap::new();
        for r in records {
            if let Some(m) = r.mean_makespan() {
                map.entry(r.instance.clone())
                    .and_modify(|b| *b = b.min(m))
                    .or_insert(m);
            }
        }
        BestKnown(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub instances: usize,
    pub cells: usize,
    pub solved: usize,
    pub mean_makespan: Option<f64>,
    pub mean_gap: Option<f64>,
    pub coverage: f64,
}

/// One row per method, in first-seen order. Instances missing from `best`
/// fall back to the best mean over the evaluated methods.
pub fn aggregate(evaluation: &Evaluation, best: Option<&BestKnown>) -> Vec<AggregateRow> {
    let fallback = BestKnown::from_records(&evaluation.records);
    let best_of = |id: &str| {
        best.and_then(|b| b.0.get(id))
            .or_else(|| fallback.0.get(id))
            .copied()
    };
    let mut order: Vec<&str> = Vec::new();
    let mut by_method: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &evaluation.records {
        if !by_method.contains_key(r.method.as_str()) {
            order.push(&r.method);
        }
        by_method.entry(&r.method).or_default().push(r);
    }
    order
        .into_iter()
        .map(|m| {
            let recs = &by_method[m];
            let cells: usize = recs.iter().map(|r| r.makespans.len()).sum();
            let solved: usize = recs.iter().map(|r| r.solved()).sum();
            let gaps: Vec<f64> = recs
                .iter()
                .filter_map(|r| gap(r.mean_makespan()?, best_of(&r.instance)?).ok())
                .collect();
            AggregateRow {
                method: m.to_owned(),
                instances: recs.len(),
                cells,
                solved,
                mean_makespan: mean(
                    recs.iter()
                        .flat_map(|r| r.makespans.iter().flatten().copied()),
                ),
                mean_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
                coverage: if cells == 0 {
                    0.0
                } else {
                    100.0 * solved as f64 / cells as f64
                },
            }
        })
        .collect()
}

pub fn write_scenario_csv<W: io::Write>(rows: &[ScenarioRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenario_csv<R: io::Read>(input: R) -> Result<Vec<ScenarioRow>, BenchError> {
    Ok(csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<ScenarioRow>, _>>()?)
}

pub fn write_aggregate_csv<W: io::Write>(rows: &[AggregateRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: io::Read>(input: R) -> Result<Vec<AggregateRow>, BenchError> {
    Ok(csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<AggregateRow>, _>>()?)
}

/// Mean solved makespan per method, recomputed from per-scenario rows.
pub fn recompute_means(rows: &[ScenarioRow]) -> BTreeMap<String, Option<f64>> {
    let mut groups: BTreeMap<String, Vec<Time>> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(r.method.clone()).or_default();
        if let (true, Some(m)) = (r.solved, r.makespan) {
            g.push(m);
        }
    }
    groups
        .into_iter()
        .map(|(m, v)| (m, mean(v.into_iter())))
        .collect()
}

/// Whitespace-separated summary readable by gnuplot
/// (`plot 'summary.dat' using 1:3:xtic(2) with boxes`).
pub fn write_gnuplot<W: io::Write>(rows: &[AggregateRow], mut out: W) -> io::Result<()> {
    writeln!(out, "# index method mean_makespan mean_gap coverage")?;
    let num = |v: Option<f64>| v.map_or_else(|| "NaN".to_owned(), |x| x.to_string());
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{i} {} {} {} {}",
            r.method,
            num(r.mean_makespan),
            num(r.mean_gap),
            r.coverage
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{random_instance_seeded, GeneratorConfig};
    use crate::samples::toy_project;

    fn toy_set() -> Vec<(String, Arc<Instance>)> {
        vec![("toy".to_owned(), Arc::new(toy_project()))]
    }

    fn write_list(dir: &Path, name: &str, order: &[usize]) -> PathBuf {
        let path = dir.join(name);
        let body: String = order.iter().map(|t| format!("{t}\n")).collect();
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(42.0, 42.0).unwrap(), 0.0);
        assert_eq!(gap(80.0, 60.0).unwrap(), 25.0);
        assert!(gap(0.0, 1.0).is_err());
        assert!(gap(-3.0, 1.0).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("grpw".parse::<Method>().unwrap(), Method::Rule(Rule::Grpw));
        assert_eq!(
            "list:a/b.list".parse::<Method>().unwrap(),
            Method::List(PathBuf::from("a/b.list"))
        );
        assert!("list:".parse::<Method>().is_err());
        assert!("cp50".parse::<Method>().is_err());
        assert_eq!(parse_methods("spt,lpt").unwrap().len(), 2);
    }

    #[test]
    fn fixed_list_on_degenerate_toy() {
        let dir = tempfile::tempdir().unwrap();
        let list = write_list(dir.path(), "toy.list", &[0, 1, 2, 4, 5, 3, 6, 7]);
        let config = ScenarioConfig {
            count: 100,
            base_seed: 3,
            model: UncertaintyModel::deterministic(),
        };
        let eval = evaluate(&toy_set(), &[Method::List(list)], &config);
        let agg = aggregate(&eval, None);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean_makespan, Some(15.0));
        assert_eq!(agg[0].coverage, 100.0);
        assert_eq!(agg[0].mean_gap, Some(0.0));
    }

    #[test]
    fn list_directory_and_missing_lists() {
        let dir = tempfile::tempdir().unwrap();
        write_list(dir.path(), "toy.list", &[0, 1, 2, 4, 5, 3, 6, 7]);
        let mut set = toy_set();
        set.push(("other".to_owned(), Arc::new(toy_project())));
        let config = ScenarioConfig {
            count: 4,
            ..ScenarioConfig::default()
        };
        let eval = evaluate(&set, &[Method::List(dir.path().to_owned())], &config);
        let agg = aggregate(&eval, None);
        assert_eq!((agg[0].cells, agg[0].solved), (8, 4));
        assert_eq!(agg[0].coverage, 50.0);
        assert!(eval
            .rows
            .iter()
            .filter(|r| r.instance == "other")
            .all(|r| !r.solved));
    }

    #[test]
    fn rules_always_cover_everything() {
        let cfg = GeneratorConfig {
            tasks: 20..=20,
            ..GeneratorConfig::default()
        };
        let set: Vec<(String, Arc<Instance>)> = (0..5)
            .map(|i| (format!("r{i}"), Arc::new(random_instance_seeded(&cfg, i))))
            .collect();
        let config = ScenarioConfig {
            count: 10,
            ..ScenarioConfig::default()
        };
        let eval = evaluate(
            &set,
            &[Method::Rule(Rule::Spt), Method::Rule(Rule::Lpt)],
            &config,
        );
        for row in aggregate(&eval, None) {
            assert_eq!(row.coverage, 100.0);
            assert!(row.mean_gap.unwrap() >= 0.0);
        }
    }

    #[test]
    fn csv_bytes_are_reproducible_and_means_recompute() {
        let config = ScenarioConfig {
            count: 25,
            base_seed: 11,
            model: UncertaintyModel::default(),
        };
        let methods: Vec<Method> = Rule::ALL.iter().map(|&r| Method::Rule(r)).collect();
        let run = || {
            let eval = evaluate(&toy_set(), &methods, &config);
            let mut a = Vec::new();
            let mut b = Vec::new();
            write_scenario_csv(&eval.rows, &mut a).unwrap();
            write_aggregate_csv(&aggregate(&eval, None), &mut b).unwrap();
            (a, b)
        };
        let (rows1, agg1) = run();
        let (rows2, agg2) = run();
        assert_eq!(rows1, rows2);
        assert_eq!(agg1, agg2);
        let rows = read_scenario_csv(rows1.as_slice()).unwrap();
        let agg = read_aggregate_csv(agg1.as_slice()).unwrap();
        let again = recompute_means(&rows);
        for a in &agg {
            let m = again[&a.method].unwrap();
            assert_eq!(m.to_bits(), a.mean_makespan.unwrap().to_bits());
        }
    }

    #[test]
    fn best_known_file_and_bounds() {
        let text = "instance,best\ntoy,13\n";
        let best = BestKnown::read(text.as_bytes()).unwrap();
        assert_eq!(best.0["toy"], 13.0);
        best.check_bounds(&toy_set(), &UncertaintyModel::deterministic())
            .unwrap();
        let low = BestKnown::read("instance,best\ntoy,10\n".as_bytes()).unwrap();
        assert!(matches!(
            low.check_bounds(&toy_set(), &UncertaintyModel::deterministic()),
            Err(BenchError::BestBelowBound { bound: 11, .. })
        ));
        assert!(BestKnown::read("instance,best\ntoy,1\ntoy,2\n".as_bytes()).is_err());
        let mut out = Vec::new();
        best.write(&mut out).unwrap();
        assert_eq!(BestKnown::read(out.as_slice()).unwrap(), best);
    }

    #[test]
    fn gap_against_given_best() {
        let dir = tempfile::tempdir().unwrap();
        let list = write_list(dir.path(), "toy.list", &[0, 1, 2, 4, 5, 3, 6, 7]);
        let config = ScenarioConfig {
            count: 3,
            base_seed: 0,
            model: UncertaintyModel::deterministic(),
        };
        let eval = evaluate(&toy_set(), &[Method::List(list)], &config);
        let best = BestKnown::read("instance,best\ntoy,12\n".as_bytes()).unwrap();
        let agg = aggregate(&eval, Some(&best));
        assert_eq!(agg[0].mean_gap, Some(20.0));
    }

    #[test]
    fn gnuplot_summary() {
        let rows = vec![AggregateRow {
            method: "spt".into(),
            instances: 1,
            cells: 2,
            solved: 2,
            mean_makespan: Some(15.5),
            mean_gap: None,
            coverage: 100.0,
        }];
        let mut out = Vec::new();
        write_gnuplot(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0 spt 15.5 NaN 100");
    }
}
