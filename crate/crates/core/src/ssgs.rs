//! Serial schedule generation from priority lists, static priority rules,
//! an independent feasibility checker, and the terminal reward.

use std::fmt;
use std::io::{self, BufRead};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub use crate::flow::Schedule;
use crate::flow::{replay_with_durations, DurationChannels, FlowError, FlowState};
use crate::instance::{Instance, ResourceId, TaskId, Time};
use crate::uncertainty::DurationTriple;

#[derive(Debug, Error)]
pub enum ListError {
    #[error("priority list has {got} entries, instance has {expected} tasks")]
    Length { got: usize, expected: usize },
    #[error("task {0} appears twice in the priority list")]
    Duplicate(TaskId),
    #[error("unknown task {0} in priority list")]
    UnknownTask(TaskId),
    #[error("task {task} is listed before its predecessor {predecessor}")]
    Precedence { task: TaskId, predecessor: TaskId },
    #[error("line {line}: cannot parse task id `{text}`")]
    Parse { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A precedence-consistent permutation of all tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PriorityList(Vec<TaskId>);

impl PriorityList {
    pub fn new(instance: &Instance, order: Vec<TaskId>) -> Result<Self, ListError> {
        let n = instance.num_tasks();
        if order.len() != n {
            return Err(ListError::Length {
                got: order.len(),
                expected: n,
            });
        }
        let mut position = vec![usize::MAX; n];
        for (i, &t) in order.iter().enumerate() {
            if t >= n {
                return Err(ListError::UnknownTask(t));
            }
            if position[t] != usize::MAX {
                return Err(ListError::Duplicate(t));
            }
            position[t] = i;
        }
        for (a, b) in instance.arcs() {
            if position[a] > position[b] {
                return Err(ListError::Precedence {
                    task: b,
                    predecessor: a,
                });
            }
        }
        Ok(PriorityList(order))
    }

    pub fn as_slice(&self) -> &[TaskId] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<TaskId> {
        self.0
    }

    /// Reads one task id per line; blank lines and `#` comments are skipped.
    pub fn read<R: BufRead>(instance: &Instance, input: R) -> Result<Self, ListError> {
        let mut order = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            order.push(text.parse().map_err(|_| ListError::Parse {
                line: i + 1,
                text: text.to_owned(),
            })?);
        }
        PriorityList::new(instance, order)
    }

    pub fn write<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        for t in &self.0 {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }
}

/// Inserts tasks in list order with one duration per task.
pub fn execute_list(
    instance: &Instance,
    list: &PriorityList,
    durations: &[Time],
) -> Result<Schedule, FlowError> {
    replay_with_durations(instance, list.as_slice(), durations)
}

/// Static priority dispatch rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Shortest mode duration first.
    Spt,
    /// Longest mode duration first.
    Lpt,
    /// Most immediate successors first.
    Mis,
    /// Greatest mode duration plus direct successors' mode durations first.
    Grpw,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Spt, Rule::Lpt, Rule::Mis, Rule::Grpw];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Spt => "spt",
            Rule::Lpt => "lpt",
            Rule::Mis => "mis",
            Rule::Grpw => "grpw",
        }
    }

    /// True when smaller keys are preferred.
    pub fn minimizes(self) -> bool {
        matches!(self, Rule::Spt)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown rule `{0}` (expected spt, lpt, mis or grpw)")]
pub struct UnknownRule(pub String);

impl FromStr for Rule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spt" => Ok(Rule::Spt),
            "lpt" => Ok(Rule::Lpt),
            "mis" => Ok(Rule::Mis),
            "grpw" => Ok(Rule::Grpw),
            _ => Err(UnknownRule(s.to_owned())),
        }
    }
}

/// Static ranking key of `t` under `rule`, computed from mode durations.
pub fn rule_value(rule: Rule, instance: &Instance, triples: &[DurationTriple], t: TaskId) -> u64 {
    match rule {
        Rule::Spt | Rule::Lpt => triples[t].mode,
        Rule::Mis => instance.succs(t).len() as u64,
        Rule::Grpw => {
            triples[t].mode
                + instance
                    .succs(t)
                    .iter()
                    .map(|&s| triples[s].mode)
                    .sum::<u64>()
        }
    }
}

/// Greedy rollout: repeatedly inserts the eligible task with the best key,
/// lowest task index on ties. Returns the induced list and its schedule
/// under `durations`.
pub fn rule_rollout(
    rule: Rule,
    instance: &Instance,
    triples: &[DurationTriple],
    durations: &[Time],
) -> Result<(PriorityList, Schedule), FlowError> {
    let keys: Vec<u64> = (0..instance.num_tasks())
        .map(|t| rule_value(rule, instance, triples, t))
        .collect();
    let mut state = FlowState::try_new(instance, DurationChannels::single(durations.to_vec()))?;
    while !state.is_terminal() {
        let eligible = state.eligible_actions(instance);
        let pick = if rule.minimizes() {
            eligible.iter().copied().min_by_key(|&t| (keys[t], t))
        } else {
            eligible
                .iter()
                .copied()
                .min_by_key(|&t| (std::cmp::Reverse(keys[t]), t))
        }
        .expect("a non-terminal state of a valid instance has an eligible task");
        state.insert_task(instance, pick)?;
    }
    let list = PriorityList(state.order().to_vec());
    Ok((list, state.schedule(0)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// `successor` starts before `predecessor` ends.
    Precedence {
        predecessor: TaskId,
        successor: TaskId,
    },
    /// Load on `resource` exceeds capacity on `[from, to)`.
    Capacity {
        resource: ResourceId,
        from: Time,
        to: Time,
        load: u64,
        capacity: u32,
    },
    /// The makespan does not equal the sink's start date.
    Makespan {
        recorded: Time,
        sink_start: Time,
    },
    MissingStart {
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies a schedule without any flow logic: every precedence arc, then a
/// sweep of each resource's load over time. Each maximal interval with a
/// constant over-capacity load is reported once.
pub fn check_schedule(
    instance: &Instance,
    schedule: &Schedule,
    durations: &[Time],
) -> FeasibilityReport {
    let n = instance.num_tasks();
    let mut violations = Vec::new();
    if schedule.start.len() != n || durations.len() != n {
        violations.push(Violation::MissingStart {
            expected: n,
            got: schedule.start.len().min(durations.len()),
        });
        return FeasibilityReport { violations };
    }
    let start = &schedule.start;
    for (a, b) in instance.arcs() {
        if start[a] + durations[a] > start[b] {
            violations.push(Violation::Precedence {
                predecessor: a,
                successor: b,
            });
        }
    }
    if schedule.makespan != start[instance.sink()] {
        violations.push(Violation::Makespan {
            recorded: schedule.makespan,
            sink_start: start[instance.sink()],
        });
    }
    for r in 0..instance.num_resources() {
        let capacity = instance.capacity(r);
        let mut events: Vec<(Time, i64)> = Vec::new();
        for t in 0..n {
            let c = instance.consumption(t, r) as i64;
            if c > 0 && durations[t] > 0 {
                events.push((start[t], c));
                events.push((start[t] + durations[t], -c));
            }
        }
        events.sort_unstable();
        let mut load = 0i64;
        let mut i = 0;
        while i < events.len() {
            let time = events[i].0;
            while i < events.len() && events[i].0 == time {
                load += events[i].1;
                i += 1;
            }
            if load > capacity as i64 {
                let to = events[i].0; // load returns to 0 eventually, so a later event exists
                violations.push(Violation::Capacity {
                    resource: r,
                    from: time,
                    to,
                    load: load as u64,
                    capacity,
                });
            }
        }
    }
    FeasibilityReport { violations }
}

/// Normalized terminal reward `-makespan / |T|`.
pub fn terminal_reward(makespan: Time, instance: &Instance) -> f64 {
    -(makespan as f64) / instance.num_tasks() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::{chain, empty_project, toy_project};
    use crate::uncertainty::degenerate_triples;

    const ALPHA: TaskId = 0;
    const A: TaskId = 1;
    const B: TaskId = 2;
    const C: TaskId = 3;
    const D: TaskId = 4;
    const E: TaskId = 5;
    const F: TaskId = 6;
    const OMEGA: TaskId = 7;

    /// Step-by-step transcription of the insertion procedure for a single
    /// resource, written without the library's ledger types.
    fn reference_single_resource(instance: &Instance, order: &[TaskId], dur: &[Time]) -> Vec<Time> {
        let cap = instance.capacity(0);
        let n = instance.num_tasks();
        let cons = |t: TaskId| {
            if t == 0 || t == n - 1 {
                cap
            } else {
                instance.consumption(t, 0)
            }
        };
        let mut start = vec![0; n];
        let mut open: Vec<(TaskId, u32)> = vec![(0, cap)];
        for &t in &order[1..] {
            let mut prev: Vec<TaskId> = instance.direct_predecessors(t).unwrap().to_vec();
            let need = cons(t);
            if need > 0 {
                open.sort_by_key(|&(h, _)| (start[h] + dur[h], h));
                let mut got = 0;
                let mut k = 0;
                while got < need {
                    got += open[k].1;
                    prev.push(open[k].0);
                    k += 1;
                }
                let mut rest: Vec<(TaskId, u32)> = open.split_off(k);
                if got > need {
                    rest.push((open[k - 1].0, got - need));
                }
                rest.push((t, need));
                open = rest;
            }
            start[t] = prev.iter().map(|&p| start[p] + dur[p]).max().unwrap_or(0);
        }
        start
    }

    #[test]
    fn reference_order_gives_makespan_15() {
        let toy = toy_project();
        let list = PriorityList::new(&toy, vec![ALPHA, A, B, D, E, C, F, OMEGA]).unwrap();
        let s = execute_list(&toy, &list, &toy.durations()).unwrap();
        assert_eq!(s.makespan, 15);
        assert!(check_schedule(&toy, &s, &toy.durations()).is_feasible());
    }

    #[test]
    fn alternative_order_matches_reference_transcription() {
        let toy = toy_project();
        let order = vec![ALPHA, A, B, C, D, E, F, OMEGA];
        let expected = reference_single_resource(&toy, &order, &toy.durations());
        let list = PriorityList::new(&toy, order).unwrap();
        let s = execute_list(&toy, &list, &toy.durations()).unwrap();
        assert_eq!(s.start, expected);
        // hand run: C gathers alpha:1, B:1, A:1 and starts at 4; E and F
        // then draw from C and start at 9; omega waits for E and F.
        assert_eq!(s.start, vec![0, 0, 0, 4, 4, 9, 9, 13]);
        assert_eq!(s.makespan, 13);
    }

    #[test]
    fn empty_project_any_list() {
        let e = empty_project();
        let list = PriorityList::new(&e, vec![0, 1]).unwrap();
        assert_eq!(execute_list(&e, &list, &[0, 0]).unwrap().makespan, 0);
        for rule in Rule::ALL {
            let (_, s) = rule_rollout(rule, &e, &degenerate_triples(&e), &[0, 0]).unwrap();
            assert_eq!(s.makespan, 0);
        }
    }

    #[test]
    fn list_validation() {
        let toy = toy_project();
        assert!(matches!(
            PriorityList::new(&toy, vec![0, 1]),
            Err(ListError::Length { .. })
        ));
        assert!(matches!(
            PriorityList::new(&toy, vec![0, 1, 1, 3, 4, 5, 6, 7]),
            Err(ListError::Duplicate(1))
        ));
        assert!(matches!(
            PriorityList::new(&toy, vec![0, 1, 3, 2, 4, 5, 6, 7]),
            Err(ListError::Precedence {
                task: 3,
                predecessor: 2
            })
        ));
        assert!(matches!(
            PriorityList::new(&toy, vec![0, 1, 2, 3, 4, 5, 6, 9]),
            Err(ListError::UnknownTask(9))
        ));
    }

    #[test]
    fn list_file_round_trip() {
        let toy = toy_project();
        let list = PriorityList::new(&toy, vec![0, 2, 1, 4, 5, 3, 6, 7]).unwrap();
        let mut buf = Vec::new();
        list.write(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "0\n2\n1\n4\n5\n3\n6\n7\n"
        );
        assert_eq!(PriorityList::read(&toy, buf.as_slice()).unwrap(), list);
        assert!(matches!(
            PriorityList::read(&toy, "0\nx\n".as_bytes()),
            Err(ListError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn rule_values_on_toy() {
        let toy = toy_project();
        let tr = degenerate_triples(&toy);
        assert_eq!(rule_value(Rule::Grpw, &toy, &tr, B), 2 + 5 + 6 + 4);
        assert_eq!(rule_value(Rule::Mis, &toy, &tr, B), 3);
        assert_eq!(rule_value(Rule::Spt, &toy, &tr, ALPHA), 0);
        assert_eq!(rule_value(Rule::Lpt, &toy, &tr, D), 6);
    }

    #[test]
    fn first_picks_on_toy() {
        let toy = toy_project();
        let tr = degenerate_triples(&toy);
        let first = |rule| {
            rule_rollout(rule, &toy, &tr, &toy.durations())
                .unwrap()
                .0
                .as_slice()[1]
        };
        assert_eq!(first(Rule::Spt), B);
        assert_eq!(first(Rule::Mis), B);
        assert_eq!(first(Rule::Lpt), A);
    }

    #[test]
    fn chain_forces_order() {
        let c = chain(&[3, 0, 2, 5]);
        let tr = degenerate_triples(&c);
        for rule in Rule::ALL {
            let (list, s) = rule_rollout(rule, &c, &tr, &c.durations()).unwrap();
            assert_eq!(list.as_slice(), &[0, 1, 2, 3, 4, 5]);
            assert_eq!(s.makespan, 10);
        }
    }

    #[test]
    fn rollout_equals_execution_of_its_list() {
        let toy = toy_project();
        let tr = degenerate_triples(&toy);
        for rule in Rule::ALL {
            let (list, s) = rule_rollout(rule, &toy, &tr, &toy.durations()).unwrap();
            assert_eq!(execute_list(&toy, &list, &toy.durations()).unwrap(), s);
            assert!(check_schedule(&toy, &s, &toy.durations()).is_feasible());
        }
    }

    #[test]
    fn checker_flags_forced_start() {
        let toy = toy_project();
        let mut s = Schedule {
            start: vec![0, 0, 0, 6, 2, 2, 11, 15],
            makespan: 15,
        };
        assert!(check_schedule(&toy, &s, &toy.durations()).is_feasible());
        s.start[C] = 0;
        let report = check_schedule(&toy, &s, &toy.durations());
        assert!(report.violations.contains(&Violation::Precedence {
            predecessor: B,
            successor: C
        }));
        // hand sweep: A[0,4)=2, B[0,2)=1, C[0,5)=3, D[2,8)=1, E[2,6)=1
        assert!(report.violations.contains(&Violation::Capacity {
            resource: 0,
            from: 0,
            to: 2,
            load: 6,
            capacity: 4
        }));
        assert!(report.violations.contains(&Violation::Capacity {
            resource: 0,
            from: 2,
            to: 4,
            load: 7,
            capacity: 4
        }));
        assert!(report.violations.contains(&Violation::Capacity {
            resource: 0,
            from: 4,
            to: 5,
            load: 5,
            capacity: 4
        }));
        assert_eq!(report.violations.len(), 4);
    }

    #[test]
    fn checker_on_empty_project() {
        let e = empty_project();
        let s = Schedule {
            start: vec![0, 0],
            makespan: 0,
        };
        assert!(check_schedule(&e, &s, &[0, 0]).is_feasible());
    }

    #[test]
    fn reward_examples() {
        let toy = toy_project();
        assert_eq!(terminal_reward(15, &toy), -1.875);
        assert_eq!(terminal_reward(0, &toy), 0.0);
        let inst = crate::generate::random_instance_seeded(
            &crate::generate::GeneratorConfig {
                tasks: 32..=32,
                ..Default::default()
            },
            1,
        );
        assert_eq!(terminal_reward(32, &inst), -1.0);
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("GRPW".parse::<Rule>().unwrap(), Rule::Grpw);
        assert!("edd".parse::<Rule>().is_err());
    }
}
