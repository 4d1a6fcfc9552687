//! Project model: tasks, renewable resources and the precedence DAG.
//!
//! Task ids are dense 0-based indices. Index `0` is the source task and the
//! last index is the sink task; both have null duration. Resource consumption
//! of the source and sink is stored as read (usually 0); the flow engine
//! treats them as holding full capacity.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense task index.
pub type TaskId = usize;
/// Dense resource index.
pub type ResourceId = usize;
/// Integer time unit used for durations and dates.
pub type Time = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub duration: Time,
    /// Units of each resource held while the task runs.
    pub consumption: Vec<u32>,
}

impl Task {
    pub fn new(duration: Time, consumption: Vec<u32>) -> Self {
        Task {
            duration,
            consumption,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("an instance needs at least a source and a sink task, got {0} task(s)")]
    TooFewTasks(usize),
    #[error("task {task} lists {got} consumption value(s), expected {expected}")]
    ConsumptionArity {
        task: TaskId,
        got: usize,
        expected: usize,
    },
    #[error("precedence arc ({0}, {1}) references an unknown task")]
    DanglingArc(TaskId, TaskId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("malformed canonical instance at line {line}: {message}")]
    Canonical { line: usize, message: String },
}

/// An RCPSP instance `(tasks, resources, precedence)`.
///
/// Immutable once built. Construction only checks structural consistency;
/// semantic invariants are reported by [`Instance::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    tasks: Vec<Task>,
    resources: Vec<Resource>,
    successors: Vec<Vec<TaskId>>,
    predecessors: Vec<Vec<TaskId>>,
}

impl Instance {
    pub fn new(
        tasks: Vec<Task>,
        resources: Vec<Resource>,
        arcs: impl IntoIterator<Item = (TaskId, TaskId)>,
    ) -> Result<Self, InstanceError> {
        let n = tasks.len();
        if n < 2 {
            return Err(InstanceError::TooFewTasks(n));
        }
        for (t, task) in tasks.iter().enumerate() {
            if task.consumption.len() != resources.len() {
                return Err(InstanceError::ConsumptionArity {
                    task: t,
                    got: task.consumption.len(),
                    expected: resources.len(),
                });
            }
        }
        let mut successors = vec![Vec::new(); n];
        let mut predecessors = vec![Vec::new(); n];
        for (a, b) in arcs {
            if a >= n || b >= n {
                return Err(InstanceError::DanglingArc(a, b));
            }
            successors[a].push(b);
            predecessors[b].push(a);
        }
        for list in successors.iter_mut().chain(predecessors.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Instance {
            tasks,
            resources,
            successors,
            predecessors,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn source(&self) -> TaskId {
        0
    }

    pub fn sink(&self) -> TaskId {
        self.tasks.len() - 1
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn task(&self, t: TaskId) -> &Task {
        &self.tasks[t]
    }

    pub fn duration(&self, t: TaskId) -> Time {
        self.tasks[t].duration
    }

    /// Base durations of all tasks, in id order.
    pub fn durations(&self) -> Vec<Time> {
        self.tasks.iter().map(|t| t.duration).collect()
    }

    pub fn capacity(&self, r: ResourceId) -> u32 {
        self.resources[r].capacity
    }

    pub fn consumption(&self, t: TaskId, r: ResourceId) -> u32 {
        self.tasks[t].consumption[r]
    }

    /// Successors of `t` in the precedence relation, ascending.
    pub fn direct_successors(&self, t: TaskId) -> Result<&[TaskId], InstanceError> {
        self.successors
            .get(t)
            .map(Vec::as_slice)
            .ok_or(InstanceError::UnknownTask(t))
    }

    /// Predecessors of `t` in the precedence relation, ascending.
    pub fn direct_predecessors(&self, t: TaskId) -> Result<&[TaskId], InstanceError> {
        self.predecessors
            .get(t)
            .map(Vec::as_slice)
            .ok_or(InstanceError::UnknownTask(t))
    }

    pub(crate) fn preds(&self, t: TaskId) -> &[TaskId] {
        &self.predecessors[t]
    }

    pub(crate) fn succs(&self, t: TaskId) -> &[TaskId] {
        &self.successors[t]
    }

    /// All precedence arcs, ordered by (source, target).
    pub fn arcs(&self) -> impl Iterator<Item = (TaskId, TaskId)> + '_ {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(a, succ)| succ.iter().map(move |&b| (a, b)))
    }

    pub fn num_arcs(&self) -> usize {
        self.successors.iter().map(Vec::len).sum()
    }

    /// Smallest-index-first topological order, or `None` if the precedence
    /// graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<TaskId>> {
        let n = self.num_tasks();
        let mut indeg: Vec<usize> = self.predecessors.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<TaskId>> =
            (0..n).filter(|&t| indeg[t] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(t)) = ready.pop() {
            order.push(t);
            for &s in &self.successors[t] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(Reverse(s));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Longest path length from the source through the precedence DAG, using
    /// `durations` (indexed by task). Ignores resources, so it is a lower
    /// bound on any feasible makespan.
    pub fn critical_path(&self, durations: &[Time]) -> Option<Time> {
        let order = self.topological_order()?;
        let mut finish = vec![0; self.num_tasks()];
        for &t in &order {
            let start = self.predecessors[t]
                .iter()
                .map(|&p| finish[p])
                .max()
                .unwrap_or(0);
            finish[t] = start + durations[t];
        }
        finish.into_iter().max()
    }

    /// Checks every instance invariant and reports one diagnostic per
    /// violation. An empty list means the instance is fully valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let (alpha, omega) = (self.source(), self.sink());

        for (r, res) in self.resources.iter().enumerate() {
            if res.capacity == 0 {
                out.push(Diagnostic::ZeroCapacity { resource: r });
            }
        }
        for (t, task) in self.tasks.iter().enumerate() {
            for (r, &c) in task.consumption.iter().enumerate() {
                let capacity = self.resources[r].capacity;
                if c > capacity {
                    out.push(Diagnostic::OverCapacity {
                        task: t,
                        resource: r,
                        consumption: c,
                        capacity,
                    });
                }
            }
        }
        for t in [alpha, omega] {
            if self.tasks[t].duration != 0 {
                out.push(Diagnostic::TerminalDuration {
                    task: t,
                    duration: self.tasks[t].duration,
                });
            }
        }
        for (t, succ) in self.successors.iter().enumerate() {
            if succ.contains(&t) {
                out.push(Diagnostic::SelfLoop { task: t });
            }
        }
        for &p in &self.predecessors[alpha] {
            out.push(Diagnostic::SourceHasPredecessor { predecessor: p });
        }
        for &s in &self.successors[omega] {
            out.push(Diagnostic::SinkHasSuccessor { successor: s });
        }

        if let Some(cycle) = self.find_cycle() {
            out.push(Diagnostic::Cycle { tasks: cycle });
        } else {
            let from_source = self.reachable(alpha, &self.successors);
            let to_sink = self.reachable(omega, &self.predecessors);
            for t in 0..self.num_tasks() {
                if !from_source.contains(&t) {
                    out.push(Diagnostic::NotAfterSource { task: t });
                }
                if !to_sink.contains(&t) {
                    out.push(Diagnostic::NotBeforeSink { task: t });
                }
            }
        }

        if self.num_resources() > 0 {
            for t in 1..omega {
                if self.tasks[t].consumption.iter().all(|&c| c == 0) {
                    out.push(Diagnostic::NoConsumption { task: t });
                }
            }
        }
        out
    }

    /// True when [`Instance::validate`] reports no error-level diagnostic.
    pub fn is_valid(&self) -> bool {
        self.validate()
            .iter()
            .all(|d| d.severity() == Severity::Warning)
    }

    fn reachable(&self, start: TaskId, adjacency: &[Vec<TaskId>]) -> HashSet<TaskId> {
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for &n in &adjacency[t] {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen
    }

    /// One directed cycle, as the sequence of its tasks, if any exists.
    fn find_cycle(&self) -> Option<Vec<TaskId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.num_tasks();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            // iterative DFS keeping (node, next successor index)
            let mut stack: Vec<(TaskId, usize)> = vec![(root, 0)];
            mark[root] = Mark::Active;
            while let Some(&mut (t, ref mut i)) = stack.last_mut() {
                if let Some(&s) = self.successors[t].get(*i) {
                    *i += 1;
                    match mark[s] {
                        Mark::New => {
                            mark[s] = Mark::Active;
                            stack.push((s, 0));
                        }
                        Mark::Active => {
                            let pos = stack.iter().position(|&(x, _)| x == s).unwrap();
                            return Some(stack[pos..].iter().map(|&(x, _)| x).collect());
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[t] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Line-oriented text dump used for golden files and round-trips.
    ///
    /// ```text
    /// flowsched-instance 1
    /// resources 4
    /// task <id> <duration> | <consumption...> | <successors...>
    /// ```
    pub fn to_canonical(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        let mut out = String::from("flowsched-instance 1\n");
        out.push_str(&format!(
            "capacities {}\n",
            join(&mut self.resources.iter().map(|r| r.capacity.to_string()))
        ));
        out.push_str(&format!("tasks {}\n", self.num_tasks()));
        for (t, task) in self.tasks.iter().enumerate() {
            out.push_str(&format!(
                "task {} {} | {} | {}\n",
                t,
                task.duration,
                join(&mut task.consumption.iter().map(u32::to_string)),
                join(&mut self.successors[t].iter().map(usize::to_string)),
            ));
        }
        out
    }

    pub fn from_canonical(text: &str) -> Result<Self, InstanceError> {
        let err = |line: usize, message: &str| InstanceError::Canonical {
            line,
            message: message.to_owned(),
        };
        let nums = |line: usize, s: &str| -> Result<Vec<u64>, InstanceError> {
            s.split_whitespace()
                .map(|x| {
                    x.parse::<u64>()
                        .map_err(|_| err(line, "expected an integer"))
                })
                .collect()
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, "flowsched-instance 1")) => {}
            _ => return Err(err(1, "missing `flowsched-instance 1` header")),
        }
        let (ln, caps) = lines.next().ok_or_else(|| err(2, "missing capacities"))?;
        let caps = caps
            .strip_prefix("capacities")
            .ok_or_else(|| err(ln, "expected `capacities`"))?;
        let resources: Vec<Resource> = nums(ln, caps)?
            .into_iter()
            .map(|c| Resource { capacity: c as u32 })
            .collect();
        let (ln, count) = lines.next().ok_or_else(|| err(3, "missing task count"))?;
        let count = count
            .strip_prefix("tasks")
            .and_then(|c| c.trim().parse::<usize>().ok())
            .ok_or_else(|| err(ln, "expected `tasks <n>`"))?;

        let mut tasks = Vec::with_capacity(count);
        let mut arcs = Vec::new();
        for (ln, line) in lines.filter(|(_, l)| !l.is_empty()) {
            let body = line
                .strip_prefix("task ")
                .ok_or_else(|| err(ln, "expected `task`"))?;
            let parts: Vec<&str> = body.split('|').collect();
            if parts.len() != 3 {
                return Err(err(ln, "expected three `|`-separated fields"));
            }
            let head = nums(ln, parts[0])?;
            if head.len() != 2 || head[0] as usize != tasks.len() {
                return Err(err(ln, "expected `<id> <duration>` with dense ids"));
            }
            let consumption = nums(ln, parts[1])?.into_iter().map(|c| c as u32).collect();
            for s in nums(ln, parts[2])? {
                arcs.push((tasks.len(), s as usize));
            }
            tasks.push(Task::new(head[1], consumption));
        }
        if tasks.len() != count {
            return Err(err(0, "task count does not match the number of task lines"));
        }
        Instance::new(tasks, resources, arcs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One violated instance invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diagnostic {
    ZeroCapacity {
        resource: ResourceId,
    },
    OverCapacity {
        task: TaskId,
        resource: ResourceId,
        consumption: u32,
        capacity: u32,
    },
    TerminalDuration {
        task: TaskId,
        duration: Time,
    },
    SelfLoop {
        task: TaskId,
    },
    SourceHasPredecessor {
        predecessor: TaskId,
    },
    SinkHasSuccessor {
        successor: TaskId,
    },
    Cycle {
        tasks: Vec<TaskId>,
    },
    NotAfterSource {
        task: TaskId,
    },
    NotBeforeSink {
        task: TaskId,
    },
    NoConsumption {
        task: TaskId,
    },
}

impl Diagnostic {
    pub fn severity(&self) -> Severity {
        match self {
            Diagnostic::NoConsumption { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity() {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}: ")?;
        match self {
            Diagnostic::ZeroCapacity { resource } => {
                write!(f, "resource {resource} has zero capacity")
            }
            Diagnostic::OverCapacity {
                task,
                resource,
                consumption,
                capacity,
            } => write!(
                f,
                "task {task} requests {consumption} units of resource {resource} (capacity {capacity})"
            ),
            Diagnostic::TerminalDuration { task, duration } => {
                write!(f, "source/sink task {task} has non-zero duration {duration}")
            }
            Diagnostic::SelfLoop { task } => write!(f, "task {task} precedes itself"),
            Diagnostic::SourceHasPredecessor { predecessor } => {
                write!(f, "source task has predecessor {predecessor}")
            }
            Diagnostic::SinkHasSuccessor { successor } => {
                write!(f, "sink task has successor {successor}")
            }
            Diagnostic::Cycle { tasks } => write!(f, "precedence cycle through tasks {tasks:?}"),
            Diagnostic::NotAfterSource { task } => {
                write!(f, "task {task} is not reachable from the source")
            }
            Diagnostic::NotBeforeSink { task } => {
                write!(f, "task {task} does not lead to the sink")
            }
            Diagnostic::NoConsumption { task } => {
                write!(f, "task {task} consumes no resource")
            }
        }
    }
}
