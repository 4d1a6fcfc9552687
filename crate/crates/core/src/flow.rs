//! Partial schedules as resource-flow networks, and the task insertion
//! transition.
//!
//! A [`FlowState`] tracks the set of scheduled tasks plus, for every
//! duration channel (typically min / max / mode), a start date per scheduled
//! task and a [`FlowLedger`]: the resource units already transferred between
//! tasks (flow arcs) and the units released but not yet consumed (open
//! flows). Inserting a task gathers the earliest-available open units for
//! each resource it needs and starts it when its precedence predecessors and
//! all its unit providers have finished. Channels share the scheduled set but
//! are updated independently, so their flow arcs may differ.
//!
//! ```
//! use flowsched::flow::{FlowState, DurationChannels};
//! use flowsched::samples::toy_project;
//!
//! let toy = toy_project();
//! let mut state = FlowState::new(&toy, DurationChannels::single(toy.durations()));
//! for t in [1, 2, 4, 5, 3, 6, 7] {
//!     state.insert_task(&toy, t).unwrap();
//! }
//! assert_eq!(state.makespan(0).unwrap(), 15);
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::instance::{Instance, ResourceId, TaskId, Time};
use crate::uncertainty::DurationTriple;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} is already scheduled")]
    AlreadyScheduled(TaskId),
    #[error("task {task} is not eligible: predecessor {missing} is not scheduled")]
    NotEligible { task: TaskId, missing: TaskId },
    #[error("state is not terminal ({scheduled} of {total} tasks scheduled)")]
    NotTerminal { scheduled: usize, total: usize },
    #[error(
        "only {available} open unit(s) of resource {resource} for task {task}, {needed} needed"
    )]
    InsufficientUnits {
        task: TaskId,
        resource: ResourceId,
        needed: u32,
        available: u32,
    },
    #[error("duration channel {channel} has {got} entries, instance has {expected} tasks")]
    DurationArity {
        channel: usize,
        got: usize,
        expected: usize,
    },
}

/// Units released by a scheduled task and not yet handed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct OpenFlow {
    pub task: TaskId,
    pub units: u32,
}

/// `units` of a resource transferred from `src` to `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FlowArc {
    pub src: TaskId,
    pub dst: TaskId,
    pub units: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ResourceLedger {
    pub flows: Vec<FlowArc>,
    /// Sorted by task id, at most one entry per task.
    pub open: Vec<OpenFlow>,
}

impl ResourceLedger {
    pub fn open_units(&self) -> u64 {
        self.open.iter().map(|o| o.units as u64).sum()
    }
}

/// Flow arcs and open flows of every resource for one duration channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowLedger {
    pub resources: Vec<ResourceLedger>,
}

impl FlowLedger {
    pub fn resource(&self, r: ResourceId) -> &ResourceLedger {
        &self.resources[r]
    }
}

/// Named duration vectors, one per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationChannels {
    names: Vec<String>,
    values: Vec<Vec<Time>>,
}

/// Channel indices of a state built with [`DurationChannels::from_triples`].
pub mod channel {
    pub const MIN: usize = 0;
    pub const MAX: usize = 1;
    pub const MODE: usize = 2;
    pub const NAMES: [&str; 3] = ["min", "max", "mode"];
}

impl DurationChannels {
    /// Three channels in the order min, max, mode.
    pub fn from_triples(triples: &[DurationTriple]) -> Self {
        DurationChannels {
            names: channel::NAMES.iter().map(|s| s.to_string()).collect(),
            values: vec![
                triples.iter().map(|t| t.min).collect(),
                triples.iter().map(|t| t.max).collect(),
                triples.iter().map(|t| t.mode).collect(),
            ],
        }
    }

    pub fn single(durations: Vec<Time>) -> Self {
        DurationChannels {
            names: vec!["realized".into()],
            values: vec![durations],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, ch: usize) -> &str {
        &self.names[ch]
    }

    pub fn get(&self, ch: usize) -> &[Time] {
        &self.values[ch]
    }
}

/// Units of `r` a task takes from the flow network. The source and sink hold
/// the whole capacity; every other task holds its consumption.
pub fn effective_consumption(instance: &Instance, t: TaskId, r: ResourceId) -> u32 {
    if t == instance.source() || t == instance.sink() {
        instance.capacity(r)
    } else {
        instance.consumption(t, r)
    }
}

/// Start dates and makespan of a complete schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub start: Vec<Time>,
    pub makespan: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowState {
    durations: Arc<DurationChannels>,
    scheduled: Vec<bool>,
    order: Vec<TaskId>,
    starts: Vec<Vec<Option<Time>>>,
    ledgers: Vec<FlowLedger>,
}

impl FlowState {
    /// Initial state with the three min / max / mode channels.
    pub fn initial(instance: &Instance, triples: &[DurationTriple]) -> Self {
        Self::new(instance, DurationChannels::from_triples(triples))
    }

    /// Only the source is scheduled, at date 0, holding every resource's
    /// full capacity as a single open flow.
    ///
    /// Panics if a channel's length differs from the task count; see
    /// [`FlowState::try_new`].
    pub fn new(instance: &Instance, durations: DurationChannels) -> Self {
        Self::try_new(instance, durations).expect("duration channels match the instance")
    }

    pub fn try_new(instance: &Instance, durations: DurationChannels) -> Result<Self, FlowError> {
        let n = instance.num_tasks();
        for (channel, v) in durations.values.iter().enumerate() {
            if v.len() != n {
                return Err(FlowError::DurationArity {
                    channel,
                    got: v.len(),
                    expected: n,
                });
            }
        }
        let alpha = instance.source();
        let ledger = FlowLedger {
            resources: instance
                .resources()
                .iter()
                .map(|res| ResourceLedger {
                    flows: Vec::new(),
                    open: vec![OpenFlow {
                        task: alpha,
                        units: res.capacity,
                    }],
                })
                .collect(),
        };
        let k = durations.len();
        let mut start = vec![None; n];
        start[alpha] = Some(0);
        let mut scheduled = vec![false; n];
        scheduled[alpha] = true;
        Ok(FlowState {
            durations: Arc::new(durations),
            scheduled,
            order: vec![alpha],
            starts: vec![start; k],
            ledgers: vec![ledger; k],
        })
    }

    pub fn channels(&self) -> &DurationChannels {
        &self.durations
    }

    pub fn num_channels(&self) -> usize {
        self.durations.len()
    }

    pub fn durations(&self, ch: usize) -> &[Time] {
        self.durations.get(ch)
    }

    pub fn is_scheduled(&self, t: TaskId) -> bool {
        self.scheduled.get(t).copied().unwrap_or(false)
    }

    /// Scheduled tasks in insertion order, source first.
    pub fn order(&self) -> &[TaskId] {
        &self.order
    }

    /// Number of insertions performed since the initial state.
    pub fn step(&self) -> usize {
        self.order.len() - 1
    }

    pub fn is_terminal(&self) -> bool {
        self.order.len() == self.scheduled.len()
    }

    pub fn start(&self, ch: usize, t: TaskId) -> Option<Time> {
        self.starts[ch][t]
    }

    pub fn end(&self, ch: usize, t: TaskId) -> Option<Time> {
        self.starts[ch][t].map(|s| s + self.durations.get(ch)[t])
    }

    pub fn ledger(&self, ch: usize) -> &FlowLedger {
        &self.ledgers[ch]
    }

    /// True if `t` still holds open units in some resource of some channel.
    pub fn has_open_flow(&self, t: TaskId) -> bool {
        self.ledgers
            .iter()
            .flat_map(|l| &l.resources)
            .any(|r| r.open.iter().any(|o| o.task == t))
    }

    /// Unscheduled tasks whose predecessors are all scheduled, ascending.
    pub fn eligible_actions(&self, instance: &Instance) -> Vec<TaskId> {
        (0..instance.num_tasks())
            .filter(|&t| self.check_eligible(instance, t).is_ok())
            .collect()
    }

    pub fn is_eligible(&self, instance: &Instance, t: TaskId) -> bool {
        self.check_eligible(instance, t).is_ok()
    }

    fn check_eligible(&self, instance: &Instance, t: TaskId) -> Result<(), FlowError> {
        if t >= instance.num_tasks() {
            return Err(FlowError::UnknownTask(t));
        }
        if self.scheduled[t] {
            return Err(FlowError::AlreadyScheduled(t));
        }
        match instance.preds(t).iter().find(|&&p| !self.scheduled[p]) {
            Some(&missing) => Err(FlowError::NotEligible { task: t, missing }),
            None => Ok(()),
        }
    }

    /// Schedules `t` in every channel. Leaves the state untouched on error.
    pub fn insert_task(&mut self, instance: &Instance, t: TaskId) -> Result<(), FlowError> {
        self.check_eligible(instance, t)?;
        for ch in 0..self.ledgers.len() {
            self.check_units(instance, ch, t)?;
        }
        for ch in 0..self.ledgers.len() {
            self.insert_in_channel(instance, ch, t);
        }
        self.scheduled[t] = true;
        self.order.push(t);
        Ok(())
    }

    /// Value-returning form of [`FlowState::insert_task`].
    pub fn inserted(&self, instance: &Instance, t: TaskId) -> Result<FlowState, FlowError> {
        let mut next = self.clone();
        next.insert_task(instance, t)?;
        Ok(next)
    }

    fn check_units(&self, instance: &Instance, ch: usize, t: TaskId) -> Result<(), FlowError> {
        for r in 0..instance.num_resources() {
            let needed = effective_consumption(instance, t, r);
            let available = self.ledgers[ch].resources[r].open_units();
            if needed as u64 > available {
                return Err(FlowError::InsufficientUnits {
                    task: t,
                    resource: r,
                    needed,
                    available: available as u32,
                });
            }
        }
        Ok(())
    }

    fn insert_in_channel(&mut self, instance: &Instance, ch: usize, t: TaskId) {
        let durations = self.durations.get(ch);
        let starts = &self.starts[ch];
        let end = |p: TaskId| starts[p].expect("holder is scheduled") + durations[p];

        let mut date = instance.preds(t).iter().map(|&p| end(p)).max().unwrap_or(0);

        for r in 0..instance.num_resources() {
            let needed = effective_consumption(instance, t, r);
            if needed == 0 {
                continue;
            }
            let ledger = &mut self.ledgers[ch].resources[r];

            // earliest availability first, ties on task index
            let mut ordered = ledger.open.clone();
            ordered.sort_by_key(|o| (end(o.task), o.task));

            let mut gathered = 0u32;
            let mut taken: Vec<OpenFlow> = Vec::new();
            for o in ordered {
                if gathered >= needed {
                    break;
                }
                gathered += o.units;
                date = date.max(end(o.task));
                taken.push(o);
            }
            debug_assert!(gathered >= needed);

            let holders: BTreeSet<TaskId> = taken.iter().map(|o| o.task).collect();
            ledger.open.retain(|o| !holders.contains(&o.task));
            if gathered > needed {
                let remainder = gathered - needed;
                let last = taken.last_mut().expect("at least one flow taken");
                last.units -= remainder;
                push_open(&mut ledger.open, last.task, remainder);
            }
            ledger.flows.extend(taken.iter().map(|o| FlowArc {
                src: o.task,
                dst: t,
                units: o.units,
            }));
            push_open(&mut ledger.open, t, needed);
        }
        self.starts[ch][t] = Some(date);
    }

    /// Date of the sink in channel `ch`.
    pub fn makespan(&self, ch: usize) -> Result<Time, FlowError> {
        if !self.is_terminal() {
            return Err(FlowError::NotTerminal {
                scheduled: self.order.len(),
                total: self.scheduled.len(),
            });
        }
        let sink = self.scheduled.len() - 1;
        Ok(self.starts[ch][sink].expect("sink scheduled"))
    }

    /// Complete schedule of channel `ch`.
    pub fn schedule(&self, ch: usize) -> Result<Schedule, FlowError> {
        let makespan = self.makespan(ch)?;
        Ok(Schedule {
            start: self.starts[ch]
                .iter()
                .map(|s| s.expect("terminal"))
                .collect(),
            makespan,
        })
    }

    /// Deterministic text rendering of the whole state.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let ids = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "step {}", self.step());
        let mut sched: Vec<TaskId> = self.order.clone();
        sched.sort_unstable();
        let _ = writeln!(
            out,
            "scheduled {}",
            ids(&mut sched.iter().map(|t| t.to_string()))
        );
        for ch in 0..self.num_channels() {
            let name = self.durations.name(ch);
            let _ = writeln!(
                out,
                "[{name}] start {}",
                ids(&mut sched
                    .iter()
                    .map(|&t| format!("{t}:{}", self.starts[ch][t].unwrap())))
            );
            for (r, res) in self.ledgers[ch].resources.iter().enumerate() {
                let mut flows = res.flows.clone();
                flows.sort_unstable();
                let _ = writeln!(
                    out,
                    "[{name}] r{r} flows {} | open {}",
                    ids(&mut flows
                        .iter()
                        .map(|f| format!("{}->{}:{}", f.src, f.dst, f.units))),
                    ids(&mut res.open.iter().map(|o| format!("{}:{}", o.task, o.units))),
                );
            }
        }
        out
    }
}

fn push_open(open: &mut Vec<OpenFlow>, task: TaskId, units: u32) {
    match open.binary_search_by_key(&task, |o| o.task) {
        Ok(i) => open[i].units += units,
        Err(i) => open.insert(i, OpenFlow { task, units }),
    }
}

/// Runs the insertion sequence `actions` with one duration per task and
/// returns the resulting schedule. A leading source task in `actions` is
/// accepted and skipped.
pub fn replay_with_durations(
    instance: &Instance,
    actions: &[TaskId],
    durations: &[Time],
) -> Result<Schedule, FlowError> {
    let mut state = FlowState::try_new(instance, DurationChannels::single(durations.to_vec()))?;
    let actions = match actions.first() {
        Some(&a) if a == instance.source() => &actions[1..],
        _ => actions,
    };
    for &t in actions {
        state.insert_task(instance, t)?;
    }
    state.schedule(0)
}
