//! Test-side oracles, written against the instance accessors only.

#![allow(dead_code)]

use flowsched::instance::{Instance, TaskId, Time};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Units a task takes and releases: full capacity for the source and sink.
pub fn units(instance: &Instance, t: TaskId, r: usize) -> u32 {
    if t == instance.source() || t == instance.sink() {
        instance.capacity(r)
    } else {
        instance.consumption(t, r)
    }
}

pub fn preds(instance: &Instance, t: TaskId) -> Vec<TaskId> {
    instance
        .arcs()
        .filter(|&(_, b)| b == t)
        .map(|(a, _)| a)
        .collect()
}

/// Unscheduled tasks whose predecessors are all scheduled.
pub fn eligible(instance: &Instance, scheduled: &[bool]) -> Vec<TaskId> {
    (0..instance.num_tasks())
        .filter(|&t| !scheduled[t] && preds(instance, t).iter().all(|&p| scheduled[p]))
        .collect()
}

/// Uniformly random precedence-consistent order, source first.
pub fn random_order<R: Rng>(instance: &Instance, rng: &mut R) -> Vec<TaskId> {
    let n = instance.num_tasks();
    let mut scheduled = vec![false; n];
    scheduled[instance.source()] = true;
    let mut order = vec![instance.source()];
    while order.len() < n {
        let pick = *eligible(instance, &scheduled)
            .choose(rng)
            .expect("acyclic instance");
        scheduled[pick] = true;
        order.push(pick);
    }
    order
}

/// Straight transcription of the insertion rule: per resource, holders of
/// released units are drained by increasing (end date, task id) until the
/// request is met; a task starts once its predecessors and every holder it
/// drew from have ended.
pub fn oracle_schedule(
    instance: &Instance,
    order: &[TaskId],
    durations: &[Time],
) -> (Vec<Time>, Time) {
    let n = instance.num_tasks();
    let m = instance.num_resources();
    let alpha = instance.source();
    let mut start: Vec<Option<Time>> = vec![None; n];
    start[alpha] = Some(0);
    let mut holders: Vec<Vec<(TaskId, u32)>> = (0..m)
        .map(|r| vec![(alpha, instance.capacity(r))])
        .collect();
    let end = |start: &[Option<Time>], t: TaskId| start[t].unwrap() + durations[t];
    for &t in order.iter().filter(|&&t| t != alpha) {
        let mut s = preds(instance, t)
            .iter()
            .map(|&p| end(&start, p))
            .max()
            .unwrap_or(0);
        for (r, hs) in holders.iter_mut().enumerate() {
            let mut need = units(instance, t, r);
            if need == 0 {
                continue;
            }
            hs.sort_by_key(|&(h, _)| (end(&start, h), h));
            for entry in hs.iter_mut() {
                if need == 0 {
                    break;
                }
                let take = entry.1.min(need);
                if take > 0 {
                    s = s.max(end(&start, entry.0));
                    entry.1 -= take;
                    need -= take;
                }
            }
            assert_eq!(need, 0, "not enough released units");
            hs.retain(|&(_, u)| u > 0);
        }
        start[t] = Some(s);
        for (r, hs) in holders.iter_mut().enumerate() {
            let u = units(instance, t, r);
            if u > 0 {
                hs.push((t, u));
            }
        }
    }
    let start: Vec<Time> = start
        .into_iter()
        .map(|s| s.expect("every task placed"))
        .collect();
    let makespan = start[instance.sink()];
    (start, makespan)
}

/// Unit-time sweep: precedence plus per-period load. Empty when feasible.
pub fn oracle_violations(instance: &Instance, start: &[Time], durations: &[Time]) -> Vec<String> {
    let mut out = Vec::new();
    for (a, b) in instance.arcs() {
        if start[b] < start[a] + durations[a] {
            out.push(format!("precedence {a}->{b}"));
        }
    }
    let horizon = (0..instance.num_tasks())
        .map(|t| start[t] + durations[t])
        .max()
        .unwrap_or(0);
    for r in 0..instance.num_resources() {
        for time in 0..horizon {
            let load: u64 = (0..instance.num_tasks())
                .filter(|&t| start[t] <= time && time < start[t] + durations[t])
                .map(|t| instance.consumption(t, r) as u64)
                .sum();
            if load > instance.capacity(r) as u64 {
                out.push(format!("resource {r} at {time}: {load}"));
            }
        }
    }
    out
}

/// All precedence-consistent orders starting with the source.
pub fn all_orders(instance: &Instance) -> Vec<Vec<TaskId>> {
    fn rec(
        instance: &Instance,
        scheduled: &mut Vec<bool>,
        prefix: &mut Vec<TaskId>,
        out: &mut Vec<Vec<TaskId>>,
    ) {
        if prefix.len() == instance.num_tasks() {
            out.push(prefix.clone());
            return;
        }
        for t in eligible(instance, scheduled) {
            scheduled[t] = true;
            prefix.push(t);
            rec(instance, scheduled, prefix, out);
            prefix.pop();
            scheduled[t] = false;
        }
    }
    let mut scheduled = vec![false; instance.num_tasks()];
    scheduled[instance.source()] = true;
    let mut out = Vec::new();
    rec(
        instance,
        &mut scheduled,
        &mut vec![instance.source()],
        &mut out,
    );
    out
}
