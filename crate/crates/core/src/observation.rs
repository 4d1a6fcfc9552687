//! Heterogeneous graph observation of a partial schedule.
//!
//! Node layout: task nodes `0..n` (by task id), resource nodes `n..n+m`,
//! then one pool node. Edges come in eleven types. Precedence and flow
//! edges are doubled with typed reverse edges and dropped when they touch a
//! *past* task (scheduled, no open units left in any channel). Resource
//! nodes link to the unscheduled tasks that consume them. Every task and
//! resource node feeds the pool node, and every node has one typed self loop.
//!
//! Flow and resource edges carry a four-value attribute
//! `[level, min, max, mode]`: `level` is units over capacity, the other three
//! flag the duration channels the edge exists in (always all three for
//! resource edges). Other edges carry no attribute.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::flow::FlowState;
use crate::instance::{Instance, TaskId};
use crate::uncertainty::DurationTriple;

pub const OBSERVATION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeType {
    Precedence,
    ReversePrecedence,
    Flow,
    ReverseFlow,
    TaskToResource,
    ResourceToTask,
    TaskToPool,
    ResourceToPool,
    TaskSelfLoop,
    ResourceSelfLoop,
    PoolSelfLoop,
}

impl EdgeType {
    pub const ALL: [EdgeType; 11] = [
        EdgeType::Precedence,
        EdgeType::ReversePrecedence,
        EdgeType::Flow,
        EdgeType::ReverseFlow,
        EdgeType::TaskToResource,
        EdgeType::ResourceToTask,
        EdgeType::TaskToPool,
        EdgeType::ResourceToPool,
        EdgeType::TaskSelfLoop,
        EdgeType::ResourceSelfLoop,
        EdgeType::PoolSelfLoop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Edge types whose attribute is `[level, min, max, mode]`.
    pub fn has_attr(self) -> bool {
        matches!(
            self,
            EdgeType::Flow
                | EdgeType::ReverseFlow
                | EdgeType::TaskToResource
                | EdgeType::ResourceToTask
        )
    }

    pub fn is_self_loop(self) -> bool {
        matches!(
            self,
            EdgeType::TaskSelfLoop | EdgeType::ResourceSelfLoop | EdgeType::PoolSelfLoop
        )
    }

    /// The type of the reversed edge, for the types that come in pairs.
    pub fn reverse(self) -> Option<EdgeType> {
        match self {
            EdgeType::Precedence => Some(EdgeType::ReversePrecedence),
            EdgeType::ReversePrecedence => Some(EdgeType::Precedence),
            EdgeType::Flow => Some(EdgeType::ReverseFlow),
            EdgeType::ReverseFlow => Some(EdgeType::Flow),
            EdgeType::TaskToResource => Some(EdgeType::ResourceToTask),
            EdgeType::ResourceToTask => Some(EdgeType::TaskToResource),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Task,
    Resource,
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFeatures {
    pub affected: u8,
    pub selectable: u8,
    pub past: u8,
    /// -1 for the source, 1 for the sink, 0 otherwise.
    #[serde(rename = "type")]
    pub kind: i8,
    /// `[min, max, mode]` over the largest max duration.
    pub norm_duration: [f64; 3],
    /// Completion dates `[min, max, mode]` over the same normalizer; 0 for
    /// unscheduled tasks.
    pub norm_tct: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Task or resource id; absent for the pool node.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub id: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub features: Option<TaskFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "type")]
    pub kind: EdgeType,
    pub src: usize,
    pub dst: usize,
    pub attr: Vec<f64>,
}

impl Edge {
    fn sort_key_cmp(&self, other: &Edge) -> Ordering {
        (self.kind, self.src, self.dst)
            .cmp(&(other.kind, other.src, other.dst))
            .then_with(|| {
                self.attr
                    .iter()
                    .zip(&other.attr)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or_else(|| self.attr.len().cmp(&other.attr.len()))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsGraph {
    pub version: u32,
    pub num_tasks: usize,
    pub num_resources: usize,
    pub nodes: Vec<Node>,
    /// Sorted by `(type, src, dst, attr)`.
    pub edges: Vec<Edge>,
    /// One entry per task node: true iff the task is an eligible action.
    pub mask: Vec<bool>,
}

impl ObsGraph {
    pub fn resource_node(&self, r: usize) -> usize {
        self.num_tasks + r
    }

    pub fn pool_node(&self) -> usize {
        self.num_tasks + self.num_resources
    }

    pub fn task_features(&self, t: TaskId) -> &TaskFeatures {
        self.nodes[t].features.as_ref().expect("task node")
    }

    pub fn edges_of(&self, kind: EdgeType) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    /// Number of edges of each type.
    pub fn edge_histogram(&self) -> BTreeMap<EdgeType, usize> {
        let mut h = BTreeMap::new();
        for e in &self.edges {
            *h.entry(e.kind).or_insert(0) += 1;
        }
        h
    }
}

/// Builds the observation of `state`. The state must carry the min / max /
/// mode channels derived from `triples`.
pub fn build_observation(
    state: &FlowState,
    instance: &Instance,
    triples: &[DurationTriple],
) -> ObsGraph {
    assert_eq!(
        state.num_channels(),
        3,
        "observation needs min/max/mode channels"
    );
    let n = instance.num_tasks();
    let m = instance.num_resources();
    let pool = n + m;
    let (alpha, omega) = (instance.source(), instance.sink());

    let horizon = triples.iter().map(|t| t.max).max().unwrap_or(0).max(1) as f64;
    let mask: Vec<bool> = (0..n).map(|t| state.is_eligible(instance, t)).collect();
    let past: Vec<bool> = (0..n)
        .map(|t| state.is_scheduled(t) && !state.has_open_flow(t))
        .collect();

    let mut nodes = Vec::with_capacity(n + m + 1);
    for t in 0..n {
        let scheduled = state.is_scheduled(t);
        let tr = triples[t];
        let tct = |ch: usize| state.end(ch, t).map_or(0.0, |e| e as f64 / horizon);
        nodes.push(Node {
            kind: NodeKind::Task,
            id: Some(t),
            features: Some(TaskFeatures {
                affected: scheduled as u8,
                selectable: mask[t] as u8,
                past: past[t] as u8,
                kind: if t == alpha {
                    -1
                } else if t == omega {
                    1
                } else {
                    0
                },
                norm_duration: [
                    tr.min as f64 / horizon,
                    tr.max as f64 / horizon,
                    tr.mode as f64 / horizon,
                ],
                norm_tct: [tct(0), tct(1), tct(2)],
            }),
        });
    }
    for r in 0..m {
        nodes.push(Node {
            kind: NodeKind::Resource,
            id: Some(r),
            features: None,
        });
    }
    nodes.push(Node {
        kind: NodeKind::Pool,
        id: None,
        features: None,
    });

    let mut edges = Vec::new();
    let mut pair = |kind: EdgeType, src: usize, dst: usize, attr: Vec<f64>| {
        let rev = kind.reverse().expect("paired edge type");
        edges.push(Edge {
            kind: rev,
            src: dst,
            dst: src,
            attr: attr.clone(),
        });
        edges.push(Edge {
            kind,
            src,
            dst,
            attr,
        });
    };

    for (a, b) in instance.arcs() {
        if !past[a] && !past[b] {
            pair(EdgeType::Precedence, a, b, Vec::new());
        }
    }

    // (resource, src, dst, units) -> channels carrying that arc
    let mut flows: BTreeMap<(usize, TaskId, TaskId, u32), [bool; 3]> = BTreeMap::new();
    for ch in 0..3 {
        for (r, ledger) in state.ledger(ch).resources.iter().enumerate() {
            for f in &ledger.flows {
                if !past[f.src] && !past[f.dst] {
                    flows.entry((r, f.src, f.dst, f.units)).or_default()[ch] = true;
                }
            }
        }
    }
    for ((r, src, dst, units), channels) in flows {
        let level = units as f64 / instance.capacity(r) as f64;
        let attr = vec![
            level,
            channels[0] as u8 as f64,
            channels[1] as u8 as f64,
            channels[2] as u8 as f64,
        ];
        pair(EdgeType::Flow, src, dst, attr);
    }

    for t in (0..n).filter(|&t| !state.is_scheduled(t)) {
        for r in 0..m {
            let c = instance.consumption(t, r);
            if c > 0 {
                let level = c as f64 / instance.capacity(r) as f64;
                pair(
                    EdgeType::TaskToResource,
                    t,
                    n + r,
                    vec![level, 1.0, 1.0, 1.0],
                );
            }
        }
    }

    for t in 0..n {
        edges.push(Edge {
            kind: EdgeType::TaskToPool,
            src: t,
            dst: pool,
            attr: Vec::new(),
        });
        edges.push(Edge {
            kind: EdgeType::TaskSelfLoop,
            src: t,
            dst: t,
            attr: Vec::new(),
        });
    }
    for r in 0..m {
        edges.push(Edge {
            kind: EdgeType::ResourceToPool,
            src: n + r,
            dst: pool,
            attr: Vec::new(),
        });
        edges.push(Edge {
            kind: EdgeType::ResourceSelfLoop,
            src: n + r,
            dst: n + r,
            attr: Vec::new(),
        });
    }
    edges.push(Edge {
        kind: EdgeType::PoolSelfLoop,
        src: pool,
        dst: pool,
        attr: Vec::new(),
    });
    edges.sort_by(Edge::sort_key_cmp);

    ObsGraph {
        version: OBSERVATION_VERSION,
        num_tasks: n,
        num_resources: m,
        nodes,
        edges,
        mask,
    }
}

/// Canonical JSON encoding. Serializing the same graph always yields the
/// same bytes.
pub fn serialize(obs: &ObsGraph) -> Vec<u8> {
    serde_json::to_vec(obs).expect("observation graphs always serialize")
}

pub fn deserialize(bytes: &[u8]) -> serde_json::Result<ObsGraph> {
    serde_json::from_slice(bytes)
}
