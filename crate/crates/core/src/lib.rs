//! Stochastic resource-constrained project scheduling on resource-flow
//! networks.
//!
//! The crate parses PSPLib single-mode instances, builds partial schedules by
//! inserting tasks into a resource-flow network, derives and samples
//! uncertain durations, evaluates priority rules over sampled scenarios,
//! exports a typed graph observation of any partial schedule and serves the
//! whole process as a reset/step environment over newline-delimited JSON.

pub mod bench;
pub mod dataset;
pub mod env;
pub mod flow;
pub mod generate;
pub mod instance;
pub mod observation;
pub mod psplib;
pub mod samples;
pub mod ssgs;
pub mod uncertainty;

pub use flow::{DurationChannels, FlowState, Schedule};
pub use instance::{Instance, Resource, Task, TaskId, Time};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/instances.md")]
    mod instances {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/observation.md")]
    mod observation {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
