//! Seeded random instance generator for property tests and synthetic
//! benchmark sets.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{Instance, Resource, Task, Time};

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Total number of tasks, source and sink included. At least 2.
    pub tasks: RangeInclusive<usize>,
    pub resources: RangeInclusive<usize>,
    pub max_capacity: u32,
    pub max_duration: Time,
    /// Probability that an earlier inner task becomes a direct predecessor.
    pub arc_probability: f64,
    /// Probability that an inner task uses a given resource.
    pub consumption_probability: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            tasks: 5..=40,
            resources: 1..=4,
            max_capacity: 10,
            max_duration: 10,
            arc_probability: 0.2,
            consumption_probability: 0.6,
        }
    }
}

/// Draws one valid instance. Every inner task has at least one positive
/// consumption and is linked to the source and sink through the DAG.
pub fn random_instance<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Instance {
    let n = rng.random_range(config.tasks.clone()).max(2);
    let m = rng.random_range(config.resources.clone()).max(1);
    let capacities: Vec<u32> = (0..m)
        .map(|_| rng.random_range(1..=config.max_capacity.max(1)))
        .collect();
    let sink = n - 1;

    let mut tasks = vec![Task::new(0, vec![0; m])];
    let mut arcs = Vec::new();
    let mut has_successor = vec![false; n];
    for t in 1..sink {
        let duration = rng.random_range(0..=config.max_duration);
        let mut consumption: Vec<u32> = capacities
            .iter()
            .map(|&cap| {
                if rng.random_bool(config.consumption_probability) {
                    rng.random_range(1..=cap)
                } else {
                    0
                }
            })
            .collect();
        if consumption.iter().all(|&c| c == 0) {
            let r = rng.random_range(0..m);
            consumption[r] = rng.random_range(1..=capacities[r]);
        }
        tasks.push(Task::new(duration, consumption));

        let mut linked = false;
        for p in 1..t {
            if rng.random_bool(config.arc_probability) {
                arcs.push((p, t));
                has_successor[p] = true;
                linked = true;
            }
        }
        if !linked {
            arcs.push((0, t));
        }
    }
    tasks.push(Task::new(0, vec![0; m]));
    for t in 1..sink {
        if !has_successor[t] {
            arcs.push((t, sink));
        }
    }
    if n == 2 {
        arcs.push((0, 1));
    }
    Instance::new(
        tasks,
        capacities
            .into_iter()
            .map(|capacity| Resource { capacity })
            .collect(),
        arcs,
    )
    .expect("generated instance is well formed")
}

/// Convenience wrapper seeding a ChaCha generator.
pub fn random_instance_seeded(config: &GeneratorConfig, seed: u64) -> Instance {
    random_instance(config, &mut ChaCha8Rng::seed_from_u64(seed))
}
