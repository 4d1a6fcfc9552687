//! Small hand-written projects used by tests, docs and the guide.

use crate::instance::{Instance, Resource, Task, Time};

/// Eight-task project on one resource of capacity 4.
///
/// | id | name | duration | consumption |
/// |----|------|----------|-------------|
/// | 0  | α    | 0        | 0           |
/// | 1  | A    | 4        | 2           |
/// | 2  | B    | 2        | 1           |
/// | 3  | C    | 5        | 3           |
/// | 4  | D    | 6        | 1           |
/// | 5  | E    | 4        | 1           |
/// | 6  | F    | 4        | 1           |
/// | 7  | ω    | 0        | 0           |
///
/// Precedences: α→A, α→B, A→F, B→C, B→D, B→E, C→F, D→ω, E→ω, F→ω.
pub fn toy_project() -> Instance {
    let table: [(Time, u32); 8] = [
        (0, 0),
        (4, 2),
        (2, 1),
        (5, 3),
        (6, 1),
        (4, 1),
        (4, 1),
        (0, 0),
    ];
    let tasks = table.iter().map(|&(d, c)| Task::new(d, vec![c])).collect();
    Instance::new(
        tasks,
        vec![Resource { capacity: 4 }],
        [
            (0, 1),
            (0, 2),
            (1, 6),
            (2, 3),
            (2, 4),
            (2, 5),
            (3, 6),
            (4, 7),
            (5, 7),
            (6, 7),
        ],
    )
    .expect("toy project is well formed")
}

/// Display names for the toy project's task ids.
pub const TOY_NAMES: [&str; 8] = ["α", "A", "B", "C", "D", "E", "F", "ω"];

/// Source directly followed by sink, one resource of capacity 1.
pub fn empty_project() -> Instance {
    Instance::new(
        vec![Task::new(0, vec![0]), Task::new(0, vec![0])],
        vec![Resource { capacity: 1 }],
        [(0, 1)],
    )
    .expect("empty project is well formed")
}

/// A single chain `source -> 1 -> 2 -> ... -> sink` where each inner task
/// takes the given duration and one unit of a capacity-1 resource.
pub fn chain(durations: &[Time]) -> Instance {
    let n = durations.len() + 2;
    let mut tasks = vec![Task::new(0, vec![0])];
    tasks.extend(durations.iter().map(|&d| Task::new(d, vec![1])));
    tasks.push(Task::new(0, vec![0]));
    Instance::new(
        tasks,
        vec![Resource { capacity: 1 }],
        (0..n - 1).map(|t| (t, t + 1)),
    )
    .expect("chain is well formed")
}
