mod common;

use std::sync::Arc;

use flowsched::bench::{self, Method, ScenarioConfig};
use flowsched::dataset::{split_names, SplitConfig};
use flowsched::flow::{replay_with_durations, DurationChannels, FlowState};
use flowsched::generate::{random_instance_seeded, GeneratorConfig};
use flowsched::instance::{Instance, TaskId, Time};
use flowsched::psplib::{parse_psplib, write_psplib};
use flowsched::ssgs::{check_schedule, rule_rollout, Rule};
use flowsched::uncertainty::{
    derive_triples, sample_scenario_with, DistributionKind, DurationTriple, Factor,
    UncertaintyModel,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{eligible, oracle_schedule, oracle_violations, random_order, units};

fn small() -> GeneratorConfig {
    GeneratorConfig {
        tasks: 2..=25,
        resources: 1..=3,
        ..GeneratorConfig::default()
    }
}

fn instance_and_order(seed: u64) -> (Instance, Vec<TaskId>) {
    let instance = random_instance_seeded(&small(), seed);
    let order = random_order(&instance, &mut ChaCha8Rng::seed_from_u64(!seed));
    (instance, order)
}

fn factor() -> impl Strategy<Value = (u64, u64)> {
    (0u64..=100, 100u64..=300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn engine_matches_oracle(seed in any::<u64>(), dseed in any::<u64>()) {
        let (instance, order) = instance_and_order(seed);
        let triples = derive_triples(&instance, &UncertaintyModel::default());
        let durations = sample_scenario_with(&triples, DistributionKind::Triangular, dseed).realized;
        let engine = replay_with_durations(&instance, &order, &durations).unwrap();
        let (start, makespan) = oracle_schedule(&instance, &order, &durations);
        prop_assert_eq!(engine.start, start);
        prop_assert_eq!(engine.makespan, makespan);
    }

    #[test]
    fn every_order_is_feasible(seed in any::<u64>()) {
        let (instance, order) = instance_and_order(seed);
        let d = instance.durations();
        let s = replay_with_durations(&instance, &order, &d).unwrap();
        prop_assert!(check_schedule(&instance, &s, &d).is_feasible());
        prop_assert!(oracle_violations(&instance, &s.start, &d).is_empty());
        for (a, b) in instance.arcs() {
            prop_assert!(s.start[b] >= s.start[a] + d[a]);
        }
    }

    #[test]
    fn units_are_conserved_at_every_step(seed in any::<u64>()) {
        let (instance, order) = instance_and_order(seed);
        let triples = derive_triples(&instance, &UncertaintyModel::default());
        let mut state = FlowState::initial(&instance, &triples);
        for &t in &order[1..] {
            state.insert_task(&instance, t).unwrap();
            for ch in 0..3 {
                for r in 0..instance.num_resources() {
                    let l = state.ledger(ch).resource(r);
                    let open: u64 = l.open.iter().map(|o| o.units as u64).sum();
                    prop_assert_eq!(open, instance.capacity(r) as u64);
                    for &u in state.order() {
                        let inflow: u64 = l.flows.iter().filter(|f| f.dst == u).map(|f| f.units as u64).sum();
                        let outflow: u64 = l.flows.iter().filter(|f| f.src == u).map(|f| f.units as u64).sum();
                        let held: u64 = l.open.iter().filter(|o| o.task == u).map(|o| o.units as u64).sum();
                        let expected_in = if u == instance.source() { 0 } else { units(&instance, u, r) as u64 };
                        prop_assert_eq!(inflow, expected_in);
                        // what a task received is either passed on or still held
                        let supply = if u == instance.source() { instance.capacity(r) as u64 } else { inflow };
                        prop_assert_eq!(outflow + held, supply);
                    }
                }
            }
        }
    }

    #[test]
    fn flow_sources_end_before_their_targets(seed in any::<u64>()) {
        let (instance, order) = instance_and_order(seed);
        let triples = derive_triples(&instance, &UncertaintyModel::default());
        let mut state = FlowState::initial(&instance, &triples);
        for &t in &order[1..] {
            state.insert_task(&instance, t).unwrap();
        }
        for ch in 0..3 {
            for r in 0..instance.num_resources() {
                for f in &state.ledger(ch).resource(r).flows {
                    prop_assert!(state.end(ch, f.src).unwrap() <= state.start(ch, f.dst).unwrap());
                }
            }
        }
    }

    #[test]
    fn engine_mask_matches_oracle(seed in any::<u64>(), k in 0usize..30) {
        let (instance, order) = instance_and_order(seed);
        let mut state = FlowState::new(&instance, DurationChannels::single(instance.durations()));
        for &t in order.iter().skip(1).take(k) {
            state.insert_task(&instance, t).unwrap();
        }
        let scheduled: Vec<bool> = (0..instance.num_tasks()).map(|t| state.is_scheduled(t)).collect();
        prop_assert_eq!(state.eligible_actions(&instance), eligible(&instance, &scheduled));
    }

    #[test]
    fn rejected_insert_leaves_state_untouched(seed in any::<u64>()) {
        let (instance, _) = instance_and_order(seed);
        let state = FlowState::new(&instance, DurationChannels::single(instance.durations()));
        let before = state.dump();
        let mut probe = state.clone();
        for t in 0..instance.num_tasks() {
            if !state.is_eligible(&instance, t) {
                prop_assert!(probe.insert_task(&instance, t).is_err());
                prop_assert_eq!(probe.dump(), before.clone());
            }
        }
    }

    #[test]
    fn rollout_ties_go_to_lowest_index(seed in any::<u64>()) {
        // equal keys everywhere: SPT and LPT degrade to "lowest eligible id"
        let instance = random_instance_seeded(&small(), seed);
        let triples: Vec<DurationTriple> = (0..instance.num_tasks()).map(|_| DurationTriple::degenerate(3)).collect();
        let d = instance.durations();
        let (spt, _) = rule_rollout(Rule::Spt, &instance, &triples, &d).unwrap();
        let (lpt, _) = rule_rollout(Rule::Lpt, &instance, &triples, &d).unwrap();
        let mut scheduled = vec![false; instance.num_tasks()];
        scheduled[0] = true;
        let mut expected = vec![0];
        while expected.len() < instance.num_tasks() {
            let t = eligible(&instance, &scheduled)[0];
            scheduled[t] = true;
            expected.push(t);
        }
        prop_assert_eq!(spt.as_slice(), expected.as_slice());
        prop_assert_eq!(lpt.as_slice(), expected.as_slice());
    }

    #[test]
    fn rollouts_are_deterministic(seed in any::<u64>()) {
        let instance = random_instance_seeded(&small(), seed);
        let triples = derive_triples(&instance, &UncertaintyModel::default());
        let mode: Vec<Time> = triples.iter().map(|t| t.mode).collect();
        for rule in Rule::ALL {
            prop_assert_eq!(
                rule_rollout(rule, &instance, &triples, &mode).unwrap(),
                rule_rollout(rule, &instance, &triples, &mode).unwrap()
            );
        }
    }

    #[test]
    fn samples_respect_their_bounds(seed in any::<u64>(), d in 0u64..200, (ln, hn) in factor(), uniform in any::<bool>()) {
        let model = UncertaintyModel::new(Factor::new(ln, 100), Factor::new(hn, 100), DistributionKind::Triangular).unwrap();
        let instance = flowsched::samples::chain(&[d, d / 2 + 1]);
        let triples = derive_triples(&instance, &model);
        let kind = if uniform { DistributionKind::Uniform } else { DistributionKind::Triangular };
        let s = sample_scenario_with(&triples, kind, seed);
        for (t, tr) in triples.iter().enumerate() {
            prop_assert!(tr.min <= tr.mode && tr.mode <= tr.max);
            prop_assert!(tr.min <= s.realized[t] && s.realized[t] <= tr.max);
        }
        prop_assert_eq!(s.realized[0], 0);
        prop_assert_eq!(*s.realized.last().unwrap(), 0);
    }

    #[test]
    fn derivation_is_monotone_in_factors(d in 0u64..500, (l1, h1) in factor(), (l2, h2) in factor()) {
        let tri = |l: u64, h: u64| {
            let m = UncertaintyModel::new(Factor::new(l, 100), Factor::new(h, 100), DistributionKind::Triangular).unwrap();
            derive_triples(&flowsched::samples::chain(&[d]), &m)[1]
        };
        let (a, b) = (tri(l1, h1), tri(l2, h2));
        if l1 <= l2 { prop_assert!(a.min <= b.min); }
        if h1 <= h2 { prop_assert!(a.max <= b.max); }
        prop_assert_eq!(a.mode, d);
    }

    #[test]
    fn factor_text_round_trips(n in 0u64..10_000, dexp in 0u32..5) {
        let f = Factor::new(n, 10u64.pow(dexp));
        prop_assert_eq!(f.to_string().parse::<Factor>().unwrap(), f);
    }

    #[test]
    fn psplib_and_canonical_round_trip(seed in any::<u64>()) {
        let instance = random_instance_seeded(&small(), seed);
        prop_assert_eq!(&parse_psplib(&write_psplib(&instance)).unwrap(), &instance);
        prop_assert_eq!(&Instance::from_canonical(&instance.to_canonical()).unwrap(), &instance);
    }

    #[test]
    fn gap_is_monotone_in_solution(best in 1.0f64..1000.0, a in 1.0f64..1000.0, b in 1.0f64..1000.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bench::gap(lo, best).unwrap() <= bench::gap(hi, best).unwrap());
        prop_assert_eq!(bench::gap(a, a).unwrap(), 0.0);
    }

    #[test]
    fn split_is_a_partition(seed in any::<u64>(), cells in 2usize..20, per in 1usize..8, held in 0usize..3) {
        prop_assume!(held < cells);
        let names: Vec<String> = (0..cells).flat_map(|c| (0..per).map(move |i| format!("c{c}_{i}.sm"))).collect();
        let s = split_names(&names, &SplitConfig { seed, ukn_cells: held, train_fraction: 0.8 }).unwrap();
        let mut all: Vec<String> = s.train.iter().chain(&s.usn).chain(&s.ukn).cloned().collect();
        all.sort();
        let mut expected = names.clone();
        expected.sort();
        prop_assert_eq!(all, expected);
        prop_assert_eq!(s.ukn.len(), held * per);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rules_always_solve_every_cell(seed in any::<u64>()) {
        let set: Vec<(String, Arc<Instance>)> = (0..3)
            .map(|i| (format!("i{i}"), Arc::new(random_instance_seeded(&small(), seed.wrapping_add(i)))))
            .collect();
        let methods: Vec<Method> = Rule::ALL.iter().map(|&r| Method::Rule(r)).collect();
        let config = ScenarioConfig { count: 5, base_seed: seed, model: UncertaintyModel::default() };
        let eval = bench::evaluate(&set, &methods, &config);
        for row in bench::aggregate(&eval, None) {
            prop_assert_eq!(row.coverage, 100.0);
            prop_assert!(row.mean_gap.unwrap() >= 0.0);
        }
        // aggregate mean equals the mean of the per-scenario rows
        let again = bench::recompute_means(&eval.rows);
        for row in bench::aggregate(&eval, None) {
            prop_assert_eq!(again[&row.method].map(f64::to_bits), row.mean_makespan.map(f64::to_bits));
        }
    }
}
