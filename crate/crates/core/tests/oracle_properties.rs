use itertools::Itertools;
use rand::Rng as _;

use lazysp::graph::ExplicitGraph;
use lazysp::oracle::{
    approx_oracle_action, exact_cover_value, ClairvoyantSolver, CoverInstance, OracleSelector, DEFAULT_PATH_CAP,
};
use lazysp::rng::{self, Rng};
use lazysp::search::{goal_test, run_lazysp, GoalTest, SearchState};
use lazysp::selectors::{Baseline, SelectorSpec};
use lazysp::world::World;

fn random_graph(r: &mut Rng, n: usize, m: usize) -> ExplicitGraph {
    loop {
        let mut edges = Vec::with_capacity(m);
        for v in 1..n {
            edges.push((r.gen_range(0..v), v, r.gen_range(0.1..2.0)));
        }
        while edges.len() < m {
            let u = r.gen_range(0..n);
            let v = r.gen_range(0..n);
            if u != v {
                edges.push((u, v, r.gen_range(0.1..2.0)));
            }
        }
        if let Ok(g) = ExplicitGraph::new(n, &edges, 0, n - 1) {
            return g;
        }
    }
}

/// A small graph and a feasible world with some invalid edges.
fn instance(r: &mut Rng) -> (ExplicitGraph, World) {
    loop {
        let n = r.gen_range(4..=6);
        let m = r.gen_range(n + 2..=11);
        let g = random_graph(r, n, m);
        let w = World::new((0..g.num_edges()).map(|_| r.gen::<f64>() >= 0.4).collect());
        if w.is_feasible(&g) && !w.invalid_edges().is_empty() {
            return (g, w);
        }
    }
}

#[test]
fn oracle_rollout_wastes_no_valid_edge() {
    let mut r = rng::seeded(31);
    for _ in 0..300 {
        let (g, w) = instance(&mut r);
        let mut oracle = OracleSelector::new();
        let res = run_lazysp(&g, &w, &mut oracle).unwrap();
        let path = res.path.as_ref().expect("feasible world");
        let invalid = res.evaluations.iter().filter(|ev| !ev.valid).count();
        assert_eq!(res.num_evaluations(), invalid + path.len());
        for ev in res.evaluations.iter().filter(|ev| ev.valid) {
            assert!(path.contains(ev.edge));
        }
    }
}

#[test]
fn greedy_edge_in_a_minimum_cover_lowers_the_value_by_one() {
    let mut r = rng::seeded(32);
    let mut checked = 0;
    for _ in 0..300 {
        let (g, w) = instance(&mut r);
        let state = SearchState::new(g.num_edges());
        let cover = CoverInstance::build(&g, &state, &w, DEFAULT_PATH_CAP).unwrap();
        let value = cover.exact_value().unwrap();
        let greedy = cover.greedy();
        assert!(cover.is_cover(&greedy));
        let Some(&first) = greedy.first() else {
            assert_eq!(value, 0);
            continue;
        };
        let in_minimum = cover
            .candidates
            .iter()
            .copied()
            .filter(|&e| e != first)
            .combinations(value - 1)
            .any(|mut rest| {
                rest.push(first);
                cover.is_cover(&rest)
            });
        let mut next = state.clone();
        next.apply(first, false).unwrap();
        let after = exact_cover_value(&g, &next, &w).unwrap();
        assert!(after + 1 >= value);
        if in_minimum {
            assert_eq!(after + 1, value);
            checked += 1;
        }
    }
    assert!(checked > 100, "only {checked} informative instances");
}

/// Exact per-world optimum is a lower bound for every selector on that world.
#[test]
fn clairvoyant_optimum_dominates_every_selector_per_world() {
    let mut r = rng::seeded(33);
    let specs: Vec<SelectorSpec> = Baseline::ALL.iter().map(|&b| SelectorSpec::Baseline(b)).collect();
    for trial in 0..200 {
        let (g, w) = instance(&mut r);
        let best = ClairvoyantSolver::new(&g, &w)
            .value(&SearchState::new(g.num_edges()))
            .unwrap();
        let mut oracle = OracleSelector::new();
        let approx = run_lazysp(&g, &w, &mut oracle).unwrap().num_evaluations();
        assert!(best <= approx);
        for spec in &specs {
            let mut sel = spec.build(None, trial).unwrap();
            let n = run_lazysp(&g, &w, &mut sel).unwrap().num_evaluations();
            assert!(best <= n, "{}: {n} < optimum {best}", spec.name());
        }
    }
}

/// With the exact clairvoyant values as the oracle, the one-step advantage of
/// any action lies in `[1[a = a_OR] - 1, 0]` (rewards are negated costs).
#[test]
fn imitation_reduction_chain() {
    let mut r = rng::seeded(34);
    let mut decisions = 0;
    for trial in 0..150 {
        let (g, w) = instance(&mut r);
        let mut solver = ClairvoyantSolver::new(&g, &w);
        let mut state = SearchState::new(g.num_edges());
        let mut learner = SelectorSpec::Baseline(Baseline::Random).build(None, trial).unwrap();
        while let GoalTest::Pending(path) = goal_test(&g, &state) {
            let v = -(solver.value(&state).unwrap() as f64);
            let optimal: Vec<_> = lazysp::search::unevaluated_on(&path, &state)
                .into_iter()
                .filter(|&e| solver.action_value(&state, e).unwrap() as f64 == -v)
                .collect();
            let a = learner.select(&g, &path, &state).unwrap();
            let q = -(solver.action_value(&state, a).unwrap() as f64);
            let agrees = if optimal.contains(&a) { 1.0 } else { 0.0 };
            assert!(agrees - 1.0 <= q - v && q - v <= 0.0, "advantage {} at {:?}", q - v, state.codes());
            state.apply(a, w.is_valid(a)).unwrap();
            decisions += 1;
        }
    }
    assert!(decisions > 300);
}

#[test]
fn approx_oracle_picks_the_only_invalid_edge() {
    let mut r = rng::seeded(35);
    for _ in 0..200 {
        let (g, _) = instance(&mut r);
        let path = g.shortest_path(|_| false).unwrap();
        let target = path.edges[r.gen_range(0..path.len())];
        let world = World::with_invalid(g.num_edges(), &[target]);
        if !world.is_feasible(&g) {
            continue;
        }
        let state = SearchState::new(g.num_edges());
        assert_eq!(approx_oracle_action(&g, &state, &world).unwrap(), target);
    }
}
