//! The LazySP loop and its MDP view.
//!
//! A [`SearchState`] records which edges have been evaluated and with what
//! outcome. The action set at a state is the unevaluated edges of the current
//! lazy shortest path; the goal set is every state whose lazy shortest path is
//! fully verified.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph, Path};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeStatus {
    Unevaluated,
    Invalid,
    Valid,
}

impl EdgeStatus {
    /// `-1` unevaluated, `0` invalid, `1` valid.
    pub fn code(self) -> i8 {
        match self {
            EdgeStatus::Unevaluated => -1,
            EdgeStatus::Invalid => 0,
            EdgeStatus::Valid => 1,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            -1 => Some(EdgeStatus::Unevaluated),
            0 => Some(EdgeStatus::Invalid),
            1 => Some(EdgeStatus::Valid),
            _ => None,
        }
    }
}

/// Evaluation record `(E_valid, E_invalid)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SearchState {
    status: Vec<EdgeStatus>,
}

impl SearchState {
    pub fn new(num_edges: usize) -> Self {
        Self {
            status: vec![EdgeStatus::Unevaluated; num_edges],
        }
    }

    pub fn from_statuses(status: Vec<EdgeStatus>) -> Self {
        Self { status }
    }

    pub fn status(&self, e: EdgeId) -> EdgeStatus {
        self.status[e]
    }

    pub fn statuses(&self) -> &[EdgeStatus] {
        &self.status
    }

    pub fn num_edges(&self) -> usize {
        self.status.len()
    }

    pub fn is_evaluated(&self, e: EdgeId) -> bool {
        self.status[e] != EdgeStatus::Unevaluated
    }

    pub fn is_invalid(&self, e: EdgeId) -> bool {
        self.status[e] == EdgeStatus::Invalid
    }

    pub fn is_valid(&self, e: EdgeId) -> bool {
        self.status[e] == EdgeStatus::Valid
    }

    pub fn num_evaluated(&self) -> usize {
        self.status.iter().filter(|s| **s != EdgeStatus::Unevaluated).count()
    }

    pub fn valid_edges(&self) -> Vec<EdgeId> {
        self.edges_with(EdgeStatus::Valid)
    }

    pub fn invalid_edges(&self) -> Vec<EdgeId> {
        self.edges_with(EdgeStatus::Invalid)
    }

    pub fn evaluated_edges(&self) -> Vec<EdgeId> {
        (0..self.status.len()).filter(|&e| self.is_evaluated(e)).collect()
    }

    fn edges_with(&self, s: EdgeStatus) -> Vec<EdgeId> {
        (0..self.status.len()).filter(|&e| self.status[e] == s).collect()
    }

    /// The `{-1, 0, 1}` vector encoding.
    pub fn codes(&self) -> Vec<i8> {
        self.status.iter().map(|s| s.code()).collect()
    }

    /// Whether every evaluated edge agrees with `world`.
    pub fn consistent_with(&self, world: &World) -> bool {
        self.status.iter().enumerate().all(|(e, s)| match s {
            EdgeStatus::Unevaluated => true,
            EdgeStatus::Valid => world.is_valid(e),
            EdgeStatus::Invalid => !world.is_valid(e),
        })
    }

    /// Records the outcome of evaluating `e` in place.
    pub fn apply(&mut self, e: EdgeId, valid: bool) -> Result<()> {
        if self.is_evaluated(e) {
            return Err(Error::AlreadyEvaluated(e));
        }
        self.status[e] = if valid {
            EdgeStatus::Valid
        } else {
            EdgeStatus::Invalid
        };
        Ok(())
    }

    /// Lazy shortest path on the potentially valid graph `E \ E_invalid`.
    pub fn lazy_path(&self, graph: &ExplicitGraph) -> Option<Path> {
        graph.shortest_path(|e| self.is_invalid(e))
    }
}

/// Deterministic transition `Γ(s, a, φ)`.
pub fn transition(state: &SearchState, edge: EdgeId, world: &World) -> Result<SearchState> {
    let mut next = state.clone();
    next.apply(edge, world.is_valid(edge))?;
    Ok(next)
}

/// Unevaluated edges of the current lazy shortest path, in path order.
pub fn action_set(graph: &ExplicitGraph, state: &SearchState) -> Result<Vec<EdgeId>> {
    let path = state.lazy_path(graph).ok_or(Error::Infeasible)?;
    Ok(unevaluated_on(&path, state))
}

pub fn unevaluated_on(path: &Path, state: &SearchState) -> Vec<EdgeId> {
    path.edges
        .iter()
        .copied()
        .filter(|&e| !state.is_evaluated(e))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoalTest {
    /// The lazy shortest path is fully verified.
    Reached(Path),
    /// The lazy shortest path still has unevaluated edges.
    Pending(Path),
    /// No start-goal path survives the invalidated edges.
    Infeasible,
}

pub fn goal_test(graph: &ExplicitGraph, state: &SearchState) -> GoalTest {
    match state.lazy_path(graph) {
        None => GoalTest::Infeasible,
        Some(p) if p.edges.iter().all(|&e| state.is_valid(e)) => GoalTest::Reached(p),
        Some(p) => GoalTest::Pending(p),
    }
}

pub fn is_goal(graph: &ExplicitGraph, state: &SearchState) -> bool {
    matches!(goal_test(graph, state), GoalTest::Reached(_))
}

/// An edge-selection rule plugged into [`run_lazysp`].
pub trait EdgeSelector {
    /// Chooses an unevaluated edge on `path`.
    fn select(&mut self, graph: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId>;

    /// Called once before each episode. Only clairvoyant selectors look at the world.
    fn start_episode(&mut self, _world: &World) {}

    fn name(&self) -> String;
}

impl<S: EdgeSelector + ?Sized> EdgeSelector for Box<S> {
    fn select(&mut self, graph: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        (**self).select(graph, path, state)
    }

    fn start_episode(&mut self, world: &World) {
        (**self).start_episode(world)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub edge: EdgeId,
    pub valid: bool,
    /// Length of the lazy shortest path the edge was selected from.
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Verified shortest feasible path, or `None` when the world has none.
    pub path: Option<Path>,
    pub evaluations: Vec<Evaluation>,
    pub state: SearchState,
}

impl EpisodeResult {
    pub fn num_evaluations(&self) -> usize {
        self.evaluations.len()
    }

    /// `-|E_eval|`.
    pub fn reward(&self) -> i64 {
        -(self.evaluations.len() as i64)
    }

    pub fn is_feasible(&self) -> bool {
        self.path.is_some()
    }

    /// Serializes the trace as one JSON object per line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.evaluations {
            out.push_str(&serde_json::to_string(ev).expect("evaluation serializes"));
            out.push('\n');
        }
        out
    }
}

/// Runs LazySP on `world` starting from a fresh state.
pub fn run_lazysp<S: EdgeSelector + ?Sized>(
    graph: &ExplicitGraph,
    world: &World,
    selector: &mut S,
) -> Result<EpisodeResult> {
    run_lazysp_from(graph, world, selector, SearchState::new(graph.num_edges()))
}

/// Runs LazySP from an arbitrary (world-consistent) state.
pub fn run_lazysp_from<S: EdgeSelector + ?Sized>(
    graph: &ExplicitGraph,
    world: &World,
    selector: &mut S,
    mut state: SearchState,
) -> Result<EpisodeResult> {
    world.check_size(graph)?;
    selector.start_episode(world);
    let mut evaluations = Vec::new();
    loop {
        let path = match goal_test(graph, &state) {
            GoalTest::Reached(p) => {
                return Ok(EpisodeResult {
                    path: Some(p),
                    evaluations,
                    state,
                })
            }
            GoalTest::Infeasible => {
                return Ok(EpisodeResult {
                    path: None,
                    evaluations,
                    state,
                })
            }
            GoalTest::Pending(p) => p,
        };
        let edge = selector.select(graph, &path, &state)?;
        if !path.contains(edge) {
            return Err(Error::SelectorContract {
                edge,
                reason: "not on the current path",
            });
        }
        if state.is_evaluated(edge) {
            return Err(Error::SelectorContract {
                edge,
                reason: "already evaluated",
            });
        }
        let valid = world.is_valid(edge);
        state.apply(edge, valid)?;
        evaluations.push(Evaluation {
            edge,
            valid,
            path_length: path.length,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::diamond;
    use crate::selectors::{Baseline, BaselineSelector};

    #[test]
    fn fresh_diamond_action_set() {
        let g = diamond();
        let s = SearchState::new(4);
        assert_eq!(action_set(&g, &s).unwrap(), vec![0, 1]);
        let mut s2 = s.clone();
        s2.apply(0, true).unwrap();
        assert_eq!(action_set(&g, &s2).unwrap(), vec![1]);
        s2.apply(1, true).unwrap();
        assert!(action_set(&g, &s2).unwrap().is_empty());
    }

    #[test]
    fn action_set_infeasible() {
        let g = diamond();
        let s = SearchState::from_statuses(vec![EdgeStatus::Invalid; 4]);
        assert!(matches!(action_set(&g, &s), Err(Error::Infeasible)));
    }

    #[test]
    fn transition_definition() {
        let w1 = World::new(vec![true]);
        let w0 = World::new(vec![false]);
        let s = SearchState::new(1);
        let a = transition(&s, 0, &w1).unwrap();
        assert_eq!(a.valid_edges(), vec![0]);
        assert!(a.invalid_edges().is_empty());
        let b = transition(&s, 0, &w0).unwrap();
        assert_eq!(b.invalid_edges(), vec![0]);
        assert!(matches!(transition(&a, 0, &w1), Err(Error::AlreadyEvaluated(0))));
    }

    #[test]
    fn goal_tests() {
        let g = diamond();
        let mut s = SearchState::new(4);
        assert!(!is_goal(&g, &s));
        s.apply(0, true).unwrap();
        s.apply(1, true).unwrap();
        assert!(is_goal(&g, &s));
        let dead = SearchState::from_statuses(vec![EdgeStatus::Invalid; 4]);
        assert_eq!(goal_test(&g, &dead), GoalTest::Infeasible);
        assert!(!is_goal(&g, &dead));
    }

    #[test]
    fn forward_on_all_valid_diamond() {
        let g = diamond();
        let w = World::all_valid(4);
        let r = run_lazysp(&g, &w, &mut BaselineSelector::new(Baseline::Forward, 0)).unwrap();
        assert_eq!(r.path.as_ref().unwrap().vertices, vec![0, 1, 3]);
        assert_eq!(r.reward(), -2);
    }

    #[test]
    fn forward_with_blocked_a_g() {
        let g = diamond();
        let w = World::new(vec![true, false, true, true]);
        let r = run_lazysp(&g, &w, &mut BaselineSelector::new(Baseline::Forward, 0)).unwrap();
        let trace: Vec<_> = r.evaluations.iter().map(|e| (e.edge, e.valid)).collect();
        assert_eq!(trace, vec![(0, true), (1, false), (2, true), (3, true)]);
        assert_eq!(r.reward(), -4);
        assert_eq!(r.path.unwrap().vertices, vec![0, 2, 3]);
    }

    #[test]
    fn single_path_costs_every_edge() {
        let k = 5;
        let edges: Vec<_> = (0..k).map(|i| (i, i + 1, 1.0 + i as f64)).collect();
        let g = ExplicitGraph::new(k + 1, &edges, 0, k).unwrap();
        let w = World::all_valid(k);
        for b in Baseline::ALL {
            let r = run_lazysp(&g, &w, &mut BaselineSelector::new(b, 3)).unwrap();
            assert_eq!(r.reward(), -(k as i64));
        }
    }

    #[test]
    fn infeasible_world_terminates() {
        let g = diamond();
        let w = World::new(vec![false; 4]);
        let r = run_lazysp(&g, &w, &mut BaselineSelector::new(Baseline::Forward, 0)).unwrap();
        assert!(!r.is_feasible());
        assert_eq!(r.num_evaluations(), 2);
    }

    struct Rogue;
    impl EdgeSelector for Rogue {
        fn select(&mut self, _: &ExplicitGraph, _: &Path, _: &SearchState) -> Result<EdgeId> {
            Ok(2)
        }
        fn name(&self) -> String {
            "rogue".into()
        }
    }

    #[test]
    fn off_path_selection_is_rejected() {
        let g = diamond();
        let w = World::all_valid(4);
        assert!(matches!(
            run_lazysp(&g, &w, &mut Rogue),
            Err(Error::SelectorContract { edge: 2, .. })
        ));
    }

    #[test]
    fn trace_is_jsonl() {
        let g = diamond();
        let w = World::all_valid(4);
        let r = run_lazysp(&g, &w, &mut BaselineSelector::new(Baseline::Forward, 0)).unwrap();
        let lines: Vec<_> = r.trace_jsonl().lines().map(String::from).collect();
        assert_eq!(lines.len(), 2);
        let ev: Evaluation = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(ev.edge, 0);
        assert_eq!(ev.path_length, 2.0);
    }
}
