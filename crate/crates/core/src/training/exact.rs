//! Exact dynamic programming on small graphs with a finite world support.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph};
use crate::search::{goal_test, run_lazysp, unevaluated_on, EdgeSelector, GoalTest, SearchState};
use crate::world::World;

use super::qlearning::check_tabular;

/// Bayes-optimal selection over a known support: the belief at each state is
/// the support restricted to the worlds consistent with it.
pub struct ExactSolver<'a> {
    graph: &'a ExplicitGraph,
    support: &'a [(World, f64)],
    memo: HashMap<SearchState, f64>,
}

impl<'a> ExactSolver<'a> {
    pub fn new(graph: &'a ExplicitGraph, support: &'a [(World, f64)]) -> Result<Self> {
        check_tabular(graph)?;
        for (w, _) in support {
            w.check_size(graph)?;
        }
        Ok(Self {
            graph,
            support,
            memo: HashMap::new(),
        })
    }

    fn belief(&self, state: &SearchState) -> Vec<(usize, f64)> {
        self.support
            .iter()
            .enumerate()
            .filter(|(_, (w, p))| *p > 0.0 && state.consistent_with(w))
            .map(|(i, (_, p))| (i, *p))
            .collect()
    }

    /// Expected remaining evaluations under the optimal policy.
    pub fn value(&mut self, state: &SearchState) -> Result<f64> {
        if let Some(&v) = self.memo.get(state) {
            return Ok(v);
        }
        let path = match goal_test(self.graph, state) {
            GoalTest::Pending(p) => p,
            _ => return Ok(0.0),
        };
        let mut best = f64::INFINITY;
        for e in unevaluated_on(&path, state) {
            best = best.min(self.action_value(state, e)?);
        }
        self.memo.insert(state.clone(), best);
        Ok(best)
    }

    /// Expected remaining evaluations after taking `edge`, then acting
    /// optimally. Errors when no support world is consistent with `state`.
    pub fn action_value(&mut self, state: &SearchState, edge: EdgeId) -> Result<f64> {
        let belief = self.belief(state);
        let total: f64 = belief.iter().map(|(_, p)| p).sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution(
                "state has no consistent world in the support".into(),
            ));
        }
        let mut p_valid = 0.0;
        for &(i, p) in &belief {
            if self.support[i].0.is_valid(edge) {
                p_valid += p;
            }
        }
        let p_valid = p_valid / total;
        let mut v = 1.0;
        for (valid, p) in [(true, p_valid), (false, 1.0 - p_valid)] {
            if p > 0.0 {
                let mut next = state.clone();
                next.apply(edge, valid)?;
                v += p * self.value(&next)?;
            }
        }
        Ok(v)
    }

    /// Optimal expected number of evaluations from a fresh state.
    pub fn optimal_expected_evaluations(&mut self) -> Result<f64> {
        self.value(&SearchState::new(self.graph.num_edges()))
    }

    /// Optimal actions at `state` (within `tol` of the best value), in path order.
    pub fn optimal_actions(&mut self, state: &SearchState, tol: f64) -> Result<Vec<EdgeId>> {
        let path = match goal_test(self.graph, state) {
            GoalTest::Pending(p) => p,
            _ => return Ok(Vec::new()),
        };
        let mut vals = Vec::new();
        for e in unevaluated_on(&path, state) {
            vals.push((e, self.action_value(state, e)?));
        }
        let best = vals.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        Ok(vals
            .into_iter()
            .filter(|(_, v)| *v <= best + tol)
            .map(|(e, _)| e)
            .collect())
    }

    /// Non-terminal states reachable from the fresh state under some policy
    /// and some support world.
    pub fn reachable_states(&self) -> Vec<SearchState> {
        let mut seen = HashMap::new();
        let mut stack = vec![SearchState::new(self.graph.num_edges())];
        let mut out = Vec::new();
        while let Some(s) = stack.pop() {
            if seen.insert(s.clone(), ()).is_some() {
                continue;
            }
            let path = match goal_test(self.graph, &s) {
                GoalTest::Pending(p) => p,
                _ => continue,
            };
            let belief = self.belief(&s);
            if belief.is_empty() {
                continue;
            }
            for e in unevaluated_on(&path, &s) {
                for &(i, _) in &belief {
                    let mut next = s.clone();
                    next.apply(e, self.support[i].0.is_valid(e)).expect("unevaluated edge");
                    stack.push(next);
                }
            }
            out.push(s);
        }
        out.sort_by_key(|s| s.codes());
        out
    }
}

/// Expected evaluations of a deterministic selector: one episode per support
/// world, weighted by its probability.
pub fn expected_evaluations<S: EdgeSelector + ?Sized>(
    graph: &ExplicitGraph,
    support: &[(World, f64)],
    selector: &mut S,
) -> Result<f64> {
    let mut total = 0.0;
    for (w, p) in support {
        if *p > 0.0 {
            total += p * run_lazysp(graph, w, selector)?.num_evaluations() as f64;
        }
    }
    Ok(total)
}

/// Expected evaluations of the uniformly random selector, by enumerating its
/// choices on each support world.
pub fn random_expected_evaluations(graph: &ExplicitGraph, support: &[(World, f64)]) -> Result<f64> {
    check_tabular(graph)?;
    let mut total = 0.0;
    for (w, p) in support {
        if *p > 0.0 {
            let mut memo = HashMap::new();
            total += p * random_from(graph, w, SearchState::new(graph.num_edges()), &mut memo)?;
        }
    }
    Ok(total)
}

fn random_from(
    graph: &ExplicitGraph,
    world: &World,
    state: SearchState,
    memo: &mut HashMap<SearchState, f64>,
) -> Result<f64> {
    if let Some(&v) = memo.get(&state) {
        return Ok(v);
    }
    let path = match goal_test(graph, &state) {
        GoalTest::Pending(p) => p,
        _ => return Ok(0.0),
    };
    let actions = unevaluated_on(&path, &state);
    let mut v = 0.0;
    for &e in &actions {
        let mut next = state.clone();
        next.apply(e, world.is_valid(e))?;
        v += 1.0 + random_from(graph, world, next, memo)?;
    }
    v /= actions.len() as f64;
    memo.insert(state, v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::diamond;
    use crate::selectors::{Baseline, BaselineSelector};
    use crate::world::{env1_distribution, env2_distribution};
    use approx::assert_abs_diff_eq;

    fn support(d: &crate::world::WorldDistribution) -> Vec<(World, f64)> {
        d.support().unwrap().to_vec()
    }

    #[test]
    fn env_baselines_match_hand_computation() {
        let (g1, d1) = env1_distribution();
        let s1 = support(&d1);
        let (g2, d2) = env2_distribution();
        let s2 = support(&d2);
        let cases = [
            (&g1, &s1, Baseline::Forward, 4.5125),
            (&g1, &s1, Baseline::Backward, 4.3625),
            (&g1, &s1, Baseline::Alternate, 3.8125),
            (&g2, &s2, Baseline::Forward, 6.0),
            (&g2, &s2, Baseline::Backward, 5.8),
            (&g2, &s2, Baseline::Alternate, 5.4),
        ];
        for (g, s, b, want) in cases {
            let got = expected_evaluations(g, s, &mut BaselineSelector::new(b, 0)).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn optimum_values() {
        let (g1, d1) = env1_distribution();
        let s1 = support(&d1);
        assert_abs_diff_eq!(
            ExactSolver::new(&g1, &s1).unwrap().optimal_expected_evaluations().unwrap(),
            3.8125,
            epsilon = 1e-9
        );
        let (g2, d2) = env2_distribution();
        let s2 = support(&d2);
        let mut solver = ExactSolver::new(&g2, &s2).unwrap();
        assert_abs_diff_eq!(solver.optimal_expected_evaluations().unwrap(), 5.0, epsilon = 1e-9);
        let tl = g2.edge_by_label("top_left").unwrap();
        assert_eq!(solver.optimal_actions(&SearchState::new(g2.num_edges()), 1e-9).unwrap(), vec![tl]);
    }

    #[test]
    fn single_world_optimum_is_clairvoyant() {
        let g = diamond();
        let w = World::new(vec![true, false, true, true]);
        let s = vec![(w.clone(), 1.0)];
        let v = ExactSolver::new(&g, &s).unwrap().optimal_expected_evaluations().unwrap();
        let c = crate::oracle::ClairvoyantSolver::new(&g, &w).value(&SearchState::new(4)).unwrap();
        assert_abs_diff_eq!(v, c as f64, epsilon = 1e-12);
    }

    #[test]
    fn random_on_two_edge_path() {
        // Single path of two valid edges: always exactly two evaluations.
        let g = ExplicitGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)], 0, 2).unwrap();
        let s = vec![(World::all_valid(2), 1.0)];
        assert_abs_diff_eq!(random_expected_evaluations(&g, &s).unwrap(), 2.0, epsilon = 1e-12);
        // Diamond with a-g invalid: random costs 1.5 on the first path then 2.
        let g = diamond();
        let s = vec![(World::new(vec![true, false, true, true]), 1.0)];
        assert_abs_diff_eq!(random_expected_evaluations(&g, &s).unwrap(), 3.5, epsilon = 1e-12);
    }

    #[test]
    fn optimum_bounds_every_baseline() {
        for (g, d) in [env1_distribution(), env2_distribution()] {
            let s = support(&d);
            let opt = ExactSolver::new(&g, &s).unwrap().optimal_expected_evaluations().unwrap();
            for b in Baseline::ALL {
                let v = if b == Baseline::Random {
                    random_expected_evaluations(&g, &s).unwrap()
                } else {
                    expected_evaluations(&g, &s, &mut BaselineSelector::new(b, 0)).unwrap()
                };
                assert!(opt <= v + 1e-12, "{b:?}: {opt} > {v}");
            }
        }
    }
}
