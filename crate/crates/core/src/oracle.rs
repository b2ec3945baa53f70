//! Clairvoyant oracles that see the whole world.
//!
//! With the world known, the cheapest way to finish a search is to invalidate
//! a minimum set of invalid edges hitting every not-yet-eliminated path that is
//! no longer than the shortest feasible path: a set cover. This module offers
//! the exact cover value, the greedy cover, and the path-constrained
//! length-gain approximation used as the training-time oracle.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph, Path};
use crate::search::{goal_test, unevaluated_on, EdgeSelector, GoalTest, SearchState};
use crate::world::World;

/// Default cap on enumerated paths when building a cover instance.
pub const DEFAULT_PATH_CAP: usize = 20_000;
/// Largest candidate set searched exhaustively.
pub const MAX_EXACT_CANDIDATES: usize = 24;

#[derive(Debug, Clone)]
pub struct CoverInstance {
    /// Shortest feasible path in the world.
    pub target: Path,
    /// Paths no longer than `target` that avoid every evaluated-invalid edge
    /// and contain at least one invalid edge.
    pub universe: Vec<Path>,
    /// Invalid edges appearing in some universe path, ascending.
    pub candidates: Vec<EdgeId>,
    /// Universe indices covered by each candidate.
    pub membership: BTreeMap<EdgeId, Vec<usize>>,
}

impl CoverInstance {
    pub fn build(graph: &ExplicitGraph, state: &SearchState, world: &World, cap: usize) -> Result<Self> {
        world.check_size(graph)?;
        let target = graph
            .shortest_path(|e| !world.is_valid(e))
            .ok_or(Error::Infeasible)?;
        // Feasible paths of equal length cannot be covered and never need to be.
        let universe: Vec<Path> = graph
            .enumerate_paths_shorter_than(target.length, |e| state.is_invalid(e), cap)?
            .into_iter()
            .filter(|p| p.edges.iter().any(|&e| !world.is_valid(e)))
            .collect();
        let mut membership: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
        for (i, p) in universe.iter().enumerate() {
            for &e in &p.edges {
                if !world.is_valid(e) {
                    membership.entry(e).or_default().push(i);
                }
            }
        }
        let candidates = membership.keys().copied().collect();
        Ok(Self {
            target,
            universe,
            candidates,
            membership,
        })
    }

    /// Builds an instance directly from paths given as edge lists; every
    /// listed edge is treated as an invalid candidate.
    pub fn from_edge_sets(paths: &[Vec<EdgeId>]) -> Self {
        let universe: Vec<Path> = paths
            .iter()
            .map(|edges| Path {
                vertices: Vec::new(),
                edges: edges.clone(),
                length: 0.0,
            })
            .collect();
        let mut membership: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
        for (i, p) in universe.iter().enumerate() {
            for &e in &p.edges {
                let entry = membership.entry(e).or_default();
                if entry.last() != Some(&i) {
                    entry.push(i);
                }
            }
        }
        Self {
            target: Path {
                vertices: Vec::new(),
                edges: Vec::new(),
                length: 0.0,
            },
            candidates: membership.keys().copied().collect(),
            universe,
            membership,
        }
    }

    fn mask_of(&self, edge: EdgeId) -> Vec<u64> {
        let mut bits = vec![0u64; self.universe.len().div_ceil(64)];
        for &i in &self.membership[&edge] {
            bits[i / 64] |= 1 << (i % 64);
        }
        bits
    }

    pub fn is_cover(&self, edges: &[EdgeId]) -> bool {
        self.universe
            .iter()
            .all(|p| p.edges.iter().any(|e| edges.contains(e)))
    }

    /// Size of a minimum cover, by exhaustive search over candidate subsets
    /// in order of increasing size.
    pub fn exact_value(&self) -> Result<usize> {
        if self.universe.is_empty() {
            return Ok(0);
        }
        let n = self.candidates.len();
        if n > MAX_EXACT_CANDIDATES {
            return Err(Error::CoverTooLarge {
                candidates: n,
                limit: MAX_EXACT_CANDIDATES,
            });
        }
        let masks: Vec<Vec<u64>> = self.candidates.iter().map(|&e| self.mask_of(e)).collect();
        let words = self.universe.len().div_ceil(64);
        let full: Vec<u64> = (0..words)
            .map(|w| {
                let bits = (self.universe.len() - w * 64).min(64);
                if bits == 64 {
                    u64::MAX
                } else {
                    (1u64 << bits) - 1
                }
            })
            .collect();
        for k in 1..=n {
            let mut chosen: Vec<usize> = (0..k).collect();
            loop {
                let mut acc = vec![0u64; words];
                for &c in &chosen {
                    for (a, m) in acc.iter_mut().zip(&masks[c]) {
                        *a |= m;
                    }
                }
                if acc == full {
                    return Ok(k);
                }
                if !next_combination(&mut chosen, n) {
                    break;
                }
            }
        }
        unreachable!("the full candidate set covers every universe path")
    }

    /// Repeatedly takes the candidate covering the most uncovered paths
    /// (ties to the smallest edge id) until everything is covered.
    pub fn greedy(&self) -> Vec<EdgeId> {
        let mut covered = vec![false; self.universe.len()];
        let mut remaining = self.universe.len();
        let mut out = Vec::new();
        while remaining > 0 {
            let (edge, gain) = self
                .membership
                .iter()
                .map(|(&e, paths)| (e, paths.iter().filter(|&&i| !covered[i]).count()))
                .fold((usize::MAX, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
            debug_assert!(gain > 0);
            for &i in &self.membership[&edge] {
                if !covered[i] {
                    covered[i] = true;
                    remaining -= 1;
                }
            }
            out.push(edge);
        }
        out
    }
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum number of invalid edges whose invalidation eliminates every
/// shorter path: the negated clairvoyant value of the state.
pub fn exact_cover_value(graph: &ExplicitGraph, state: &SearchState, world: &World) -> Result<usize> {
    CoverInstance::build(graph, state, world, DEFAULT_PATH_CAP)?.exact_value()
}

pub fn greedy_cover(graph: &ExplicitGraph, state: &SearchState, world: &World) -> Result<Vec<EdgeId>> {
    Ok(CoverInstance::build(graph, state, world, DEFAULT_PATH_CAP)?.greedy())
}

/// Length gain of the lazy shortest path when `edge` is also invalidated;
/// infinite when that disconnects the goal.
pub fn length_gain(graph: &ExplicitGraph, state: &SearchState, path: &Path, edge: EdgeId) -> f64 {
    graph
        .shortest_path(|e| e == edge || state.is_invalid(e))
        .map_or(f64::INFINITY, |p| p.length - path.length)
}

/// Approximate clairvoyant oracle on a given lazy path: the world-invalid
/// edge whose invalidation lengthens the shortest path the most (ties to the
/// earliest along the path). When every edge on the path is valid the search
/// is on its final path and the first unevaluated edge is returned.
pub fn approx_oracle_on_path(
    graph: &ExplicitGraph,
    state: &SearchState,
    world: &World,
    path: &Path,
) -> Result<EdgeId> {
    let mut best: Option<(EdgeId, f64)> = None;
    for &e in &path.edges {
        if world.is_valid(e) || state.is_evaluated(e) {
            continue;
        }
        let gain = length_gain(graph, state, path, e);
        if best.is_none_or(|(_, b)| gain > b) {
            best = Some((e, gain));
        }
    }
    match best {
        Some((e, _)) => Ok(e),
        None => unevaluated_on(path, state)
            .first()
            .copied()
            .ok_or(Error::PathFullyEvaluated),
    }
}

pub fn approx_oracle_action(graph: &ExplicitGraph, state: &SearchState, world: &World) -> Result<EdgeId> {
    let path = state.lazy_path(graph).ok_or(Error::Infeasible)?;
    approx_oracle_on_path(graph, state, world, &path)
}

/// [`approx_oracle_on_path`] as a selector; the world is revealed per episode.
#[derive(Debug, Clone, Default)]
pub struct OracleSelector {
    world: Option<World>,
}

impl OracleSelector {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EdgeSelector for OracleSelector {
    fn select(&mut self, graph: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        let world = self
            .world
            .as_ref()
            .ok_or_else(|| Error::Config("oracle queried before a world was revealed".into()))?;
        approx_oracle_on_path(graph, state, world, path)
    }

    fn start_episode(&mut self, world: &World) {
        self.world = Some(world.clone());
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}

/// Exact clairvoyant search cost by dynamic programming over the
/// deterministic transitions of a known world. Includes verifying the final
/// path. Only for small graphs.
pub struct ClairvoyantSolver<'a> {
    graph: &'a ExplicitGraph,
    world: &'a World,
    memo: HashMap<SearchState, usize>,
}

impl<'a> ClairvoyantSolver<'a> {
    pub fn new(graph: &'a ExplicitGraph, world: &'a World) -> Self {
        Self {
            graph,
            world,
            memo: HashMap::new(),
        }
    }

    /// Fewest evaluations that finish the search from `state`.
    pub fn value(&mut self, state: &SearchState) -> Result<usize> {
        if let Some(&v) = self.memo.get(state) {
            return Ok(v);
        }
        let path = match goal_test(self.graph, state) {
            GoalTest::Reached(_) => return Ok(0),
            GoalTest::Infeasible => return Err(Error::Infeasible),
            GoalTest::Pending(p) => p,
        };
        let mut best = usize::MAX;
        for e in unevaluated_on(&path, state) {
            let mut next = state.clone();
            next.apply(e, self.world.is_valid(e))?;
            best = best.min(1 + self.value(&next)?);
        }
        self.memo.insert(state.clone(), best);
        Ok(best)
    }

    /// Cost of taking `edge` first and then acting optimally.
    pub fn action_value(&mut self, state: &SearchState, edge: EdgeId) -> Result<usize> {
        let mut next = state.clone();
        next.apply(edge, self.world.is_valid(edge))?;
        Ok(1 + self.value(&next)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::diamond;
    use crate::search::run_lazysp;

    #[test]
    fn fresh_diamond_oracle_skips_valid_edge() {
        let g = diamond();
        let w = World::new(vec![true, false, true, true]);
        assert_eq!(approx_oracle_action(&g, &SearchState::new(4), &w).unwrap(), 1);
    }

    #[test]
    fn oracle_prefers_disconnecting_edge() {
        // Chain s-a-g where edge 1 (a-g) is a bridge and edge 0 (s-a) has a
        // bypass s-b-a.
        let g = ExplicitGraph::new(
            4,
            &[(0, 1, 1.0), (1, 3, 1.0), (0, 2, 5.0), (2, 1, 5.0)],
            0,
            3,
        )
        .unwrap();
        let w = World::new(vec![false, false, true, true]);
        // An invalid bridge makes the world infeasible, so apply the rule to
        // the path directly.
        let s = SearchState::new(4);
        let p = s.lazy_path(&g).unwrap();
        assert_eq!(approx_oracle_on_path(&g, &s, &w, &p).unwrap(), 1);
    }

    #[test]
    fn single_invalid_edge_is_chosen() {
        let g = diamond();
        let w = World::new(vec![false, true, true, true]);
        assert_eq!(approx_oracle_action(&g, &SearchState::new(4), &w).unwrap(), 0);
    }

    #[test]
    fn fully_valid_path_falls_back_to_forward() {
        let g = diamond();
        let w = World::all_valid(4);
        assert_eq!(approx_oracle_action(&g, &SearchState::new(4), &w).unwrap(), 0);
    }

    #[test]
    fn cover_example() {
        // P1 = {1,2}, P2 = {1,3}, P3 = {4}
        let inst = CoverInstance::from_edge_sets(&[vec![1, 2], vec![1, 3], vec![4]]);
        assert_eq!(inst.exact_value().unwrap(), 2);
        assert_eq!(inst.greedy(), vec![1, 4]);
        assert!(inst.is_cover(&inst.greedy()));
    }

    #[test]
    fn disjoint_paths_need_one_edge_each() {
        let inst = CoverInstance::from_edge_sets(&[vec![0, 1], vec![2], vec![3, 4, 5], vec![6]]);
        assert_eq!(inst.exact_value().unwrap(), 4);
        assert_eq!(inst.greedy().len(), 4);
    }

    #[test]
    fn empty_universe() {
        let g = diamond();
        let w = World::all_valid(4);
        let s = SearchState::new(4);
        assert_eq!(exact_cover_value(&g, &s, &w).unwrap(), 0);
        assert!(greedy_cover(&g, &s, &w).unwrap().is_empty());
    }

    #[test]
    fn greedy_is_suboptimal_on_tight_family() {
        // Universe {0..5}; sets A={0,1,2} B={3,4,5} C={0,1,3,4}.
        // Edge ids: A=0, B=1, C=2. Path i contains the sets holding element i.
        let paths = vec![vec![0, 2], vec![0, 2], vec![0], vec![1, 2], vec![1, 2], vec![1]];
        let inst = CoverInstance::from_edge_sets(&paths);
        assert_eq!(inst.exact_value().unwrap(), 2);
        let greedy = inst.greedy();
        assert_eq!(greedy, vec![2, 0, 1]);
        let h6: f64 = (1..=6).map(|k| 1.0 / k as f64).sum();
        assert!(greedy.len() as f64 <= h6 * 2.0);
    }

    #[test]
    fn diamond_cover_with_blocked_a_g() {
        let g = diamond();
        let w = World::new(vec![true, false, true, true]);
        let inst = CoverInstance::build(&g, &SearchState::new(4), &w, 100).unwrap();
        assert_eq!(inst.universe.len(), 1);
        assert_eq!(inst.candidates, vec![1]);
        assert_eq!(inst.exact_value().unwrap(), 1);
    }

    #[test]
    fn oracle_never_wastes_valid_edges() {
        let g = diamond();
        let w = World::new(vec![true, false, true, true]);
        let r = run_lazysp(&g, &w, &mut OracleSelector::new()).unwrap();
        let final_path = r.path.clone().unwrap();
        for ev in &r.evaluations {
            assert!(!ev.valid || final_path.contains(ev.edge));
        }
        let invalid = r.evaluations.iter().filter(|e| !e.valid).count();
        assert_eq!(r.num_evaluations(), invalid + final_path.len());
    }

    #[test]
    fn clairvoyant_dp_matches_cover_plus_path() {
        let g = diamond();
        let w = World::new(vec![true, false, true, true]);
        let s = SearchState::new(4);
        let cover = exact_cover_value(&g, &s, &w).unwrap();
        let mut dp = ClairvoyantSolver::new(&g, &w);
        assert_eq!(dp.value(&s).unwrap(), cover + 2);
    }

    #[test]
    fn unrevealed_oracle_errors() {
        let g = diamond();
        let s = SearchState::new(4);
        let p = s.lazy_path(&g).unwrap();
        assert!(OracleSelector::new().select(&g, &p, &s).is_err());
    }
}
