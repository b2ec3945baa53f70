//! Worlds, world distributions and edge-validity estimates.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph};
use crate::grid::GridModel;
use crate::rng::{self, Rng};
use crate::search::{EdgeStatus, SearchState};

/// Validity of every edge: `true` is valid (φ(e) = 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct World {
    validity: Vec<bool>,
}

impl World {
    pub fn new(validity: Vec<bool>) -> Self {
        Self { validity }
    }

    pub fn all_valid(num_edges: usize) -> Self {
        Self::new(vec![true; num_edges])
    }

    /// All edges valid except `invalid`.
    pub fn with_invalid(num_edges: usize, invalid: &[EdgeId]) -> Self {
        let mut w = Self::all_valid(num_edges);
        for &e in invalid {
            w.validity[e] = false;
        }
        w
    }

    pub fn is_valid(&self, e: EdgeId) -> bool {
        self.validity[e]
    }

    pub fn len(&self) -> usize {
        self.validity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validity.is_empty()
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    pub fn invalid_edges(&self) -> Vec<EdgeId> {
        (0..self.len()).filter(|&e| !self.validity[e]).collect()
    }

    pub fn check_size(&self, graph: &ExplicitGraph) -> Result<()> {
        if self.len() != graph.num_edges() {
            return Err(Error::WorldSize {
                expected: graph.num_edges(),
                got: self.len(),
            });
        }
        Ok(())
    }

    /// Whether some start-goal path uses only valid edges.
    pub fn is_feasible(&self, graph: &ExplicitGraph) -> bool {
        graph.shortest_path(|e| !self.validity[e]).is_some()
    }

    pub fn to_bits(&self) -> String {
        self.validity.iter().map(|&v| if v { '1' } else { '0' }).collect()
    }

    pub fn from_bits(bits: &str) -> Option<Self> {
        bits.chars()
            .map(|c| match c {
                '1' => Some(true),
                '0' => Some(false),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }
}

#[derive(Debug, Clone)]
pub enum Sampler {
    /// Exact finite support with probabilities.
    Support(Vec<(World, f64)>),
    /// Uniform over a fixed list of worlds.
    Uniform(Vec<World>),
    /// Parametric obstacle generator over a grid graph.
    Grid(Box<GridModel>),
}

#[derive(Debug, Clone)]
pub struct WorldDistribution {
    sampler: Sampler,
    training_worlds: Vec<World>,
}

/// Number of training worlds drawn for the exact-support toy environments.
pub const ENV_TRAINING_WORLDS: usize = 1000;
const ENV_TRAINING_SEED: u64 = 0x5eed;

impl WorldDistribution {
    /// Exact distribution over `support`. Probabilities must be non-negative,
    /// sum to one within 1e-12, and every world must be feasible.
    pub fn from_support(graph: &ExplicitGraph, support: Vec<(World, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if support.iter().any(|(_, p)| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "support probabilities must be non-negative and sum to 1 (sum = {total})"
            )));
        }
        for (w, _) in &support {
            w.check_size(graph)?;
            if !w.is_feasible(graph) {
                return Err(Error::InvalidDistribution(format!(
                    "support world {} has no feasible path",
                    w.to_bits()
                )));
            }
        }
        Ok(Self {
            sampler: Sampler::Support(support),
            training_worlds: Vec::new(),
        })
    }

    /// Uniform distribution over a world set. Every world must be feasible.
    pub fn uniform(graph: &ExplicitGraph, worlds: Vec<World>) -> Result<Self> {
        if worlds.is_empty() {
            return Err(Error::InvalidDistribution("empty world set".into()));
        }
        for w in &worlds {
            w.check_size(graph)?;
            if !w.is_feasible(graph) {
                return Err(Error::InvalidDistribution(format!(
                    "world {} has no feasible path",
                    w.to_bits()
                )));
            }
        }
        Ok(Self {
            sampler: Sampler::Uniform(worlds),
            training_worlds: Vec::new(),
        })
    }

    pub(crate) fn from_grid(model: GridModel) -> Self {
        Self {
            sampler: Sampler::Grid(Box::new(model)),
            training_worlds: Vec::new(),
        }
    }

    pub fn with_training_worlds(mut self, worlds: Vec<World>) -> Self {
        self.training_worlds = worlds;
        self
    }

    /// Replaces the training set with `n` worlds sampled under `seed`.
    pub fn with_sampled_training(self, n: usize, seed: u64) -> Result<Self> {
        let worlds = self.sample_many(n, seed)?;
        Ok(self.with_training_worlds(worlds))
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn training_worlds(&self) -> &[World] {
        &self.training_worlds
    }

    pub fn support(&self) -> Option<&[(World, f64)]> {
        match &self.sampler {
            Sampler::Support(s) => Some(s),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<World> {
        match &self.sampler {
            Sampler::Support(support) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, p) in support {
                    acc += p;
                    if u < acc {
                        return Ok(w.clone());
                    }
                }
                // Rounding left `u` above the running total.
                Ok(support
                    .iter()
                    .rev()
                    .find(|(_, p)| *p > 0.0)
                    .map(|(w, _)| w.clone())
                    .expect("support has positive mass"))
            }
            Sampler::Uniform(worlds) => Ok(worlds[rng.gen_range(0..worlds.len())].clone()),
            Sampler::Grid(model) => model.sample(rng),
        }
    }

    /// `n` worlds, the i-th drawn from stream i of `seed`.
    pub fn sample_many(&self, n: usize, seed: u64) -> Result<Vec<World>> {
        (0..n)
            .map(|i| self.sample(&mut rng::stream(seed, i as u64)))
            .collect()
    }
}

const ENV1_LABELS: [&str; 6] = [
    "top_left",
    "top_right",
    "middle_left",
    "middle_right",
    "bottom_left",
    "bottom_right",
];

/// Three parallel two-edge routes, top shortest and bottom longest.
pub fn env1_graph() -> ExplicitGraph {
    // s = 0, top = 1, middle = 2, bottom = 3, g = 4
    ExplicitGraph::new(
        5,
        &[
            (0, 1, 1.0),
            (1, 4, 1.0),
            (0, 2, 1.25),
            (2, 4, 1.25),
            (0, 3, 1.5),
            (3, 4, 1.5),
        ],
        0,
        4,
    )
    .and_then(|g| g.with_labels(ENV1_LABELS.iter().map(|s| s.to_string()).collect()))
    .expect("environment 1 graph is well formed")
}

/// Environment 1 and its exact support.
///
/// * 0.7: `top_left` and `middle_right` invalid.
/// * 0.15: `top_right` invalid plus one of the four middle/bottom edges, each 0.0375.
/// * 0.15: every edge valid.
pub fn env1_distribution() -> (ExplicitGraph, WorldDistribution) {
    let g = env1_graph();
    let id = |name: &str| g.edge_by_label(name).expect("known label");
    let n = g.num_edges();
    let mut support = vec![(
        World::with_invalid(n, &[id("top_left"), id("middle_right")]),
        0.7,
    )];
    for other in ["middle_left", "middle_right", "bottom_left", "bottom_right"] {
        support.push((World::with_invalid(n, &[id("top_right"), id(other)]), 0.3 * 0.5 / 4.0));
    }
    support.push((World::all_valid(n), 0.3 * 0.5));
    let dist = WorldDistribution::from_support(&g, support)
        .and_then(|d| d.with_sampled_training(ENV_TRAINING_WORLDS, ENV_TRAINING_SEED))
        .expect("environment 1 support is valid");
    (g, dist)
}

const ENV2_LABELS: [&str; 8] = [
    "top_left",
    "top_right",
    "middle_left",
    "middle_right",
    "bottom_left",
    "bottom_right",
    "base_left",
    "base_right",
];

/// Four parallel two-edge routes ordered top < middle < bottom < base by length.
pub fn env2_graph() -> ExplicitGraph {
    // s = 0, top = 1, middle = 2, bottom = 3, base = 4, g = 5
    ExplicitGraph::new(
        6,
        &[
            (0, 1, 1.0),
            (1, 5, 1.0),
            (0, 2, 1.25),
            (2, 5, 1.25),
            (0, 3, 1.5),
            (3, 5, 1.5),
            (0, 4, 1.75),
            (4, 5, 1.75),
        ],
        0,
        5,
    )
    .and_then(|g| g.with_labels(ENV2_LABELS.iter().map(|s| s.to_string()).collect()))
    .expect("environment 2 graph is well formed")
}

/// Environment 2: with probability 0.6 `{top_left, middle_right, bottom_left}`
/// are invalid, otherwise `{top_right, middle_right}`.
pub fn env2_distribution() -> (ExplicitGraph, WorldDistribution) {
    let g = env2_graph();
    let id = |name: &str| g.edge_by_label(name).expect("known label");
    let n = g.num_edges();
    let support = vec![
        (
            World::with_invalid(n, &[id("top_left"), id("middle_right"), id("bottom_left")]),
            0.6,
        ),
        (World::with_invalid(n, &[id("top_right"), id("middle_right")]), 0.4),
    ];
    let dist = WorldDistribution::from_support(&g, support)
        .and_then(|d| d.with_sampled_training(ENV_TRAINING_WORLDS, ENV_TRAINING_SEED))
        .expect("environment 2 support is valid");
    (g, dist)
}

/// Fraction of training worlds in which each edge is invalid.
pub fn prior_edge_prob(training_worlds: &[World]) -> Result<Vec<f64>> {
    let first = training_worlds.first().ok_or(Error::EmptyTrainingSet)?;
    let n = training_worlds.len() as f64;
    let mut counts = vec![0usize; first.len()];
    for w in training_worlds {
        for (e, &v) in w.validity().iter().enumerate() {
            if !v {
                counts[e] += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Number of evaluated edges whose recorded outcome disagrees with `world`.
///
/// This is the entrywise discrepancy between the observed state vector and
/// the one `world` would have produced on the same evaluated edge set.
pub fn state_discrepancy(state: &SearchState, world: &World) -> usize {
    state
        .statuses()
        .iter()
        .enumerate()
        .filter(|&(e, s)| match s {
            EdgeStatus::Unevaluated => false,
            EdgeStatus::Valid => !world.is_valid(e),
            EdgeStatus::Invalid => world.is_valid(e),
        })
        .count()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|x| x / total).collect()
}

/// Posterior weight of each training world: softmax of minus its discrepancy.
pub fn posterior_world_weights(state: &SearchState, training_worlds: &[World]) -> Result<Vec<f64>> {
    if training_worlds.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let z: Vec<f64> = training_worlds
        .iter()
        .map(|w| -(state_discrepancy(state, w) as f64))
        .collect();
    Ok(softmax(&z))
}

/// Posterior probability that `edge` is invalid under the given world weights.
pub fn weighted_invalid_prob(weights: &[f64], training_worlds: &[World], edge: EdgeId) -> f64 {
    let p: f64 = weights
        .iter()
        .zip(training_worlds)
        .filter(|(_, w)| !w.is_valid(edge))
        .map(|(p, _)| p)
        .sum();
    p.clamp(0.0, 1.0)
}

/// Posterior probability of every edge being invalid given `state`.
pub fn posterior_edge_prob(state: &SearchState, training_worlds: &[World]) -> Result<Vec<f64>> {
    let weights = posterior_world_weights(state, training_worlds)?;
    Ok((0..state.num_edges())
        .map(|e| weighted_invalid_prob(&weights, training_worlds, e))
        .collect())
}

pub const WORLD_SET_MAGIC: &str = "LAZYSP-WORLDS";
pub const WORLD_SET_VERSION: u32 = 1;

/// A world set bound to a graph by content hash.
///
/// Text layout:
///
/// ```text
/// LAZYSP-WORLDS 1
/// graph <sha256 hex of the graph>
/// edges <|E|>
/// count <N>
/// <N lines of |E| characters, '1' valid / '0' invalid>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSet {
    pub graph_hash: String,
    pub num_edges: usize,
    pub worlds: Vec<World>,
}

impl WorldSet {
    pub fn new(graph: &ExplicitGraph, worlds: Vec<World>) -> Result<Self> {
        for w in &worlds {
            w.check_size(graph)?;
        }
        Ok(Self {
            graph_hash: graph.content_hash(),
            num_edges: graph.num_edges(),
            worlds,
        })
    }

    pub fn check_graph(&self, graph: &ExplicitGraph) -> Result<()> {
        let hash = graph.content_hash();
        if hash != self.graph_hash {
            return Err(Error::GraphMismatch {
                expected: hash,
                found: self.graph_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{WORLD_SET_MAGIC} {WORLD_SET_VERSION}");
        let _ = writeln!(out, "graph {}", self.graph_hash);
        let _ = writeln!(out, "edges {}", self.num_edges);
        let _ = writeln!(out, "count {}", self.worlds.len());
        for w in &self.worlds {
            out.push_str(&w.to_bits());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format {
            kind: "world set",
            msg,
        };
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key} ...`, found {line:?}")))
        };
        let version = header(WORLD_SET_MAGIC)?;
        if version != WORLD_SET_VERSION.to_string() {
            return Err(bad(format!("unsupported version {version}")));
        }
        let graph_hash = header("graph")?;
        let num_edges: usize = header("edges")?
            .parse()
            .map_err(|e| bad(format!("edge count: {e}")))?;
        let count: usize = header("count")?
            .parse()
            .map_err(|e| bad(format!("world count: {e}")))?;
        let worlds = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                World::from_bits(l)
                    .filter(|w| w.len() == num_edges)
                    .ok_or_else(|| bad(format!("bad world row {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if worlds.len() != count {
            return Err(bad(format!("header says {count} worlds, found {}", worlds.len())));
        }
        Ok(Self {
            graph_hash,
            num_edges,
            worlds,
        })
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn env1_marginals() {
        let (g, d) = env1_distribution();
        let support = d.support().unwrap();
        let tl = g.edge_by_label("top_left").unwrap();
        let mr = g.edge_by_label("middle_right").unwrap();
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        let p_tl: f64 = support.iter().filter(|(w, _)| !w.is_valid(tl)).map(|(_, p)| p).sum();
        assert_abs_diff_eq!(p_tl, 0.7, epsilon = 1e-12);
        let p_both: f64 = support
            .iter()
            .filter(|(w, _)| !w.is_valid(tl) && !w.is_valid(mr))
            .map(|(_, p)| p)
            .sum();
        assert_abs_diff_eq!(p_both / p_tl, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn env2_support() {
        let (g, d) = env2_distribution();
        let support = d.support().unwrap();
        assert_eq!(support.len(), 2);
        assert_abs_diff_eq!(support[0].1, 0.6);
        let mr = g.edge_by_label("middle_right").unwrap();
        assert!(support.iter().all(|(w, _)| !w.is_valid(mr)));
        assert!(support.iter().all(|(w, _)| w.is_feasible(&g)));
    }

    #[test]
    fn support_validation() {
        let g = env1_graph();
        let w = World::all_valid(6);
        assert!(WorldDistribution::from_support(&g, vec![(w.clone(), 0.5)]).is_err());
        assert!(WorldDistribution::from_support(&g, vec![(w.clone(), 1.5), (w.clone(), -0.5)]).is_err());
        assert!(WorldDistribution::from_support(&g, vec![(World::new(vec![false; 6]), 1.0)]).is_err());
        assert!(WorldDistribution::from_support(&g, vec![(World::all_valid(5), 1.0)]).is_err());
    }

    #[test]
    fn prior_counts() {
        let worlds = vec![World::new(vec![true, true]), World::new(vec![true, false])];
        assert_eq!(prior_edge_prob(&worlds).unwrap(), vec![0.0, 0.5]);
        let same = vec![World::new(vec![true, false, true]); 4];
        assert_eq!(prior_edge_prob(&same).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(prior_edge_prob(&[]), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn env2_prior_middle_right() {
        let (g, d) = env2_distribution();
        let worlds = d.sample_many(10_000, 7).unwrap();
        let prior = prior_edge_prob(&worlds).unwrap();
        assert_eq!(prior[g.edge_by_label("middle_right").unwrap()], 1.0);
    }

    #[test]
    fn posterior_softmax_arithmetic() {
        // state: edge 0 evaluated valid, edge 1 evaluated invalid.
        let state = SearchState::from_statuses(vec![EdgeStatus::Valid, EdgeStatus::Invalid]);
        let worlds = vec![World::new(vec![true, false]), World::new(vec![false, true])];
        let p = posterior_world_weights(&state, &worlds).unwrap();
        assert_abs_diff_eq!(p[0], 0.8808, epsilon = 5e-5);
        assert_abs_diff_eq!(p[1], 0.1192, epsilon = 5e-5);
    }

    #[test]
    fn fresh_posterior_is_prior() {
        let worlds = vec![
            World::new(vec![true, false, true]),
            World::new(vec![false, false, true]),
            World::new(vec![true, true, true]),
        ];
        let post = posterior_edge_prob(&SearchState::new(3), &worlds).unwrap();
        let prior = prior_edge_prob(&worlds).unwrap();
        for (a, b) in post.iter().zip(&prior) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn matching_world_dominates() {
        // Worlds pairwise at least 5 apart on a fully evaluated state.
        let n_edges = 15;
        let worlds: Vec<World> = (0..3)
            .map(|k| World::new((0..n_edges).map(|e| e / 5 != k).collect()))
            .collect();
        let statuses = worlds[1]
            .validity()
            .iter()
            .map(|&v| if v { EdgeStatus::Valid } else { EdgeStatus::Invalid })
            .collect();
        let state = SearchState::from_statuses(statuses);
        let p = posterior_world_weights(&state, &worlds).unwrap();
        let e5 = 5f64.exp();
        assert!(p[1] >= e5 / (e5 + 2.0) - 1e-12);
    }

    #[test]
    fn posterior_requires_training() {
        assert!(posterior_edge_prob(&SearchState::new(2), &[]).is_err());
    }

    #[test]
    fn world_set_round_trip_and_hash_check() {
        let g = env1_graph();
        let (_, d) = env1_distribution();
        let set = WorldSet::new(&g, d.sample_many(5, 1).unwrap()).unwrap();
        let back = WorldSet::from_text(&set.to_text()).unwrap();
        assert_eq!(back, set);
        back.check_graph(&g).unwrap();
        assert!(matches!(back.check_graph(&env2_graph()), Err(Error::GraphMismatch { .. })));
    }

    #[test]
    fn world_set_rejects_garbage() {
        assert!(WorldSet::from_text("nope").is_err());
        let text = "LAZYSP-WORLDS 1\ngraph ab\nedges 2\ncount 2\n01\n";
        assert!(WorldSet::from_text(text).is_err());
        let text = "LAZYSP-WORLDS 1\ngraph ab\nedges 2\ncount 1\n012\n";
        assert!(WorldSet::from_text(text).is_err());
    }

    #[test]
    fn support_frequencies_within_three_sigma() {
        let (_, d) = env1_distribution();
        let n = 100_000;
        let samples = d.sample_many(n, 99).unwrap();
        for (w, p) in d.support().unwrap() {
            let count = samples.iter().filter(|s| *s == w).count() as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((count - n as f64 * p).abs() <= 3.0 * sigma, "{} {count}", w.to_bits());
        }
    }
}
