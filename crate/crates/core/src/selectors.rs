//! Edge selectors: uninformed baselines, prior/posterior fail-fast, and the
//! linear policy over six per-edge features.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph, Path};
use crate::rng::{self, Rng};
use crate::search::{unevaluated_on, EdgeSelector, SearchState};
use crate::training::{QGreedySelector, QTable};
use crate::world::{posterior_world_weights, prior_edge_prob, weighted_invalid_prob, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Forward,
    Backward,
    Alternate,
    Random,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [
        Baseline::Forward,
        Baseline::Backward,
        Baseline::Alternate,
        Baseline::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Forward => "forward",
            Baseline::Backward => "backward",
            Baseline::Alternate => "alternate",
            Baseline::Random => "random",
        }
    }
}

/// Picks among the unevaluated edges of a path.
///
/// `selection_count` is the number of selections made so far in the episode;
/// alternate goes forward on even counts and backward on odd ones.
pub fn baseline_select(
    kind: Baseline,
    unevaluated: &[EdgeId],
    selection_count: usize,
    rng: &mut Rng,
) -> Result<EdgeId> {
    let (&first, &last) = match (unevaluated.first(), unevaluated.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::PathFullyEvaluated),
    };
    Ok(match kind {
        Baseline::Forward => first,
        Baseline::Backward => last,
        Baseline::Alternate if selection_count.is_multiple_of(2) => first,
        Baseline::Alternate => last,
        Baseline::Random => unevaluated[rng.gen_range(0..unevaluated.len())],
    })
}

#[derive(Debug, Clone)]
pub struct BaselineSelector {
    kind: Baseline,
    rng: Rng,
}

impl BaselineSelector {
    pub fn new(kind: Baseline, seed: u64) -> Self {
        Self {
            kind,
            rng: rng::seeded(seed),
        }
    }
}

impl EdgeSelector for BaselineSelector {
    fn select(&mut self, _: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        let candidates = unevaluated_on(path, state);
        baseline_select(self.kind, &candidates, state.num_evaluated(), &mut self.rng)
    }

    fn name(&self) -> String {
        self.kind.name().to_string()
    }
}

/// First candidate with the largest score; ties go to the earliest.
fn argmax_first(candidates: &[EdgeId], score: impl Fn(usize, EdgeId) -> f64) -> Result<EdgeId> {
    let mut best: Option<(EdgeId, f64)> = None;
    for (i, &e) in candidates.iter().enumerate() {
        let s = score(i, e);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((e, s));
        }
    }
    best.map(|(e, _)| e).ok_or(Error::PathFullyEvaluated)
}

/// Unevaluated path edge with the highest invalid probability.
pub fn select_failfast(path: &Path, state: &SearchState, invalid_prob: &[f64]) -> Result<EdgeId> {
    argmax_first(&unevaluated_on(path, state), |_, e| invalid_prob[e])
}

/// Fail-fast on the fixed prior computed from training worlds.
#[derive(Debug, Clone)]
pub struct FailFast {
    prior: Vec<f64>,
}

impl FailFast {
    pub fn new(training_worlds: &[World]) -> Result<Self> {
        Ok(Self {
            prior: prior_edge_prob(training_worlds)?,
        })
    }
}

impl EdgeSelector for FailFast {
    fn select(&mut self, _: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        select_failfast(path, state, &self.prior)
    }

    fn name(&self) -> String {
        "failfast".into()
    }
}

/// Fail-fast on the posterior over training worlds given the evaluations so far.
pub fn select_post_failfast(path: &Path, state: &SearchState, training_worlds: &[World]) -> Result<EdgeId> {
    let weights = posterior_world_weights(state, training_worlds)?;
    argmax_first(&unevaluated_on(path, state), |_, e| {
        weighted_invalid_prob(&weights, training_worlds, e)
    })
}

#[derive(Debug, Clone)]
pub struct PostFailFast {
    training_worlds: Vec<World>,
}

impl PostFailFast {
    pub fn new(training_worlds: Vec<World>) -> Result<Self> {
        if training_worlds.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(Self { training_worlds })
    }
}

impl EdgeSelector for PostFailFast {
    fn select(&mut self, _: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        select_post_failfast(path, state, &self.training_worlds)
    }

    fn name(&self) -> String {
        "postfailfast".into()
    }
}

/// Expected number of evaluations needed to invalidate a path whose edges are
/// checked in the given order, with `p_valid[l]` the independent validity
/// probability of the l-th checked edge: `Σ_l (Π_{m<l} p_m)(1 - p_l) l`.
pub fn expected_evaluations_to_invalidate(p_valid: &[f64]) -> f64 {
    let mut prefix = 1.0;
    let mut total = 0.0;
    for (i, &p) in p_valid.iter().enumerate() {
        total += prefix * (1.0 - p) * (i + 1) as f64;
        prefix *= p;
    }
    total
}

/// Indices sorted by ascending validity probability (stable).
pub fn failfast_order(p_valid: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p_valid.len()).collect();
    idx.sort_by(|&a, &b| p_valid[a].total_cmp(&p_valid[b]));
    idx
}

pub const NUM_FEATURES: usize = 6;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] =
    ["prior", "posterior", "location", "delta_len", "delta_eval", "pdl"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub prior: f64,
    pub posterior: f64,
    pub location: f64,
    pub delta_len: f64,
    pub delta_eval: f64,
    pub pdl: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.prior,
            self.posterior,
            self.location,
            self.delta_len,
            self.delta_eval,
            self.pdl,
        ]
    }
}

/// `f_delta_len` recorded when invalidating an edge disconnects start from goal.
pub fn disconnection_sentinel(graph: &ExplicitGraph) -> f64 {
    2.0 * graph.total_length()
}

/// Location score for rank `rank` among `count` unevaluated edges: 1 for the
/// first, 0 for the last, linear in between.
pub fn location_score(rank: usize, count: usize) -> f64 {
    if count <= 1 {
        1.0
    } else {
        1.0 - rank as f64 / (count - 1) as f64
    }
}

/// Length increase and unevaluated fraction of the shortest path after
/// hypothetically invalidating `edge`.
pub fn hallucinate_removal(graph: &ExplicitGraph, path: &Path, edge: EdgeId, state: &SearchState) -> (f64, f64) {
    match graph.shortest_path(|e| e == edge || state.is_invalid(e)) {
        Some(p) => {
            let unevaluated = p.edges.iter().filter(|&&e| !state.is_evaluated(e)).count();
            ((p.length - path.length).max(0.0), unevaluated as f64 / p.edges.len() as f64)
        }
        None => (disconnection_sentinel(graph), 1.0),
    }
}

/// Features of one unevaluated path edge.
pub fn compute_features(
    graph: &ExplicitGraph,
    path: &Path,
    edge: EdgeId,
    state: &SearchState,
    training_worlds: &[World],
    priors: &[f64],
) -> Result<FeatureVector> {
    let candidates = unevaluated_on(path, state);
    let rank = candidates
        .iter()
        .position(|&e| e == edge)
        .ok_or(Error::SelectorContract {
            edge,
            reason: "not an unevaluated edge of the path",
        })?;
    let weights = posterior_world_weights(state, training_worlds)?;
    let posterior = weighted_invalid_prob(&weights, training_worlds, edge);
    let (delta_len, delta_eval) = hallucinate_removal(graph, path, edge, state);
    Ok(FeatureVector {
        prior: priors[edge],
        posterior,
        location: location_score(rank, candidates.len()),
        delta_len,
        delta_eval,
        pdl: posterior * delta_len,
    })
}

/// Precomputed inputs shared by every feature query on one distribution.
#[derive(Debug, Clone)]
pub struct FeatureModel {
    training_worlds: Vec<World>,
    priors: Vec<f64>,
}

impl FeatureModel {
    pub fn new(training_worlds: Vec<World>) -> Result<Self> {
        let priors = prior_edge_prob(&training_worlds)?;
        Ok(Self {
            training_worlds,
            priors,
        })
    }

    pub fn training_worlds(&self) -> &[World] {
        &self.training_worlds
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Features for every unevaluated path edge, in path order. The posterior
    /// is computed once per call.
    pub fn candidate_features(
        &self,
        graph: &ExplicitGraph,
        path: &Path,
        state: &SearchState,
    ) -> Result<Vec<(EdgeId, FeatureVector)>> {
        let candidates = unevaluated_on(path, state);
        if candidates.is_empty() {
            return Err(Error::PathFullyEvaluated);
        }
        let weights = posterior_world_weights(state, &self.training_worlds)?;
        let count = candidates.len();
        Ok(candidates
            .into_iter()
            .enumerate()
            .map(|(rank, e)| {
                let posterior = weighted_invalid_prob(&weights, &self.training_worlds, e);
                let (delta_len, delta_eval) = hallucinate_removal(graph, path, e, state);
                let f = FeatureVector {
                    prior: self.priors[e],
                    posterior,
                    location: location_score(rank, count),
                    delta_len,
                    delta_eval,
                    pdl: posterior * delta_len,
                };
                (e, f)
            })
            .collect())
    }
}

/// Min-max scales each feature column to `[0, 1]` across the candidates of
/// one decision. Constant columns map to zero.
pub fn normalize_features(features: &[[f64; NUM_FEATURES]]) -> Vec<[f64; NUM_FEATURES]> {
    let mut lo = [f64::INFINITY; NUM_FEATURES];
    let mut hi = [f64::NEG_INFINITY; NUM_FEATURES];
    for f in features {
        for k in 0..NUM_FEATURES {
            lo[k] = lo[k].min(f[k]);
            hi[k] = hi[k].max(f[k]);
        }
    }
    features
        .iter()
        .map(|f| {
            let mut out = [0.0; NUM_FEATURES];
            for k in 0..NUM_FEATURES {
                let range = hi[k] - lo[k];
                out[k] = if range > 0.0 { (f[k] - lo[k]) / range } else { 0.0 };
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub weights: [f64; NUM_FEATURES],
    /// Per-decision min-max scaling before scoring.
    pub normalize: bool,
}

impl Default for LinearPolicy {
    fn default() -> Self {
        Self {
            weights: [0.0; NUM_FEATURES],
            normalize: true,
        }
    }
}

impl LinearPolicy {
    pub fn new(weights: [f64; NUM_FEATURES]) -> Self {
        Self {
            weights,
            normalize: true,
        }
    }

    /// The PDL baseline.
    pub fn pdl() -> Self {
        Self::new([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn score(&self, f: &[f64; NUM_FEATURES]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    /// Scoring inputs for the candidates of one decision.
    pub fn prepare(&self, features: &[[f64; NUM_FEATURES]]) -> Vec<[f64; NUM_FEATURES]> {
        if self.normalize {
            normalize_features(features)
        } else {
            features.to_vec()
        }
    }

    /// Index of the best-scoring candidate; ties go to the earliest.
    pub fn select_index(&self, features: &[[f64; NUM_FEATURES]]) -> Option<usize> {
        let prepared = self.prepare(features);
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in prepared.iter().enumerate() {
            let s = self.score(f);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn to_file(&self) -> PolicyFile {
        PolicyFile {
            format: POLICY_FORMAT.into(),
            version: POLICY_FORMAT_VERSION,
            weights: NamedWeights::from(self.weights),
            normalize: self.normalize,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.format != POLICY_FORMAT || file.version != POLICY_FORMAT_VERSION {
            return Err(Error::Format {
                kind: "policy",
                msg: format!("unsupported format {} v{}", file.format, file.version),
            });
        }
        let weights: [f64; NUM_FEATURES] = file.weights.into();
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Format {
                kind: "policy",
                msg: "weights must be finite".into(),
            });
        }
        Ok(Self {
            weights,
            normalize: file.normalize,
        })
    }
}

/// `argmax wᵀf` over candidates; ties go to the earliest.
pub fn linear_select(policy: &LinearPolicy, candidates: &[(EdgeId, FeatureVector)]) -> Option<EdgeId> {
    let feats: Vec<_> = candidates.iter().map(|(_, f)| f.to_array()).collect();
    policy.select_index(&feats).map(|i| candidates[i].0)
}

pub const POLICY_FORMAT: &str = "lazysp-policy";
pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedWeights {
    pub prior: f64,
    pub posterior: f64,
    pub location: f64,
    pub delta_len: f64,
    pub delta_eval: f64,
    pub pdl: f64,
}

impl From<[f64; NUM_FEATURES]> for NamedWeights {
    fn from(w: [f64; NUM_FEATURES]) -> Self {
        Self {
            prior: w[0],
            posterior: w[1],
            location: w[2],
            delta_len: w[3],
            delta_eval: w[4],
            pdl: w[5],
        }
    }
}

impl From<NamedWeights> for [f64; NUM_FEATURES] {
    fn from(w: NamedWeights) -> Self {
        [w.prior, w.posterior, w.location, w.delta_len, w.delta_eval, w.pdl]
    }
}

/// Policy file: `{"format": "lazysp-policy", "version": 1, "weights": {...}, "normalize": true}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub weights: NamedWeights,
    pub normalize: bool,
}

/// A linear policy bound to a feature model.
#[derive(Debug, Clone)]
pub struct LinearSelector {
    policy: LinearPolicy,
    features: FeatureModel,
    name: String,
}

impl LinearSelector {
    pub fn new(policy: LinearPolicy, features: FeatureModel) -> Self {
        Self {
            policy,
            features,
            name: "linear".into(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn policy(&self) -> &LinearPolicy {
        &self.policy
    }
}

impl EdgeSelector for LinearSelector {
    fn select(&mut self, graph: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        let candidates = self.features.candidate_features(graph, path, state)?;
        linear_select(&self.policy, &candidates).ok_or(Error::PathFullyEvaluated)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// A named selector that can be instantiated per episode.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectorSpec {
    Baseline(Baseline),
    FailFast,
    PostFailFast,
    Pdl,
    Oracle,
    Linear { name: String, policy: LinearPolicy },
    /// Greedy policy of a learned Q-table.
    Tabular { name: String, table: Arc<QTable> },
}

impl SelectorSpec {
    /// Parses the built-in names. Policies loaded from disk are constructed
    /// directly as [`SelectorSpec::Linear`].
    pub fn parse(text: &str) -> Result<Self> {
        Ok(match text.trim().to_ascii_lowercase().as_str() {
            "forward" => Self::Baseline(Baseline::Forward),
            "backward" => Self::Baseline(Baseline::Backward),
            "alternate" => Self::Baseline(Baseline::Alternate),
            "random" => Self::Baseline(Baseline::Random),
            "failfast" => Self::FailFast,
            "postfailfast" => Self::PostFailFast,
            "pdl" => Self::Pdl,
            "oracle" => Self::Oracle,
            other => return Err(Error::Config(format!("unknown selector {other:?}"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::Baseline(b) => b.name().into(),
            Self::FailFast => "failfast".into(),
            Self::PostFailFast => "postfailfast".into(),
            Self::Pdl => "pdl".into(),
            Self::Oracle => "oracle".into(),
            Self::Linear { name, .. } | Self::Tabular { name, .. } => name.clone(),
        }
    }

    /// Whether the selector reads the training worlds.
    pub fn needs_training(&self) -> bool {
        matches!(
            self,
            Self::FailFast | Self::PostFailFast | Self::Pdl | Self::Linear { .. }
        )
    }

    /// The heuristics a roll-in policy is chosen from.
    pub fn heuristics() -> Vec<Self> {
        vec![
            Self::Baseline(Baseline::Forward),
            Self::Baseline(Baseline::Backward),
            Self::Baseline(Baseline::Alternate),
            Self::FailFast,
            Self::PostFailFast,
        ]
    }

    pub fn build(&self, model: Option<&FeatureModel>, seed: u64) -> Result<Box<dyn EdgeSelector + Send>> {
        let model = || model.ok_or(Error::EmptyTrainingSet);
        Ok(match self {
            Self::Baseline(b) => Box::new(BaselineSelector::new(*b, seed)),
            Self::FailFast => Box::new(FailFast {
                prior: model()?.priors().to_vec(),
            }),
            Self::PostFailFast => Box::new(PostFailFast::new(model()?.training_worlds().to_vec())?),
            Self::Pdl => Box::new(LinearSelector::new(LinearPolicy::pdl(), model()?.clone()).named("pdl")),
            Self::Oracle => Box::new(crate::oracle::OracleSelector::new()),
            Self::Linear { name, policy } => {
                Box::new(LinearSelector::new(*policy, model()?.clone()).named(name.clone()))
            }
            Self::Tabular { table, .. } => Box::new(QGreedySelector::new(QTable::clone(table))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::diamond;
    use crate::search::EdgeStatus;
    use crate::world::env2_distribution;
    use approx::assert_abs_diff_eq;
    use itertools::Itertools;
    use proptest::prelude::*;

    fn three_edge_path() -> (ExplicitGraph, Path) {
        let g = ExplicitGraph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 0, 3).unwrap();
        let p = g.shortest_path(|_| false).unwrap();
        (g, p)
    }

    #[test]
    fn baseline_definitions() {
        let mut r = rng::seeded(0);
        let c = [10, 11, 12];
        assert_eq!(baseline_select(Baseline::Forward, &c, 0, &mut r).unwrap(), 10);
        assert_eq!(baseline_select(Baseline::Backward, &c, 0, &mut r).unwrap(), 12);
        assert_eq!(baseline_select(Baseline::Alternate, &c, 1, &mut r).unwrap(), 12);
        assert_eq!(baseline_select(Baseline::Alternate, &c, 2, &mut r).unwrap(), 10);
        assert!(c.contains(&baseline_select(Baseline::Random, &c, 0, &mut r).unwrap()));
        assert!(matches!(
            baseline_select(Baseline::Forward, &[], 0, &mut r),
            Err(Error::PathFullyEvaluated)
        ));
    }

    #[test]
    fn failfast_picks_most_likely_invalid() {
        let (_, p) = three_edge_path();
        let s = SearchState::new(3);
        assert_eq!(select_failfast(&p, &s, &[0.1, 0.9, 0.5]).unwrap(), 1);
        assert_eq!(select_failfast(&p, &s, &[0.3, 0.3, 0.3]).unwrap(), 0);
    }

    /// Enumerates all 2^n outcomes of independent edges and counts the
    /// evaluations spent until the first invalid edge (or all n).
    fn brute_force_expected(p_valid: &[f64]) -> f64 {
        let n = p_valid.len();
        let mut total = 0.0;
        for mask in 0..(1u32 << n) {
            let prob: f64 = (0..n)
                .map(|i| if mask >> i & 1 == 1 { p_valid[i] } else { 1.0 - p_valid[i] })
                .product();
            let evals = (0..n).find(|&i| mask >> i & 1 == 0).map_or(0, |i| i + 1);
            // Paths that survive are not invalidated; they contribute no cost term.
            total += prob * evals as f64;
        }
        total
    }

    #[test]
    fn ascending_order_two_edges() {
        // evaluation order (0.3, 0.6) vs (0.6, 0.3)
        assert_abs_diff_eq!(expected_evaluations_to_invalidate(&[0.3, 0.6]), 0.94, epsilon = 1e-12);
        assert_abs_diff_eq!(expected_evaluations_to_invalidate(&[0.6, 0.3]), 1.24, epsilon = 1e-12);
        assert_abs_diff_eq!(brute_force_expected(&[0.3, 0.6]), 0.94, epsilon = 1e-12);
        assert_abs_diff_eq!(brute_force_expected(&[0.6, 0.3]), 1.24, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn closed_form_matches_enumeration(p in prop::collection::vec(0.0f64..1.0, 1..7)) {
            prop_assert!((expected_evaluations_to_invalidate(&p) - brute_force_expected(&p)).abs() < 1e-12);
        }

        #[test]
        fn ascending_order_is_optimal(p in prop::collection::vec(0.0f64..1.0, 2..6)) {
            let order: Vec<f64> = failfast_order(&p).into_iter().map(|i| p[i]).collect();
            let best = expected_evaluations_to_invalidate(&order);
            for perm in p.iter().copied().permutations(p.len()) {
                prop_assert!(best <= expected_evaluations_to_invalidate(&perm) + 1e-12);
            }
        }

        #[test]
        fn scaling_weights_keeps_choice(
            w in prop::array::uniform6(-1.0f64..1.0),
            scale in 0.01f64..100.0,
            feats in prop::collection::vec(prop::array::uniform6(0.0f64..5.0), 1..8),
        ) {
            let a = LinearPolicy::new(w);
            let b = LinearPolicy::new(w.map(|x| x * scale));
            prop_assert_eq!(a.select_index(&feats), b.select_index(&feats));
        }
    }

    #[test]
    fn location_scores() {
        let v: Vec<_> = (0..3).map(|r| location_score(r, 3)).collect();
        assert_eq!(v, vec![1.0, 0.5, 0.0]);
        assert_eq!(location_score(0, 1), 1.0);
    }

    #[test]
    fn diamond_delta_len() {
        let g = diamond();
        let s = SearchState::new(4);
        let p = s.lazy_path(&g).unwrap();
        let worlds = vec![World::all_valid(4)];
        let priors = prior_edge_prob(&worlds).unwrap();
        let f = compute_features(&g, &p, 1, &s, &worlds, &priors).unwrap();
        assert_abs_diff_eq!(f.delta_len, 0.2, epsilon = 1e-12);
        assert_eq!(f.delta_eval, 1.0);
        assert_eq!(f.location, 0.0);
        assert_eq!(f.pdl, f.posterior * f.delta_len);
    }

    #[test]
    fn dead_end_uses_sentinel() {
        let (g, p) = three_edge_path();
        let s = SearchState::new(3);
        let worlds = vec![World::all_valid(3)];
        let priors = prior_edge_prob(&worlds).unwrap();
        let f = compute_features(&g, &p, 1, &s, &worlds, &priors).unwrap();
        assert_eq!(f.delta_len, disconnection_sentinel(&g));
        assert_eq!(f.delta_eval, 1.0);
    }

    #[test]
    fn single_feature_policies_reduce_to_baselines() {
        let (g, p) = three_edge_path();
        let s = SearchState::new(3);
        let worlds = vec![
            World::new(vec![true, false, true]),
            World::new(vec![true, false, false]),
            World::new(vec![true, true, false]),
        ];
        let model = FeatureModel::new(worlds.clone()).unwrap();
        let cands = model.candidate_features(&g, &p, &s).unwrap();

        let location = LinearPolicy::new([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(linear_select(&location, &cands), Some(0));

        let prior = LinearPolicy::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            linear_select(&prior, &cands),
            Some(select_failfast(&p, &s, model.priors()).unwrap())
        );

        // Earliest maximiser.
        let top = cands.iter().map(|c| c.1.pdl).fold(f64::NEG_INFINITY, f64::max);
        let best_pdl = cands.iter().find(|c| c.1.pdl == top).map(|c| c.0);
        assert_eq!(linear_select(&LinearPolicy::pdl(), &cands), best_pdl);
    }

    #[test]
    fn post_failfast_without_evidence_matches_failfast() {
        let (_, d) = env2_distribution();
        let g = crate::world::env2_graph();
        let s = SearchState::new(g.num_edges());
        let p = s.lazy_path(&g).unwrap();
        let prior = prior_edge_prob(d.training_worlds()).unwrap();
        assert_eq!(
            select_post_failfast(&p, &s, d.training_worlds()).unwrap(),
            select_failfast(&p, &s, &prior).unwrap()
        );
    }

    #[test]
    fn post_failfast_single_world() {
        let (g, p) = three_edge_path();
        let w = World::new(vec![true, true, false]);
        let s = SearchState::new(3);
        assert_eq!(select_post_failfast(&p, &s, &[w]).unwrap(), 2);
        let _ = g;
    }

    #[test]
    fn post_failfast_env2_concentrates_on_mode_one() {
        let (_, d) = env2_distribution();
        let g = crate::world::env2_graph();
        let id = |n: &str| g.edge_by_label(n).unwrap();
        let mut s = SearchState::new(g.num_edges());
        s.apply(id("top_left"), false).unwrap();
        let p = s.lazy_path(&g).unwrap();
        let choice = select_post_failfast(&p, &s, d.training_worlds()).unwrap();
        assert!(choice == id("middle_right") || choice == id("bottom_left"));
        let post = crate::world::posterior_edge_prob(&s, d.training_worlds()).unwrap();
        assert!(post[id("bottom_left")] > 0.7);
        assert!(post[id("top_right")] < 0.3);
    }

    #[test]
    fn policy_file_round_trip() {
        let p = LinearPolicy::new([0.5, -1.0, 2.0, 0.0, 0.25, 3.0]);
        assert_eq!(LinearPolicy::from_json(&p.to_json()).unwrap(), p);
        assert!(LinearPolicy::from_json("{\"format\":\"x\"}").is_err());
    }

    #[test]
    fn normalization_handles_constant_columns() {
        let n = normalize_features(&[[1.0, 2.0, 0.0, 0.0, 0.0, 0.0], [3.0, 2.0, 0.0, 0.0, 0.0, 0.0]]);
        assert_eq!(n[0][0], 0.0);
        assert_eq!(n[1][0], 1.0);
        assert_eq!(n[0][1], 0.0);
    }

    #[test]
    fn selectors_honor_contract() {
        let g = diamond();
        let worlds = vec![World::new(vec![true, false, true, true]), World::all_valid(4)];
        let mut s = SearchState::new(4);
        s.apply(0, true).unwrap();
        let p = s.lazy_path(&g).unwrap();
        let mut sels: Vec<Box<dyn EdgeSelector>> = vec![
            Box::new(BaselineSelector::new(Baseline::Forward, 0)),
            Box::new(BaselineSelector::new(Baseline::Backward, 0)),
            Box::new(BaselineSelector::new(Baseline::Alternate, 0)),
            Box::new(BaselineSelector::new(Baseline::Random, 0)),
            Box::new(FailFast::new(&worlds).unwrap()),
            Box::new(PostFailFast::new(worlds.clone()).unwrap()),
            Box::new(LinearSelector::new(LinearPolicy::pdl(), FeatureModel::new(worlds).unwrap())),
        ];
        for sel in &mut sels {
            let e = sel.select(&g, &p, &s).unwrap();
            assert!(p.contains(e) && s.status(e) == EdgeStatus::Unevaluated, "{}", sel.name());
        }
    }
}
