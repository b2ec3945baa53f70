//! Imitation of the clairvoyant oracle with data aggregation.
//!
//! Each iteration rolls in with a per-episode mixture of a roll-in policy and
//! the current learner, labels every visited decision with the oracle's
//! choice, aggregates, and refits the linear policy. The returned policy is
//! the best fitted one on a fixed validation set.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph, Path};
use crate::oracle::approx_oracle_on_path;
use crate::rng::{self, Rng};
use crate::search::{run_lazysp, unevaluated_on, EdgeSelector, SearchState};
use crate::selectors::{FeatureModel, LinearPolicy, LinearSelector, SelectorSpec, NUM_FEATURES};
use crate::world::{World, WorldDistribution};

use super::classifier::{classifier_fit, ClassifierConfig, Decision, ImitationDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollIn {
    Oracle,
    Heuristic,
}

fn default_validation_worlds() -> usize {
    200
}

fn default_heuristic_worlds() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrollConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub rollin: RollIn,
    /// Explicit mixing schedule, one entry per iteration. Defaults to
    /// `1, 0, 0, ...` for oracle roll-in and `0.9^i` for heuristic roll-in.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Oracle roll-in on every episode (plain behaviour cloning).
    #[serde(default)]
    pub supervised: bool,
    #[serde(default = "default_validation_worlds")]
    pub validation_worlds: usize,
    /// Training worlds used to rank the candidate roll-in heuristics.
    #[serde(default = "default_heuristic_worlds")]
    pub heuristic_worlds: usize,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

impl StrollConfig {
    pub fn new(iterations: usize, episodes_per_iteration: usize, rollin: RollIn) -> Self {
        Self {
            iterations,
            episodes_per_iteration,
            rollin,
            beta: None,
            supervised: false,
            validation_worlds: default_validation_worlds(),
            heuristic_worlds: default_heuristic_worlds(),
            classifier: ClassifierConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.episodes_per_iteration == 0 {
            return Err(Error::Config(
                "stroll.iterations and stroll.episodes_per_iteration must be positive".into(),
            ));
        }
        if self.validation_worlds == 0 {
            return Err(Error::Config("stroll.validation_worlds must be positive".into()));
        }
        if let Some(beta) = &self.beta {
            if beta.len() < self.iterations {
                return Err(Error::Config(format!(
                    "stroll.beta has {} entries for {} iterations",
                    beta.len(),
                    self.iterations
                )));
            }
            if beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(Error::Config("stroll.beta entries must be in [0, 1]".into()));
            }
            if beta.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::Config("stroll.beta must be non-increasing".into()));
            }
        }
        Ok(())
    }

    /// Behaviour cloning on the same episode budget: a single iteration of
    /// `iterations * episodes_per_iteration` oracle roll-ins.
    pub fn behaviour_cloning(&self) -> Self {
        Self {
            iterations: 1,
            episodes_per_iteration: self.iterations * self.episodes_per_iteration,
            rollin: RollIn::Oracle,
            beta: None,
            supervised: true,
            ..self.clone()
        }
    }

    /// Mixing weight of the roll-in policy at 1-based iteration `i`.
    pub fn beta(&self, i: usize) -> f64 {
        if self.supervised {
            return 1.0;
        }
        if let Some(beta) = &self.beta {
            return beta[i - 1];
        }
        match self.rollin {
            RollIn::Oracle => {
                if i == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            RollIn::Heuristic => 0.9f64.powi(i as i32),
        }
    }
}

/// Per-episode mixture: at the start of every episode a coin with bias
/// `beta` picks the roll-in policy, otherwise the learner acts throughout.
pub struct MixtureSelector<L, R> {
    learner: L,
    rollin: R,
    beta: f64,
    rng: Rng,
    using_rollin: bool,
}

pub fn mixture_rollin<L: EdgeSelector, R: EdgeSelector>(
    learner: L,
    rollin: R,
    beta: f64,
    seed: u64,
) -> MixtureSelector<L, R> {
    MixtureSelector {
        learner,
        rollin,
        beta,
        rng: rng::seeded(seed),
        using_rollin: false,
    }
}

impl<L, R> MixtureSelector<L, R> {
    pub fn using_rollin(&self) -> bool {
        self.using_rollin
    }
}

impl<L: EdgeSelector, R: EdgeSelector> EdgeSelector for MixtureSelector<L, R> {
    fn select(&mut self, graph: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        if self.using_rollin {
            self.rollin.select(graph, path, state)
        } else {
            self.learner.select(graph, path, state)
        }
    }

    fn start_episode(&mut self, world: &World) {
        self.using_rollin = self.rng.gen::<f64>() < self.beta;
        self.learner.start_episode(world);
        self.rollin.start_episode(world);
    }

    fn name(&self) -> String {
        format!("mixture({}, {})", self.learner.name(), self.rollin.name())
    }
}

enum Actor<'a> {
    Learner(&'a LinearPolicy),
    Other(Box<dyn EdgeSelector + Send>),
}

/// Records the candidate features and the oracle label of every decision
/// while the actor drives the search.
struct Recorder<'a> {
    actor: Actor<'a>,
    model: &'a FeatureModel,
    world: World,
    decisions: Vec<(Vec<[f64; NUM_FEATURES]>, usize)>,
    fallbacks: usize,
}

impl EdgeSelector for Recorder<'_> {
    fn select(&mut self, graph: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        let candidates = self.model.candidate_features(graph, path, state)?;
        let features: Vec<_> = candidates.iter().map(|(_, f)| f.to_array()).collect();
        if unevaluated_on(path, state).iter().all(|&e| self.world.is_valid(e)) {
            self.fallbacks += 1;
        }
        let label_edge = approx_oracle_on_path(graph, state, &self.world, path)?;
        let label = candidates
            .iter()
            .position(|(e, _)| *e == label_edge)
            .expect("oracle picks an unevaluated path edge");
        let choice = match &mut self.actor {
            Actor::Learner(policy) => {
                candidates[policy.select_index(&features).expect("non-empty candidates")].0
            }
            Actor::Other(sel) => sel.select(graph, path, state)?,
        };
        self.decisions.push((features, label));
        Ok(choice)
    }

    fn start_episode(&mut self, world: &World) {
        if let Actor::Other(sel) = &mut self.actor {
            sel.start_episode(world);
        }
    }

    fn name(&self) -> String {
        "recorder".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub iteration: usize,
    pub episode: usize,
    pub rolled_in: bool,
    pub evaluations: usize,
    pub reward: f64,
    pub decisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub beta: f64,
    pub rolled_in_episodes: usize,
    pub dataset_size: usize,
    pub fit_loss: f64,
    pub policy: LinearPolicy,
    pub validation_mean: f64,
}

#[derive(Debug, Clone)]
pub struct StrollOutcome {
    pub policy: LinearPolicy,
    pub best_iteration: usize,
    pub rollin_name: String,
    pub history: Vec<IterationRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub dataset: ImitationDataset,
    /// Decisions where every unevaluated path edge was valid, so the oracle
    /// fell back to the first one.
    pub oracle_fallbacks: usize,
}

/// Mean evaluations of `spec` over `worlds`; episode `i` uses stream `i`.
pub fn mean_evaluations(
    graph: &ExplicitGraph,
    worlds: &[World],
    spec: &SelectorSpec,
    model: Option<&FeatureModel>,
    seed: u64,
) -> Result<f64> {
    if worlds.is_empty() {
        return Err(Error::Config("no worlds to evaluate on".into()));
    }
    let counts = worlds
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut sel = spec.build(model, rng::derive_seed(seed, i as u64))?;
            Ok(run_lazysp(graph, w, &mut sel)?.num_evaluations())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.iter().sum::<usize>() as f64 / counts.len() as f64)
}

/// The heuristic with the fewest mean evaluations on the training worlds;
/// ties go to the earlier entry of [`SelectorSpec::heuristics`].
pub fn best_heuristic(
    graph: &ExplicitGraph,
    model: &FeatureModel,
    worlds: &[World],
    seed: u64,
) -> Result<(SelectorSpec, f64)> {
    let mut best: Option<(SelectorSpec, f64)> = None;
    for spec in SelectorSpec::heuristics() {
        let m = mean_evaluations(graph, worlds, &spec, Some(model), seed)?;
        log::debug!("roll-in candidate {}: {m:.4}", spec.name());
        if best.as_ref().is_none_or(|(_, b)| m < *b) {
            best = Some((spec, m));
        }
    }
    Ok(best.expect("non-empty heuristic list"))
}

const VALIDATION_SALT: u64 = 0x7661_6c69_6461_7465;

pub fn stroll_train(
    graph: &ExplicitGraph,
    dist: &WorldDistribution,
    config: &StrollConfig,
    seed: u64,
) -> Result<StrollOutcome> {
    let validation = dist.sample_many(config.validation_worlds, seed ^ VALIDATION_SALT)?;
    stroll_train_with(graph, dist, &validation, config, seed, &mut |_| Ok(()))
}

/// Full trainer: explicit validation worlds and a per-iteration observer
/// (used for checkpointing).
pub fn stroll_train_with(
    graph: &ExplicitGraph,
    dist: &WorldDistribution,
    validation: &[World],
    config: &StrollConfig,
    seed: u64,
    observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> Result<StrollOutcome> {
    config.validate()?;
    if dist.training_worlds().is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    for w in validation {
        w.check_size(graph)?;
    }
    let model = FeatureModel::new(dist.training_worlds().to_vec())?;

    let rollin = match (config.rollin, config.supervised) {
        (RollIn::Oracle, _) | (_, true) => SelectorSpec::Oracle,
        (RollIn::Heuristic, false) => {
            let n = config.heuristic_worlds.min(model.training_worlds().len()).max(1);
            let (spec, score) = best_heuristic(graph, &model, &model.training_worlds()[..n], seed)?;
            log::info!("heuristic roll-in: {} ({score:.4} mean evaluations)", spec.name());
            spec
        }
    };

    let m = config.episodes_per_iteration;
    let mut learner = LinearPolicy {
        weights: [0.0; NUM_FEATURES],
        normalize: config.classifier.normalize,
    };
    let mut dataset = ImitationDataset::new();
    let mut history = Vec::with_capacity(config.iterations);
    let mut episodes = Vec::with_capacity(config.iterations * m);
    let mut fallbacks = 0;
    let mut best: Option<(usize, LinearPolicy, f64)> = None;

    for i in 1..=config.iterations {
        let beta = config.beta(i);
        let current = learner;
        let rollouts = (0..m)
            .into_par_iter()
            .map(|j| {
                let index = ((i - 1) * m + j) as u64;
                let mut r = rng::stream(seed, index);
                let world = dist.sample(&mut r)?;
                let rolled_in = r.gen::<f64>() < beta;
                let actor = if rolled_in {
                    Actor::Other(rollin.build(Some(&model), r.gen())?)
                } else {
                    Actor::Learner(&current)
                };
                let mut rec = Recorder {
                    actor,
                    model: &model,
                    world: world.clone(),
                    decisions: Vec::new(),
                    fallbacks: 0,
                };
                let result = run_lazysp(graph, &world, &mut rec)?;
                Ok((j, rolled_in, result.num_evaluations(), rec.decisions, rec.fallbacks))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rolled_in_episodes = 0;
        for (j, rolled_in, evaluations, decisions, fb) in rollouts {
            rolled_in_episodes += rolled_in as usize;
            fallbacks += fb;
            episodes.push(EpisodeRecord {
                iteration: i,
                episode: j,
                rolled_in,
                evaluations,
                reward: -(evaluations as f64),
                decisions: decisions.len(),
            });
            dataset.extend(decisions.into_iter().map(|(features, label)| Decision {
                features,
                label,
                iteration: i,
                episode: j,
            }));
        }

        let fit = classifier_fit(&dataset, &config.classifier)?;
        learner = fit.policy;
        let validation_mean = mean_evaluations(
            graph,
            validation,
            &SelectorSpec::Linear {
                name: "stroll".into(),
                policy: learner,
            },
            Some(&model),
            seed,
        )?;
        log::info!(
            "iteration {i}: beta {beta:.3}, {} decisions, loss {:.5}, validation {validation_mean:.4}",
            dataset.len(),
            fit.loss
        );
        if best.as_ref().is_none_or(|(_, _, b)| validation_mean < *b) {
            best = Some((i, learner, validation_mean));
        }
        let record = IterationRecord {
            iteration: i,
            beta,
            rolled_in_episodes,
            dataset_size: dataset.len(),
            fit_loss: fit.loss,
            policy: learner,
            validation_mean,
        };
        observer(&record)?;
        history.push(record);
    }

    if fallbacks > 0 {
        log::info!("oracle fell back to the first unevaluated edge on {fallbacks} decisions");
    }
    let (best_iteration, policy, _) = best.expect("at least one iteration");
    Ok(StrollOutcome {
        policy,
        best_iteration,
        rollin_name: rollin.name(),
        history,
        episodes,
        dataset,
        oracle_fallbacks: fallbacks,
    })
}

/// The fitted policy as a selector.
pub fn stroll_selector(outcome: &StrollOutcome, model: FeatureModel) -> LinearSelector {
    LinearSelector::new(outcome.policy, model).named("stroll")
}
