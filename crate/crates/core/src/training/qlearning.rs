//! Tabular Q-learning over evaluation records.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, ExplicitGraph, Path};
use crate::rng;
use crate::search::{goal_test, unevaluated_on, EdgeSelector, EdgeStatus, GoalTest, SearchState};
use crate::world::WorldDistribution;

/// Largest edge count accepted by the tabular methods.
pub const MAX_TABULAR_EDGES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QLearningConfig {
    pub episodes: usize,
    /// ε decays linearly from `epsilon0` to zero over these episodes.
    pub exploration_episodes: usize,
    pub epsilon0: f64,
    pub discount: f64,
    pub learning_rate: f64,
}

impl QLearningConfig {
    /// Table I settings for environment 1.
    pub fn env1() -> Self {
        Self {
            episodes: 3000,
            exploration_episodes: 100,
            epsilon0: 1.0,
            discount: 1.0,
            learning_rate: 0.5,
        }
    }

    /// Table I settings for environment 2.
    pub fn env2() -> Self {
        Self {
            episodes: 3500,
            exploration_episodes: 150,
            ..Self::env1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config("qlearning.discount must be in (0, 1]".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("qlearning.learning_rate must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(Error::Config("qlearning.epsilon0 must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        if episode >= self.exploration_episodes {
            0.0
        } else {
            self.epsilon0 * (1.0 - episode as f64 / self.exploration_episodes as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub edge: EdgeId,
    pub value: f64,
    pub visits: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: HashMap<SearchState, Vec<QEntry>>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unvisited pairs read as zero.
    pub fn value(&self, state: &SearchState, edge: EdgeId) -> f64 {
        self.entry(state, edge).map_or(0.0, |q| q.value)
    }

    pub fn entry(&self, state: &SearchState, edge: EdgeId) -> Option<&QEntry> {
        self.entries.get(state)?.iter().find(|q| q.edge == edge)
    }

    pub fn num_states(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SearchState, &QEntry)> {
        self.entries.iter().flat_map(|(s, qs)| qs.iter().map(move |q| (s, q)))
    }

    fn update(&mut self, state: &SearchState, edge: EdgeId, target: f64, alpha: f64) {
        let row = self.entries.entry(state.clone()).or_default();
        let q = match row.iter().position(|q| q.edge == edge) {
            Some(i) => &mut row[i],
            None => {
                row.push(QEntry {
                    edge,
                    value: 0.0,
                    visits: 0,
                });
                row.last_mut().expect("just pushed")
            }
        };
        q.value += alpha * (target - q.value);
        q.visits += 1;
    }

    pub fn max_value(&self, state: &SearchState, actions: &[EdgeId]) -> f64 {
        actions
            .iter()
            .map(|&a| self.value(state, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action; ties go to the earliest.
    pub fn greedy(&self, state: &SearchState, actions: &[EdgeId]) -> Option<EdgeId> {
        let mut best: Option<(EdgeId, f64)> = None;
        for &a in actions {
            let v = self.value(state, a);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a)
    }

    pub fn to_file(&self) -> QTableFile {
        let mut entries: Vec<QTableRow> = self
            .iter()
            .map(|(s, q)| QTableRow {
                state: encode_state(s),
                edge: q.edge,
                value: q.value,
                visits: q.visits,
            })
            .collect();
        entries.sort_by(|a, b| a.state.cmp(&b.state).then(a.edge.cmp(&b.edge)));
        QTableFile {
            format: QTABLE_FORMAT.into(),
            version: QTABLE_FORMAT_VERSION,
            entries,
        }
    }

    pub fn from_file(file: QTableFile) -> Result<Self> {
        if file.format != QTABLE_FORMAT || file.version != QTABLE_FORMAT_VERSION {
            return Err(Error::Format {
                kind: "q-table",
                msg: format!("unsupported format {} v{}", file.format, file.version),
            });
        }
        let mut table = QTable::new();
        for row in file.entries {
            let state = decode_state(&row.state).ok_or_else(|| Error::Format {
                kind: "q-table",
                msg: format!("bad state {:?}", row.state),
            })?;
            table.entries.entry(state).or_default().push(QEntry {
                edge: row.edge,
                value: row.value,
                visits: row.visits,
            });
        }
        Ok(table)
    }
}

/// State vector as comma-separated `-1/0/1` codes.
pub fn encode_state(s: &SearchState) -> String {
    s.codes().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

pub fn decode_state(text: &str) -> Option<SearchState> {
    text.split(',')
        .map(|c| c.trim().parse::<i8>().ok().and_then(EdgeStatus::from_code))
        .collect::<Option<Vec<_>>>()
        .map(SearchState::from_statuses)
}

pub const QTABLE_FORMAT: &str = "lazysp-qtable";
pub const QTABLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QTableRow {
    pub state: String,
    pub edge: EdgeId,
    pub value: f64,
    pub visits: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QTableFile {
    pub format: String,
    pub version: u32,
    pub entries: Vec<QTableRow>,
}

#[derive(Debug, Clone)]
pub struct QLearningRun {
    pub table: QTable,
    /// Reward of every training episode.
    pub episode_rewards: Vec<f64>,
}

pub(crate) fn check_tabular(graph: &ExplicitGraph) -> Result<()> {
    if graph.num_edges() > MAX_TABULAR_EDGES {
        return Err(Error::StateSpaceTooLarge {
            edges: graph.num_edges(),
            limit: MAX_TABULAR_EDGES,
        });
    }
    Ok(())
}

/// ε-greedy tabular Q-learning. Episode `i` draws its world and exploration
/// coins from stream `i` of `seed`.
pub fn q_learning(
    graph: &ExplicitGraph,
    dist: &WorldDistribution,
    config: &QLearningConfig,
    seed: u64,
) -> Result<QLearningRun> {
    check_tabular(graph)?;
    config.validate()?;
    let mut table = QTable::new();
    let mut episode_rewards = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let mut rng = rng::stream(seed, episode as u64);
        let world = dist.sample(&mut rng)?;
        let epsilon = config.epsilon(episode);
        let mut state = SearchState::new(graph.num_edges());
        let mut reward = 0.0;
        let mut actions = match goal_test(graph, &state) {
            GoalTest::Pending(p) => unevaluated_on(&p, &state),
            _ => Vec::new(),
        };
        while !actions.is_empty() {
            let a = if rng.gen::<f64>() < epsilon {
                actions[rng.gen_range(0..actions.len())]
            } else {
                table.greedy(&state, &actions).expect("non-empty action set")
            };
            let mut next = state.clone();
            next.apply(a, world.is_valid(a))?;
            let next_actions = match goal_test(graph, &next) {
                GoalTest::Pending(p) => unevaluated_on(&p, &next),
                _ => Vec::new(),
            };
            let bootstrap = if next_actions.is_empty() {
                0.0
            } else {
                table.max_value(&next, &next_actions)
            };
            table.update(&state, a, -1.0 + config.discount * bootstrap, config.learning_rate);
            reward -= 1.0;
            state = next;
            actions = next_actions;
        }
        episode_rewards.push(reward);
    }
    Ok(QLearningRun {
        table,
        episode_rewards,
    })
}

/// Greedy policy of a Q-table.
#[derive(Debug, Clone)]
pub struct QGreedySelector {
    table: QTable,
}

impl QGreedySelector {
    pub fn new(table: QTable) -> Self {
        Self { table }
    }
}

impl EdgeSelector for QGreedySelector {
    fn select(&mut self, _: &ExplicitGraph, path: &Path, state: &SearchState) -> Result<EdgeId> {
        self.table
            .greedy(state, &unevaluated_on(path, state))
            .ok_or(Error::PathFullyEvaluated)
    }

    fn name(&self) -> String {
        "qlearning".into()
    }
}
