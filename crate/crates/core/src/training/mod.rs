//! Learning edge selectors: tabular Q-learning and exact dynamic programming
//! for small graphs, imitation of the clairvoyant oracle for large ones.

pub mod classifier;
pub mod exact;
pub mod qlearning;
pub mod stroll;

pub use classifier::{classifier_fit, ClassifierConfig, Decision, FitReport, ImitationDataset};
pub use exact::{expected_evaluations, random_expected_evaluations, ExactSolver};
pub use qlearning::{q_learning, QGreedySelector, QLearningConfig, QLearningRun, QTable, MAX_TABULAR_EDGES};
pub use stroll::{
    best_heuristic, mean_evaluations, mixture_rollin, stroll_train, stroll_train_with, IterationRecord,
    stroll_selector, MixtureSelector, RollIn, StrollConfig, StrollOutcome,
};
