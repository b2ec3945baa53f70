//! Lazy shortest-path search with learned edge selectors.
//!
//! A search repeatedly computes the shortest path through the edges not yet
//! found invalid, asks a selector which unevaluated edge of that path to
//! collision-check, and stops once the path is fully verified. The cost of a
//! search is the number of checks. Selectors range from fixed orderings to
//! policies trained against a clairvoyant oracle.

pub mod bench;
pub mod error;
pub mod graph;
pub mod grid;
pub mod oracle;
pub mod rng;
pub mod search;
pub mod selectors;
pub mod training;
pub mod world;

pub use error::{Error, Result};
pub use graph::{EdgeId, ExplicitGraph, Path, VertexId};
pub use search::{run_lazysp, EdgeSelector, EpisodeResult, SearchState};
pub use selectors::{Baseline, FeatureModel, LinearPolicy, SelectorSpec};
pub use world::{World, WorldDistribution};
