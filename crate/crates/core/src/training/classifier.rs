//! Cost-sensitive imitation: a softmax over the candidate edges of each
//! decision, scored linearly, fit by Newton's method.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selectors::{LinearPolicy, NUM_FEATURES};

type Vec6 = SVector<f64, NUM_FEATURES>;
type Mat6 = SMatrix<f64, NUM_FEATURES, NUM_FEATURES>;

/// One recorded decision: raw features of every candidate and the index of
/// the oracle's choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub features: Vec<[f64; NUM_FEATURES]>,
    pub label: usize,
    pub iteration: usize,
    pub episode: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImitationDataset {
    pub decisions: Vec<Decision>,
}

impl ImitationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Decision>) {
        self.decisions.extend(more);
    }

    /// Decisions with at least two candidates; the others carry no signal.
    pub fn informative(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.iter().filter(|d| d.features.len() >= 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// L2 penalty on the weights.
    pub regularization: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Per-decision min-max scaling; copied into the fitted policy.
    pub normalize: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            regularization: 1e-3,
            max_iterations: 100,
            tolerance: 1e-9,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub policy: LinearPolicy,
    pub loss: f64,
    pub iterations: usize,
    pub used_decisions: usize,
}

struct Prepared {
    features: Vec<Vec6>,
    label: usize,
}

fn prepare(dataset: &ImitationDataset, normalize: bool) -> Vec<Prepared> {
    let scaler = LinearPolicy {
        weights: [0.0; NUM_FEATURES],
        normalize,
    };
    dataset
        .informative()
        .map(|d| Prepared {
            features: scaler
                .prepare(&d.features)
                .iter()
                .map(|f| Vec6::from_column_slice(f))
                .collect(),
            label: d.label,
        })
        .collect()
}

/// Regularized mean cross-entropy with gradient and Hessian.
fn objective(data: &[Prepared], w: &Vec6, lambda: f64) -> (f64, Vec6, Mat6) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec6::zeros();
    let mut hess = Mat6::zeros();
    for d in data {
        let scores: Vec<f64> = d.features.iter().map(|f| w.dot(f)).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += max + z.ln() - scores[d.label];
        let mut mean = Vec6::zeros();
        let mut second = Mat6::zeros();
        for (f, e) in d.features.iter().zip(&exps) {
            let p = e / z;
            mean += f * p;
            second += f * f.transpose() * p;
        }
        grad += mean - d.features[d.label];
        hess += second - mean * mean.transpose();
    }
    loss = loss / n + 0.5 * lambda * w.norm_squared();
    grad = grad / n + w * lambda;
    hess = hess / n + Mat6::identity() * lambda;
    (loss, grad, hess)
}

/// Mean training loss of `policy` on the informative decisions.
pub fn dataset_loss(dataset: &ImitationDataset, policy: &LinearPolicy, regularization: f64) -> Result<f64> {
    let data = prepare(dataset, policy.normalize);
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(objective(&data, &Vec6::from_column_slice(&policy.weights), regularization).0)
}

/// Fits the weights. Returns zero weights with a warning when no decision has
/// more than one candidate.
pub fn classifier_fit(dataset: &ImitationDataset, config: &ClassifierConfig) -> Result<FitReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.regularization.is_nan() || config.regularization <= 0.0 {
        return Err(Error::Config("classifier.regularization must be positive".into()));
    }
    let data = prepare(dataset, config.normalize);
    let mut policy = LinearPolicy {
        weights: [0.0; NUM_FEATURES],
        normalize: config.normalize,
    };
    if data.is_empty() {
        log::warn!("no decision has more than one candidate; returning zero weights");
        return Ok(FitReport {
            policy,
            loss: 0.0,
            iterations: 0,
            used_decisions: 0,
        });
    }
    let lambda = config.regularization;
    let mut w = Vec6::zeros();
    let (mut loss, mut grad, mut hess) = objective(&data, &w, lambda);
    let mut iterations = 0;
    while iterations < config.max_iterations && grad.norm() > config.tolerance {
        iterations += 1;
        let step = match hess.cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -grad,
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = w + step * t;
            let (l, g, h) = objective(&data, &cand, lambda);
            if l <= loss + 1e-4 * t * slope {
                w = cand;
                loss = l;
                grad = g;
                hess = h;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    policy.weights.copy_from_slice(w.as_slice());
    Ok(FitReport {
        policy,
        loss,
        iterations,
        used_decisions: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    fn synthetic(n: usize, seed: u64) -> ImitationDataset {
        let mut rng = crate::rng::seeded(seed);
        let truth = [0.5, 2.0, -1.0, 0.0, 0.3, 1.5];
        let mut ds = ImitationDataset::new();
        for i in 0..n {
            let k = rng.gen_range(1..5);
            let features: Vec<[f64; NUM_FEATURES]> =
                (0..k).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect();
            let label = LinearPolicy {
                weights: truth,
                normalize: false,
            }
            .select_index(&features)
            .unwrap();
            ds.decisions.push(Decision {
                features,
                label,
                iteration: 0,
                episode: i,
            });
        }
        ds
    }

    fn config() -> ClassifierConfig {
        ClassifierConfig {
            normalize: false,
            ..ClassifierConfig::default()
        }
    }

    #[test]
    fn gradient_is_zero_at_optimum_and_matches_finite_differences() {
        let ds = synthetic(200, 3);
        let fit = classifier_fit(&ds, &config()).unwrap();
        let data = prepare(&ds, false);
        let w = Vec6::from_column_slice(&fit.policy.weights);
        let (_, g, _) = objective(&data, &w, 1e-3);
        assert!(g.norm() < 1e-8, "{}", g.norm());

        let probe = Vec6::from_column_slice(&[0.1, -0.2, 0.3, 0.0, 0.5, -0.4]);
        let (_, g, _) = objective(&data, &probe, 1e-3);
        for k in 0..NUM_FEATURES {
            let mut hi = probe;
            let mut lo = probe;
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            let fd = (objective(&data, &hi, 1e-3).0 - objective(&data, &lo, 1e-3).0) / 2e-6;
            assert_relative_eq!(g[k], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_beats_zero_weights_and_recovers_direction() {
        let ds = synthetic(300, 5);
        let fit = classifier_fit(&ds, &config()).unwrap();
        let zero = dataset_loss(&ds, &LinearPolicy { weights: [0.0; 6], normalize: false }, 1e-3).unwrap();
        assert!(fit.loss < zero);
        let agree = ds
            .informative()
            .filter(|d| fit.policy.select_index(&d.features) == Some(d.label))
            .count();
        let total = ds.informative().count();
        assert!(agree as f64 > 0.8 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn permutation_invariant() {
        let ds = synthetic(150, 9);
        let mut shuffled = ds.clone();
        shuffled.decisions.shuffle(&mut crate::rng::seeded(1));
        let a = classifier_fit(&ds, &config()).unwrap();
        let b = classifier_fit(&shuffled, &config()).unwrap();
        assert_relative_eq!(a.loss, b.loss, max_relative = 1e-10);
        for k in 0..NUM_FEATURES {
            assert_relative_eq!(a.policy.weights[k], b.policy.weights[k], epsilon = 1e-6);
        }
    }

    #[test]
    fn single_candidate_decisions_give_zero_weights() {
        let ds = ImitationDataset {
            decisions: vec![Decision {
                features: vec![[1.0; NUM_FEATURES]],
                label: 0,
                iteration: 0,
                episode: 0,
            }],
        };
        let fit = classifier_fit(&ds, &config()).unwrap();
        assert_eq!(fit.policy.weights, [0.0; NUM_FEATURES]);
        assert_eq!(fit.used_decisions, 0);
        assert!(matches!(
            classifier_fit(&ImitationDataset::new(), &config()),
            Err(Error::EmptyDataset)
        ));
    }
}
