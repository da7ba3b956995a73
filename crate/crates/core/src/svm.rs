//! Linear SVM training by regularized hinge-loss minimization.
//!
//! The optimizer is a seeded stochastic subgradient method (Pegasos-style):
//! one pass per epoch over a freshly shuffled order, step size
//! `eta0 / (1 + lambda * t)` with `t` the global step counter. The intercept
//! follows the subgradient but is not regularized. After every epoch the full
//! objective is evaluated and the best iterate seen so far is kept.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LinearClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// L2 coefficient on `theta`.
    pub reg_lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Initial step size.
    pub eta0: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            reg_lambda: 1e-3,
            epochs: 100,
            seed: 0,
            eta0: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_lambda > 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::config("train.reg_lambda", "must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::config("train.eta0", "must be positive and finite"));
        }
        Ok(())
    }

    fn step_size(&self, t: u64) -> f64 {
        self.eta0 / (1.0 + self.reg_lambda * t as f64)
    }
}

/// Classifier plus the optimization trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: LinearClassifier,
    /// Objective of the returned (best-seen) iterate.
    pub objective: f64,
    /// Objective of each recorded iterate: the starting point, then one entry per epoch.
    pub iterate_objectives: Vec<f64>,
    /// Running minimum of `iterate_objectives`.
    pub best_objectives: Vec<f64>,
}

/// `(1/n) sum max(0, 1 - y h(x)) + (lambda/2) |theta|^2`.
pub fn hinge_objective(classifier: &LinearClassifier, dataset: &Dataset, reg_lambda: f64) -> Result<f64> {
    classifier.check_dim(dataset)?;
    Ok(mean_hinge(classifier, dataset) + 0.5 * reg_lambda * classifier.norm_sq())
}

fn mean_hinge(classifier: &LinearClassifier, dataset: &Dataset) -> f64 {
    let total: f64 = dataset
        .individuals()
        .iter()
        .map(|i| (1.0 - i.label.sign() * classifier.margin_unchecked(&i.features)).max(0.0))
        .sum();
    total / dataset.len() as f64
}

pub fn train_svm(dataset: &Dataset, config: &TrainConfig) -> Result<LinearClassifier> {
    Ok(train_svm_traced(dataset, config)?.classifier)
}

pub fn train_svm_traced(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    subgradient_descent(dataset, config, None)
}

/// Linear penalty `strength * |theta . direction|`, added to the hinge objective.
#[derive(Debug, Clone)]
pub(crate) struct AbsLinearPenalty {
    pub strength: f64,
    pub direction: Vec<f64>,
}

impl AbsLinearPenalty {
    fn value(&self, theta: &[f64]) -> f64 {
        self.strength * dot(theta, &self.direction).abs()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn subgradient_descent(
    dataset: &Dataset,
    config: &TrainConfig,
    penalty: Option<&AbsLinearPenalty>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let inds = dataset.individuals();
    let has_pos = inds.iter().any(|i| i.label.is_positive());
    let has_neg = inds.iter().any(|i| !i.label.is_positive());
    if !(has_pos && has_neg) {
        return Err(Error::DegenerateTrainingSet);
    }

    let lambda = config.reg_lambda;
    let objective = |c: &LinearClassifier| {
        let base = mean_hinge(c, dataset) + 0.5 * lambda * c.norm_sq();
        match penalty {
            Some(p) => base + p.value(&c.theta),
            None => base,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut current = LinearClassifier::zeros(dataset.dim());

    let start = objective(&current);
    let mut best = current.clone();
    let mut best_obj = start;
    let mut iterate_objectives = vec![start];
    let mut best_objectives = vec![start];

    let mut t: u64 = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let ind = &inds[idx];
            let eta = config.step_size(t);
            let y = ind.label.sign();
            let violated = y * current.margin_unchecked(&ind.features) < 1.0;

            let shrink = 1.0 - eta * lambda;
            for th in current.theta.iter_mut() {
                *th *= shrink;
            }
            if violated {
                for (th, x) in current.theta.iter_mut().zip(&ind.features) {
                    *th += eta * y * x;
                }
                current.b += eta * y;
            }
            if let Some(p) = penalty {
                let s = dot(&current.theta, &p.direction);
                // subgradient of |s| at 0 taken as 0
                let sign = if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                if sign != 0.0 {
                    for (th, c) in current.theta.iter_mut().zip(&p.direction) {
                        *th -= eta * p.strength * sign * c;
                    }
                }
            }
            t += 1;
        }

        let obj = objective(&current);
        iterate_objectives.push(obj);
        if obj < best_obj {
            best_obj = obj;
            best = current.clone();
        }
        best_objectives.push(best_obj);
    }

    Ok(TrainOutcome {
        classifier: best,
        objective: best_obj,
        iterate_objectives,
        best_objectives,
    })
}

/// Fraction of individuals whose label matches the sign rule.
pub fn training_accuracy(classifier: &LinearClassifier, dataset: &Dataset) -> Result<f64> {
    let margins = classifier.margins(dataset)?;
    let correct = margins
        .iter()
        .zip(dataset.individuals())
        .filter(|(&h, i)| (h > 0.0) == i.label.is_positive())
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}
