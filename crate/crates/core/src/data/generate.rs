use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Dataset, Group, Individual, Label, LinearClassifier};

use super::config::GeneratorConfig;

/// Draw a population from `config`. Group 0 rows come first, then group 1.
pub fn generate_population(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = LinearClassifier::new(config.true_theta.clone(), config.true_b);
    let mut individuals = Vec::with_capacity(config.groups.iter().map(|g| g.n).sum());

    for (group, spec) in Group::ALL.into_iter().zip(&config.groups) {
        let incomes = LogNormal::new(spec.income_mu, spec.income_sigma)
            .map_err(|e| Error::config("generator.income_sigma", e.to_string()))?;
        let noise = Normal::new(0.0, config.feature_scale)
            .map_err(|e| Error::config("generator.feature_scale", e.to_string()))?;
        for _ in 0..spec.n {
            let features: Vec<f64> = spec.feature_mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
            let income = incomes.sample(&mut rng).max(config.income_floor);
            let mut label = Label::from_score(truth.margin_unchecked(&features));
            if rng.random_bool(config.label_noise) {
                label = match label {
                    Label::Positive => Label::Negative,
                    Label::Negative => Label::Positive,
                };
            }
            individuals.push(Individual::new(features, income, group, label)?);
        }
    }
    Dataset::new(individuals)
}

/// Two 2-D Gaussian blobs centred at `(-2, 0)` (label -1) and `(2, 0)`
/// (label +1) with unit variance, conditioned on `|x_1| >= gap / 2` on the
/// correct side, so the classes are separable with that gap.
pub fn separable_blobs(n: usize, gap: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut individuals = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Negative } else { Label::Positive };
        let center = 2.0 * label.sign();
        let x = loop {
            let x1 = center + rng.sample::<f64, _>(StandardNormal);
            if x1 * label.sign() >= gap / 2.0 {
                break x1;
            }
        };
        let y: f64 = rng.sample(StandardNormal);
        let group = if i % 4 < 2 { Group::Zero } else { Group::One };
        individuals.push(Individual::new(vec![x, y], 100.0, group, label)?);
    }
    Dataset::new(individuals)
}
