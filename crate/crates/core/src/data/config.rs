use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fairness::FairnessCriterion;
use crate::svm::TrainConfig;
use crate::welfare::WeightFunction;

/// The only generator accepted in configs.
pub const RNG_NAME: &str = "chacha8";
/// Lowest allowed income floor; keeps log utility positive.
pub const MIN_INCOME_FLOOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub n: usize,
    pub feature_mean: Vec<f64>,
    /// Log-normal income parameters.
    pub income_mu: f64,
    pub income_sigma: f64,
}

/// Synthetic lending population: Gaussian features per group, log-normal
/// incomes floored at `income_floor`, labels from a ground-truth linear rule
/// flipped with probability `label_noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub rng: String,
    pub seed: u64,
    pub dim: usize,
    pub groups: [GroupSpec; 2],
    /// Standard deviation shared by every feature.
    pub feature_scale: f64,
    pub income_floor: f64,
    pub true_theta: Vec<f64>,
    pub true_b: f64,
    pub label_noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let true_theta = vec![1.0, 0.5, -0.5, 0.25, 0.0];
        GeneratorConfig {
            rng: RNG_NAME.to_string(),
            seed: 7,
            dim: 5,
            groups: [
                GroupSpec {
                    n: 100,
                    feature_mean: true_theta.iter().map(|t| 0.4 * t).collect(),
                    income_mu: 9.9,
                    income_sigma: 0.8,
                },
                GroupSpec {
                    n: 100,
                    feature_mean: true_theta.iter().map(|t| -0.4 * t).collect(),
                    income_mu: 9.4,
                    income_sigma: 0.9,
                },
            ],
            feature_scale: 1.0,
            income_floor: MIN_INCOME_FLOOR,
            true_theta,
            true_b: 0.0,
            label_noise: 0.05,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rng != RNG_NAME {
            return Err(Error::config(
                "generator.rng",
                format!("unsupported generator `{}`, expected `{RNG_NAME}`", self.rng),
            ));
        }
        if self.dim == 0 {
            return Err(Error::config("generator.dim", "must be at least 1"));
        }
        for (g, spec) in self.groups.iter().enumerate() {
            if spec.n == 0 {
                return Err(Error::config(format!("generator.groups[{g}].n"), "must be at least 1"));
            }
            if spec.feature_mean.len() != self.dim {
                return Err(Error::config(
                    format!("generator.groups[{g}].feature_mean"),
                    format!("has {} entries, expected {}", spec.feature_mean.len(), self.dim),
                ));
            }
            if spec.feature_mean.iter().any(|v| !v.is_finite()) || !spec.income_mu.is_finite() {
                return Err(Error::config(format!("generator.groups[{g}]"), "values must be finite"));
            }
            if !(spec.income_sigma >= 0.0 && spec.income_sigma.is_finite()) {
                return Err(Error::config(
                    format!("generator.groups[{g}].income_sigma"),
                    "must be non-negative",
                ));
            }
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(Error::config("generator.feature_scale", "must be positive"));
        }
        if !(self.income_floor >= MIN_INCOME_FLOOR && self.income_floor.is_finite()) {
            return Err(Error::config(
                "generator.income_floor",
                format!("must be at least {MIN_INCOME_FLOOR}"),
            ));
        }
        if self.true_theta.len() != self.dim {
            return Err(Error::config(
                "generator.true_theta",
                format!("has {} entries, expected {}", self.true_theta.len(), self.dim),
            ));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::config("generator.label_noise", "must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairnessConfig {
    pub criterion: FairnessCriterion,
    /// Covariance-penalty weight used by in-processing when no CLI override is given.
    pub fair_lambda: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            criterion: FairnessCriterion::default(),
            fair_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConfig {
    pub samples: usize,
    pub seed: u64,
    pub step: f64,
    pub tol: f64,
    pub grad_cases: usize,
    pub grad_rel_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            samples: 1000,
            seed: 0,
            step: 1e-6,
            tol: 1e-8,
            grad_cases: 100,
            grad_rel_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub histogram_bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            histogram_bins: crate::report::DEFAULT_HISTOGRAM_BINS,
        }
    }
}

/// Every tunable of the pipeline, namespaced by stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub weights: WeightFunction,
    pub fairness: FairnessConfig,
    pub check: CheckConfig,
    pub report: ReportConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.train.validate()?;
        self.weights.validate()?;
        self.fairness.criterion.validate()?;
        if !(self.fairness.fair_lambda >= 0.0 && self.fairness.fair_lambda.is_finite()) {
            return Err(Error::config("fairness.fair_lambda", "must be non-negative"));
        }
        let c = &self.check;
        if c.samples == 0 || c.grad_cases == 0 {
            return Err(Error::config("check.samples", "must be at least 1"));
        }
        if !(c.step > 0.0 && c.tol > 0.0 && c.grad_rel_tol > 0.0) {
            return Err(Error::config("check", "step and tolerances must be positive"));
        }
        if self.report.histogram_bins == 0 {
            return Err(Error::config("report.histogram_bins", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding of the resolved config.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Stamp embedded in every output artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
}

impl Provenance {
    pub fn for_config(config: &PipelineConfig) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config.digest(),
        }
    }
}
