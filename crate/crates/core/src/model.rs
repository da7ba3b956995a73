//! Domain types shared across the crate: individuals, datasets, linear
//! classifiers and binary allocations.
//!
//! Labels live in `{-1, +1}` (what the hinge loss consumes) while allocations
//! live in `{0, 1}` (what the planner hands out). The two are never converted
//! implicitly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Zero, Group::One];

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    /// The tag as a number, used by the covariance proxy.
    pub fn as_f64(self) -> f64 {
        self.index() as f64
    }
}

impl TryFrom<i64> for Group {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        match value {
            0 => Ok(Group::Zero),
            1 => Ok(Group::One),
            other => Err(Error::UnknownGroup(other)),
        }
    }
}

impl From<Group> for i64 {
    fn from(g: Group) -> i64 {
        g.index() as i64
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Ground-truth label, `+1` meaning creditworthy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Label from a score; zero maps to negative.
    pub fn from_score(score: f64) -> Label {
        if score > 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub features: Vec<f64>,
    /// Income `x^m`, strictly positive.
    pub income: f64,
    pub group: Group,
    pub label: Label,
}

impl Individual {
    pub fn new(features: Vec<f64>, income: f64, group: Group, label: Label) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if !income.is_finite() {
            return Err(Error::NonFinite("income"));
        }
        if income <= 0.0 {
            return Err(Error::NonPositiveIncome(income));
        }
        Ok(Individual {
            features,
            income,
            group,
            label,
        })
    }
}

/// An ordered, non-empty population sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    individuals: Vec<Individual>,
    dim: usize,
}

impl Dataset {
    pub fn new(individuals: Vec<Individual>) -> Result<Self> {
        let first = individuals.first().ok_or(Error::EmptyDataset)?;
        let dim = first.features.len();
        for ind in &individuals {
            if ind.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ind.features.len(),
                });
            }
            if ind.income <= 0.0 {
                return Err(Error::NonPositiveIncome(ind.income));
            }
        }
        Ok(Dataset { individuals, dim })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn incomes(&self) -> Vec<f64> {
        self.individuals.iter().map(|i| i.income).collect()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.individuals.iter().map(|i| i.group).collect()
    }

    pub fn group_size(&self, group: Group) -> usize {
        self.individuals.iter().filter(|i| i.group == group).count()
    }

    pub fn has_both_groups(&self) -> bool {
        Group::ALL.iter().all(|&g| self.group_size(g) > 0)
    }

    /// Errors with the first absent group, if any.
    pub fn require_both_groups(&self) -> Result<()> {
        match Group::ALL.iter().find(|&&g| self.group_size(g) == 0) {
            Some(&g) => Err(Error::MissingGroup(g)),
            None => Ok(()),
        }
    }
}

/// Linear score `h(x) = theta . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub theta: Vec<f64>,
    pub b: f64,
}

impl LinearClassifier {
    pub fn new(theta: Vec<f64>, b: f64) -> Self {
        LinearClassifier { theta, b }
    }

    pub fn zeros(dim: usize) -> Self {
        LinearClassifier {
            theta: vec![0.0; dim],
            b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `theta . x + b`, summed left to right.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("margin input"));
        }
        Ok(self.margin_unchecked(x))
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (t, v) in self.theta.iter().zip(x) {
            acc += t * v;
        }
        acc + self.b
    }

    pub fn margins(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        self.check_dim(dataset)?;
        Ok(dataset
            .individuals()
            .iter()
            .map(|i| self.margin_unchecked(&i.features))
            .collect())
    }

    pub(crate) fn check_dim(&self, dataset: &Dataset) -> Result<()> {
        if dataset.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dataset.dim(),
            });
        }
        Ok(())
    }

    /// Positive classification iff the margin is strictly positive.
    pub fn classify(&self, dataset: &Dataset) -> Result<Allocation> {
        Ok(Allocation::from_margins(&self.margins(dataset)?))
    }

    pub fn scaled(&self, c: f64) -> LinearClassifier {
        LinearClassifier {
            theta: self.theta.iter().map(|t| t * c).collect(),
            b: self.b * c,
        }
    }
}

/// A binary allocation; `budget` always equals the number of ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    assignments: Vec<bool>,
    budget: usize,
}

impl Allocation {
    pub fn from_assignments(assignments: Vec<bool>) -> Self {
        let budget = assignments.iter().filter(|&&a| a).count();
        Allocation { assignments, budget }
    }

    /// The sign rule: allocate iff margin > 0.
    pub fn from_margins(margins: &[f64]) -> Self {
        Self::from_assignments(margins.iter().map(|&h| h > 0.0).collect())
    }

    pub fn assignments(&self) -> &[bool] {
        &self.assignments
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn is_allocated(&self, i: usize) -> bool {
        self.assignments[i]
    }

    /// Number of positions where the two allocations differ.
    pub fn hamming(&self, other: &Allocation) -> usize {
        self.assignments
            .iter()
            .zip(&other.assignments)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Count of strictly positive margins: the planner's budget.
pub fn positive_count(margins: &[f64]) -> usize {
    margins.iter().filter(|&&h| h > 0.0).count()
}
