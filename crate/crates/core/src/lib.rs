//! Implied social-welfare weights for linear classifiers.
//!
//! A linear SVM's positive decisions are reproduced by a planner who hands
//! out a fixed number of goods greedily by marginal welfare gain, once each
//! individual is weighted by `w(h, x^m) = exp(beta h) * k / delta_u(x^m)`.
//! The crate trains the classifier, derives those weights, checks that the
//! planner's allocation matches, applies group-threshold post-processing or
//! covariance-penalized training, and reports how welfare shifts between
//! groups under each regime.

// `!(a > b)` is used on purpose so that NaN lands in the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod fairness;
pub mod geometry;
pub mod model;
pub mod report;
pub mod svm;
pub mod welfare;

pub use error::{Error, Result};
pub use model::{Allocation, Dataset, Group, Individual, Label, LinearClassifier};
