//! Numerical witnesses for the differential conditions a weight function has
//! to satisfy before the planner reproduces the classifier's ordering:
//!
//! * marginal gain strictly increases whenever the margin increases,
//!   whatever the accompanying income change;
//! * marginal gain does not move when only income moves;
//! * two individuals with the same margin have the same marginal gain,
//!   however different their incomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::utility::WelfareWeight;

/// Relative tolerance for the equal-margin, unequal-income indifference probe.
pub const INDIFFERENCE_REL_TOL: f64 = 1e-12;

const MARGIN_RANGE: (f64, f64) = (-5.0, 5.0);
const INCOME_RANGE: (f64, f64) = (10.0, 1e6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// The change should be strictly positive.
    Increase,
    /// The change should vanish to within the absolute tolerance.
    NoChange,
    /// Two values should agree to a relative tolerance.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample: String,
    pub observed: f64,
    pub expected: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub n_samples: usize,
    pub violations: Vec<Violation>,
    pub max_abs_error_at_dh_zero: f64,
}

impl ConditionReport {
    pub(crate) fn new(n_samples: usize) -> Self {
        ConditionReport {
            n_samples,
            violations: Vec::new(),
            max_abs_error_at_dh_zero: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn record(&mut self, sample: String, observed: f64, expected: Expectation) {
        self.violations.push(Violation {
            sample,
            observed,
            expected,
        });
    }

    pub(crate) fn note_zero_probe(&mut self, delta: f64) {
        self.max_abs_error_at_dh_zero = self.max_abs_error_at_dh_zero.max(delta.abs());
    }

    pub fn merge(mut self, other: ConditionReport) -> ConditionReport {
        self.n_samples += other.n_samples;
        self.violations.extend(other.violations);
        self.max_abs_error_at_dh_zero = self.max_abs_error_at_dh_zero.max(other.max_abs_error_at_dh_zero);
        self
    }
}

pub(crate) fn validate_probe(step: f64, tol: f64, samples: usize) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config("step", "must be positive"));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::config("tol", "must be positive"));
    }
    if samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    Ok(())
}

pub(crate) fn draw_income(rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = INCOME_RANGE;
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Central-difference probes of the marginal gain `w_f = w * delta_u`
/// around random `(h, x^m)` base points.
///
/// For each sample: one direction with `dh > 0` (the gain must rise), one
/// pure-income direction with `dh = 0` (the gain must stay within `tol`),
/// and one equal-margin pair at two unrelated incomes (the gains must agree
/// to [`INDIFFERENCE_REL_TOL`]).
pub fn check_weight_conditions<W: WelfareWeight + ?Sized>(
    wf: &W,
    samples: usize,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<ConditionReport> {
    validate_probe(step, tol, samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConditionReport::new(samples);
    let gain = |h: f64, m: f64| wf.marginal_gain(h, m);

    for s in 0..samples {
        let h = rng.random_range(MARGIN_RANGE.0..MARGIN_RANGE.1);
        let m = draw_income(&mut rng);

        // dh > 0, income free to move either way; keep cos(phi) away from 0
        let phi = rng.random_range(-0.45 * std::f64::consts::PI..0.45 * std::f64::consts::PI);
        let (dh, dm) = (step * phi.cos(), step * phi.sin());
        let up = gain(h + dh, m + dm)? - gain(h - dh, m - dm)?;
        if !(up > 0.0) {
            report.record(
                format!("sample {s}: h={h}, x^m={m}, dh={dh}, dx^m={dm}"),
                up,
                Expectation::Increase,
            );
        }

        // dh = 0
        let dm = if rng.random_bool(0.5) { step } else { -step };
        let flat = gain(h, m + dm)? - gain(h, m - dm)?;
        report.note_zero_probe(flat);
        if flat.abs() > tol {
            report.record(
                format!("sample {s}: h={h}, x^m={m}, dh=0, dx^m={dm}"),
                flat,
                Expectation::NoChange,
            );
        }

        let other = draw_income(&mut rng);
        indifference_probe(wf, &mut report, s, h, m, other)?;
    }
    Ok(report)
}

/// Only the equal-margin, unequal-income probe.
pub fn check_indifference<W: WelfareWeight + ?Sized>(wf: &W, samples: usize, seed: u64) -> Result<ConditionReport> {
    validate_probe(1.0, 1.0, samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConditionReport::new(samples);
    for s in 0..samples {
        let h = rng.random_range(MARGIN_RANGE.0..MARGIN_RANGE.1);
        let a = draw_income(&mut rng);
        let b = draw_income(&mut rng);
        indifference_probe(wf, &mut report, s, h, a, b)?;
    }
    Ok(report)
}

fn indifference_probe<W: WelfareWeight + ?Sized>(
    wf: &W,
    report: &mut ConditionReport,
    s: usize,
    h: f64,
    a: f64,
    b: f64,
) -> Result<()> {
    let ga = wf.marginal_gain(h, a)?;
    let gb = wf.marginal_gain(h, b)?;
    let rel = (ga - gb).abs() / ga.abs().max(gb.abs());
    if !(rel <= INDIFFERENCE_REL_TOL) {
        report.record(format!("sample {s}: h={h}, x^m={a} vs {b}"), rel, Expectation::Equal);
    }
    Ok(())
}
