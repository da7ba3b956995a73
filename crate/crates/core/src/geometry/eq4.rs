//! Condition checks transported through the hyperplane transform, and the
//! finite-difference harness for the distance gradient.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::LinearClassifier;
use crate::welfare::{validate_probe, ConditionReport, Expectation, WelfareWeight};

use super::{build_transform, distance_gradient, target_side, transformed_distance, HyperplaneProjection, RigidMotion};

/// Central differences `(f(x + s e_i) - f(x - s e_i)) / 2s` for every coordinate.
pub fn central_difference_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe)?;
        probe[i] = x[i] - step;
        let minus = f(&probe)?;
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// One configuration for the gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCase {
    pub x: Vec<f64>,
    pub h: LinearClassifier,
    pub h_prime: LinearClassifier,
}

impl GradientCase {
    /// Random `(x, h, h')` with `d` drawn from `dims` and `D(x) > min_distance`.
    pub fn random_batch(
        count: usize,
        seed: u64,
        dims: std::ops::RangeInclusive<usize>,
        min_distance: f64,
    ) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cases = Vec::with_capacity(count);
        while cases.len() < count {
            let d = rng.random_range(dims.clone());
            let mut draw =
                |scale: f64| -> Vec<f64> { (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect() };
            let h = LinearClassifier::new(draw(1.0), draw(1.0)[0]);
            let h_prime = LinearClassifier::new(draw(1.0), draw(1.0)[0]);
            let x = draw(3.0);
            let Ok(hp) = HyperplaneProjection::new(&h) else {
                continue;
            };
            let Ok(t) = build_transform(&h, &h_prime) else { continue };
            match transformed_distance(&x, &hp, &t) {
                Ok(dist) if dist > min_distance => cases.push(GradientCase { x, h, h_prime }),
                _ => continue,
            }
        }
        cases
    }
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compare the analytic distance gradient with central differences for each
/// case; a violation is a relative error above `rel_tol`.
pub fn check_gradients(cases: &[GradientCase], step: f64, rel_tol: f64) -> Result<ConditionReport> {
    validate_probe(step, rel_tol, cases.len())?;
    let mut report = ConditionReport::new(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let hp = HyperplaneProjection::new(&case.h)?;
        let t = build_transform(&case.h, &case.h_prime)?;
        let analytic = distance_gradient(&case.x, &hp, &t)?;
        let numeric = central_difference_gradient(|x| transformed_distance(x, &hp, &t), &case.x, step)?;
        let err = rel_error(&analytic, &numeric);
        if !(err <= rel_tol) {
            report.record(
                format!("case {i}: d={}, relative gradient error", case.x.len()),
                err,
                Expectation::Equal,
            );
        }
    }
    Ok(report)
}

/// A feature vector with the individual's income.
#[derive(Debug, Clone, PartialEq)]
pub struct Eq4Sample {
    pub x: Vec<f64>,
    pub income: f64,
}

/// Weight re-expressed over the transported distance, signed by the side of
/// the target hyperplane `x` falls on.
fn signed_distance(x: &[f64], hp: &HyperplaneProjection, t: &RigidMotion) -> Result<f64> {
    Ok(target_side(x, hp, t)? * transformed_distance(x, hp, t)?)
}

fn transported_gain<W: WelfareWeight + ?Sized>(
    wf: &W,
    x: &[f64],
    income: f64,
    hp: &HyperplaneProjection,
    t: &RigidMotion,
) -> Result<f64> {
    wf.marginal_gain(signed_distance(x, hp, t)?, income)
}

/// Check the transported weight condition at each sample.
///
/// Three probes per sample, all with central differences of size `step`:
///
/// * a random feature direction oriented so that `dD > 0` at fixed income:
///   `dw/dD * dD` must strictly exceed `|w / du * du' * dx^m|` (zero here),
///   and the finite-difference change in `w_f` must be positive;
/// * a feature direction tangent to the level set of `D`: `|dw_f| <= tol`;
/// * an income perturbation at fixed `x`: `|dw_f| <= tol`.
///
/// Samples within `10 * step` of the target hyperplane or of `D = 0` are
/// skipped, since the signed distance is not differentiable there.
pub fn check_eq4<W: WelfareWeight + ?Sized>(
    wf: &W,
    samples: &[Eq4Sample],
    hp: &HyperplaneProjection,
    t: &RigidMotion,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<ConditionReport> {
    validate_probe(step, tol, samples.len())?;
    if t.dim() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            found: t.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConditionReport::new(samples.len());
    let d = hp.dim();
    let target_normal = t.rotation() * hp.normal();
    let target_origin = t.apply_vec(hp.anchor());

    for (s, sample) in samples.iter().enumerate() {
        let x = &sample.x;
        let m = sample.income;
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let dist_to_target = target_normal.dot(&(&xv - &target_origin)).abs();
        let dist = transformed_distance(x, hp, t)?;
        if dist_to_target <= 10.0 * step || dist <= 10.0 * step {
            continue;
        }
        let side = target_side(x, hp, t)?;
        let signed = side * dist;
        let grad: Vec<f64> = distance_gradient(x, hp, t)?.iter().map(|g| side * g).collect();
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        normalize(&mut dir);
        let mut d_dist = dot(&grad, &dir) * step;
        if d_dist < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
            d_dist = -d_dist;
        }

        if d_dist > 0.0 {
            let w = wf.weight(signed, m)?;
            let dw_dd = (wf.weight(signed + step, m)? - wf.weight(signed - step, m)?) / (2.0 * step);
            let lhs = dw_dd * d_dist;
            // income held fixed on this probe
            let dm = 0.0;
            let rhs = (w / wf.utility().delta_u(m)? * wf.utility().delta_u_slope(m)? * dm).abs();
            if !(lhs > rhs) {
                report.record(
                    format!("sample {s}: dD={d_dist}, dw/dD*dD={lhs} not above {rhs}"),
                    lhs - rhs,
                    Expectation::Increase,
                );
            }
            // finite-difference sign only when the first-order change clears rounding
            if d_dist > 1e-3 * step * grad_norm.max(1e-300) {
                let plus: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + step * u).collect();
                let minus: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a - step * u).collect();
                let change = transported_gain(wf, &plus, m, hp, t)? - transported_gain(wf, &minus, m, hp, t)?;
                if !(change > 0.0) {
                    report.record(
                        format!("sample {s}: dD={d_dist} > 0 but finite-difference dw_f={change}"),
                        change,
                        Expectation::Increase,
                    );
                }
            }
        }

        if grad_norm > 0.0 {
            let mut tangent: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let unit_grad: Vec<f64> = grad.iter().map(|g| g / grad_norm).collect();
            for _ in 0..2 {
                let along = dot(&tangent, &unit_grad);
                tangent.iter_mut().zip(&unit_grad).for_each(|(v, g)| *v -= along * g);
            }
            if normalize(&mut tangent) {
                let plus: Vec<f64> = x.iter().zip(&tangent).map(|(a, u)| a + step * u).collect();
                let minus: Vec<f64> = x.iter().zip(&tangent).map(|(a, u)| a - step * u).collect();
                let change = transported_gain(wf, &plus, m, hp, t)? - transported_gain(wf, &minus, m, hp, t)?;
                report.note_zero_probe(change);
                if change.abs() > tol {
                    report.record(
                        format!("sample {s}: tangent direction, dw_f={change}"),
                        change,
                        Expectation::NoChange,
                    );
                }
            }
        }

        let dm = if rng.random_bool(0.5) { step } else { -step };
        let change = transported_gain(wf, x, m + dm, hp, t)? - transported_gain(wf, x, m - dm, hp, t)?;
        report.note_zero_probe(change);
        if change.abs() > tol {
            report.record(
                format!("sample {s}: income step dx^m={dm}, dw_f={change}"),
                change,
                Expectation::NoChange,
            );
        }
    }
    Ok(report)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}
