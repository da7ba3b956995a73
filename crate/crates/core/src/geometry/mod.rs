//! Hyperplane geometry for comparing an original classifier `h` with an
//! adjusted classifier `h'`.
//!
//! A point `x` is projected orthogonally onto `h`; a rigid motion `T` carries
//! `h` onto `h'`; `D(x) = |x - T(P_h x)|` is the distance from `x` to the
//! image of its projection. The projection is affine when `b != 0`, so it is
//! stored as a linear part `P = I - n n^T` plus the anchor `p0`, the point of
//! `h` closest to the origin: `P_h x = P x + p0`.

mod eq4;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::LinearClassifier;

pub use eq4::{central_difference_gradient, check_eq4, check_gradients, Eq4Sample, GradientCase};

/// Squared norms below this are treated as a zero normal.
const DEGENERATE_NORM_SQ: f64 = 1e-300;
/// Below this, the in-plane component of `n'` is treated as zero (parallel or antipodal normals).
const PARALLEL_EPS: f64 = 1e-12;

/// Orthogonal projection onto the hyperplane `theta . x + b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneProjection {
    classifier: LinearClassifier,
    normal: DVector<f64>,
    anchor: DVector<f64>,
    norm_sq: f64,
}

impl HyperplaneProjection {
    pub fn new(classifier: &LinearClassifier) -> Result<Self> {
        let norm_sq = classifier.norm_sq();
        if !(norm_sq > DEGENERATE_NORM_SQ) || !norm_sq.is_finite() {
            return Err(Error::DegenerateHyperplane);
        }
        let theta = DVector::from_column_slice(&classifier.theta);
        let normal = &theta / norm_sq.sqrt();
        let anchor = &theta * (-classifier.b / norm_sq);
        Ok(HyperplaneProjection {
            classifier: classifier.clone(),
            normal,
            anchor,
            norm_sq,
        })
    }

    pub fn classifier(&self) -> &LinearClassifier {
        &self.classifier
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Unit normal `theta / |theta|`.
    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    /// `-b theta / |theta|^2`.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    /// The linear part `I - n n^T`.
    pub fn linear_part(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.normal * self.normal.transpose()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `x - ((theta . x + b) / |theta|^2) theta`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.project_vec(&DVector::from_column_slice(x)).as_slice().to_vec())
    }

    pub(crate) fn project_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let h = self.classifier.margin_unchecked(x.as_slice());
        let theta = DVector::from_column_slice(&self.classifier.theta);
        x - theta * (h / self.norm_sq)
    }
}

/// `T(p) = R p + t` with `R` a proper rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

impl RigidMotion {
    pub fn identity(dim: usize) -> Self {
        RigidMotion {
            rotation: DMatrix::identity(dim, dim),
            translation: DVector::zeros(dim),
        }
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: p.len(),
            });
        }
        Ok(self.apply_vec(&DVector::from_column_slice(p)).as_slice().to_vec())
    }

    pub(crate) fn apply_vec(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.rotation * p + &self.translation
    }

    /// Largest entry of `|R^T R - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim();
        let gram = self.rotation.transpose() * &self.rotation - DMatrix::<f64>::identity(d, d);
        gram.amax()
    }

    pub fn determinant(&self) -> f64 {
        self.rotation.clone().determinant()
    }
}

/// The canonical rigid motion carrying hyperplane `h` onto `h_prime`.
///
/// The rotation is the minimal one in the plane spanned by the two unit
/// normals (identity on its orthogonal complement); the translation sends the
/// anchor of `h` onto the anchor of `h_prime`. Antipodal normals are rotated
/// by pi in the plane spanned by `n` and the standard basis axis least
/// aligned with `n`.
pub fn build_transform(h: &LinearClassifier, h_prime: &LinearClassifier) -> Result<RigidMotion> {
    if h.dim() != h_prime.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: h_prime.dim(),
        });
    }
    let src = HyperplaneProjection::new(h)?;
    let dst = HyperplaneProjection::new(h_prime)?;
    let d = src.dim();
    let u = src.normal();
    let target = dst.normal();

    let cos_raw = u.dot(target);
    let mut w = target - u * cos_raw;
    // second Gram-Schmidt pass against cancellation when the normals nearly coincide
    let drift = u.dot(&w);
    w -= u * drift;
    let w_norm = w.norm();

    let rotation = if w_norm > PARALLEL_EPS {
        let v = w / w_norm;
        let angle = w_norm.atan2(cos_raw);
        plane_rotation(u, &v, angle)
    } else if cos_raw > 0.0 {
        DMatrix::identity(d, d)
    } else {
        if d < 2 {
            return Err(Error::NoProperRotation);
        }
        let axis = (0..d)
            .min_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()))
            .expect("dimension is at least 2");
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        let along = u.dot(&v);
        v -= u * along;
        let along = u.dot(&v);
        v -= u * along;
        v /= v.norm();
        plane_rotation(u, &v, std::f64::consts::PI)
    };

    let translation = dst.anchor() - &rotation * src.anchor();
    Ok(RigidMotion { rotation, translation })
}

/// Rotation by `angle` in the plane of orthonormal `u`, `v` (taking `u` toward `v`).
fn plane_rotation(u: &DVector<f64>, v: &DVector<f64>, angle: f64) -> DMatrix<f64> {
    let d = u.len();
    let (s, c) = angle.sin_cos();
    let uu = u * u.transpose();
    let vv = v * v.transpose();
    let vu = v * u.transpose();
    let uv = u * v.transpose();
    DMatrix::identity(d, d) + (vu - uv) * s + (uu + vv) * (c - 1.0)
}

fn residual(x: &DVector<f64>, hp: &HyperplaneProjection, t: &RigidMotion) -> DVector<f64> {
    x - t.apply_vec(&hp.project_vec(x))
}

fn check_dims(x: &[f64], hp: &HyperplaneProjection, t: &RigidMotion) -> Result<()> {
    for found in [x.len(), t.dim()] {
        if found != hp.dim() {
            return Err(Error::DimensionMismatch {
                expected: hp.dim(),
                found,
            });
        }
    }
    Ok(())
}

/// `|x - T(P_h x)|`.
pub fn transformed_distance(x: &[f64], hp: &HyperplaneProjection, t: &RigidMotion) -> Result<f64> {
    check_dims(x, hp, t)?;
    Ok(residual(&DVector::from_column_slice(x), hp, t).norm())
}

/// Analytic gradient of [`transformed_distance`] in `x`.
///
/// With `r = x - T(P_h x)` and `J = I - R P`, `grad D = J^T r / |r|`;
/// contracting with `dx` gives the total differential `dD`.
pub fn distance_gradient(x: &[f64], hp: &HyperplaneProjection, t: &RigidMotion) -> Result<Vec<f64>> {
    check_dims(x, hp, t)?;
    let r = residual(&DVector::from_column_slice(x), hp, t);
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(Error::ZeroDistance);
    }
    let d = hp.dim();
    let jac = DMatrix::identity(d, d) - t.rotation() * hp.linear_part();
    Ok((jac.transpose() * r / dist).as_slice().to_vec())
}

/// Which side of the target hyperplane `x` lies on: `sign(n' . (x - T(p0)))`,
/// with `n' = R n` the image of the source normal.
pub fn target_side(x: &[f64], hp: &HyperplaneProjection, t: &RigidMotion) -> Result<f64> {
    check_dims(x, hp, t)?;
    let x = DVector::from_column_slice(x);
    let n_prime = t.rotation() * hp.normal();
    let origin = t.apply_vec(hp.anchor());
    let s = n_prime.dot(&(x - origin));
    Ok(if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    })
}
