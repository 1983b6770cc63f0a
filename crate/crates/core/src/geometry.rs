//! 3×3 linear maps acting on point clouds.
//!
//! Everything here is fixed-size and allocation free. Rotations are built from
//! extrinsic Euler angles composed as `R_x · R_y · R_z`, reflections from a
//! Householder normal given in spherical coordinates. The spectral-norm
//! penalty `σ(AᵀA − I)` measures how far a map is from being an isometry; its
//! gradient comes from the dominant eigenpair of the symmetric matrix
//! `AᵀA − I`, obtained with a cyclic Jacobi sweep.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute gap between the two largest |eigenvalues| of `AᵀA − I` below
/// which the penalty is treated as non-differentiable.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// A real 3×3 matrix; rows index the output axis, columns the input axis.
///
/// Applied to a cloud as `Q = P·Aᵀ`, i.e. every point maps to `A p`.
#[derive(Clone, Copy, PartialEq)]
pub struct Transform3 {
    m: [[f64; 3]; 3],
}

impl Transform3 {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const ZERO: Self = Self { m: [[0.0; 3]; 3] };

    pub fn new(m: [[f64; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn from_diagonal(d: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = d[i];
        }
        Self { m }
    }

    /// Build from nine entries in row-major order.
    pub fn from_row_major(v: [f64; 9]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, x) in v.into_iter().enumerate() {
            m[i / 3][i % 3] = x;
        }
        Self { m }
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.m[r][c];
            }
        }
        out
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: [f64; 3], v: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = u[r] * v[c];
            }
        }
        Self { m }
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.m[row][col] = value;
    }

    pub fn transpose(&self) -> Self {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = self.m[c][r];
            }
        }
        Self { m }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `A p`.
    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    /// `AᵀA − I`, the symmetric matrix whose spectral norm is the penalty.
    pub fn gram_deviation(&self) -> Self {
        let mut g = self.transpose() * *self;
        for i in 0..3 {
            g.m[i][i] -= 1.0;
        }
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }
}

impl Default for Transform3 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl fmt::Debug for Transform3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Transform3{:?}", self.m)
    }
}

impl Index<(usize, usize)> for Transform3 {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.m[r][c]
    }
}

impl Mul for Transform3 {
    type Output = Transform3;

    fn mul(self, rhs: Transform3) -> Transform3 {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = (0..3).map(|k| self.m[r][k] * rhs.m[k][c]).sum();
            }
        }
        Transform3 { m }
    }
}

impl Add for Transform3 {
    type Output = Transform3;

    fn add(self, rhs: Transform3) -> Transform3 {
        let mut out = self;
        for r in 0..3 {
            for c in 0..3 {
                out.m[r][c] += rhs.m[r][c];
            }
        }
        out
    }
}

impl Sub for Transform3 {
    type Output = Transform3;

    fn sub(self, rhs: Transform3) -> Transform3 {
        self + rhs.scale(-1.0)
    }
}

// Row-major 9-element array on the wire.
impl Serialize for Transform3 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Transform3 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(deserializer)?;
        Ok(Self::from_row_major(v))
    }
}

/// Extrinsic rotation angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
}

impl EulerAngles {
    pub fn new(theta_x: f64, theta_y: f64, theta_z: f64) -> Self {
        Self {
            theta_x,
            theta_y,
            theta_z,
        }
    }

    /// True when every component lies in `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        [self.theta_x, self.theta_y, self.theta_z]
            .iter()
            .all(|t| (lo..=hi).contains(t))
    }
}

/// Normal of a reflection plane through the origin, in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionAxis {
    /// Angle in the xy-plane from +x, radians in `[-π, π]`.
    pub azimuth: f64,
    /// Angle from +z, radians in `[0, π]`.
    pub polar: f64,
}

impl ReflectionAxis {
    pub fn new(azimuth: f64, polar: f64) -> Self {
        Self { azimuth, polar }
    }

    /// Unit normal `(sin φ cos θ, sin φ sin θ, cos φ)`.
    pub fn normal(&self) -> [f64; 3] {
        let (sp, cp) = self.polar.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [sp * ca, sp * sa, cp]
    }
}

fn rotation_x(t: f64) -> Transform3 {
    let (s, c) = t.sin_cos();
    Transform3::new([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

fn rotation_y(t: f64) -> Transform3 {
    let (s, c) = t.sin_cos();
    Transform3::new([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

fn rotation_z(t: f64) -> Transform3 {
    let (s, c) = t.sin_cos();
    Transform3::new([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// `R_x(θx) · R_y(θy) · R_z(θz)` with right-handed single-axis rotations.
pub fn euler_to_rotation(angles: EulerAngles) -> Transform3 {
    rotation_x(angles.theta_x) * rotation_y(angles.theta_y) * rotation_z(angles.theta_z)
}

/// Householder matrix `I − 2 v vᵀ` for the unit normal of `axis`.
pub fn householder_reflection(axis: ReflectionAxis) -> Transform3 {
    let v = axis.normal();
    Transform3::IDENTITY - Transform3::outer(v, v).scale(2.0)
}

/// Matrix product `a · b` (apply `b` first, then `a`).
pub fn compose(a: Transform3, b: Transform3) -> Transform3 {
    a * b
}

/// True iff every entry of `AᵀA − I` is at most `tol` in magnitude.
pub fn is_orthogonal(a: &Transform3, tol: f64) -> bool {
    a.gram_deviation().max_abs() <= tol
}

/// Eigen-decomposition of a symmetric 3×3 matrix.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricEigen {
    pub values: [f64; 3],
    /// Unit eigenvectors; `vectors[i]` pairs with `values[i]`.
    pub vectors: [[f64; 3]; 3],
}

impl SymmetricEigen {
    /// Indices sorted by descending |eigenvalue|; ties keep the lower index first.
    pub fn order_by_magnitude(&self) -> [usize; 3] {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| {
            self.values[j]
                .abs()
                .partial_cmp(&self.values[i].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }
}

/// Cyclic Jacobi eigen-solver. Only the upper triangle of `sym` is trusted
/// to be consistent with the lower one; callers pass symmetric input.
pub fn symmetric_eigen(sym: &Transform3) -> SymmetricEigen {
    let mut a = sym.m;
    let mut v = Transform3::IDENTITY.m;
    let scale = sym.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off <= JACOBI_TOL * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;

            // A ← Jᵀ A J for the plane (p, q)
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }

    let values = [a[0][0], a[1][1], a[2][2]];
    let mut vectors = [[0.0; 3]; 3];
    for (i, vec) in vectors.iter_mut().enumerate() {
        *vec = [v[0][i], v[1][i], v[2][i]];
    }
    SymmetricEigen { values, vectors }
}

/// `σ(AᵀA − I)`: the largest |eigenvalue| of the symmetric deviation.
pub fn spectral_norm_penalty(a: &Transform3) -> f64 {
    let eig = symmetric_eigen(&a.gram_deviation());
    eig.values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// The dominant |eigenvalue| of `AᵀA − I` is not simple, so the penalty has
/// no gradient at this point.
#[derive(Debug, Clone, Copy, Error)]
#[error("dominant eigenvalue of AᵀA − I is not simple (gap {gap:e})")]
pub struct DegenerateSpectrum {
    /// Gap between the two largest |eigenvalues|.
    pub gap: f64,
    /// A valid subgradient: zero when A is orthogonal within tolerance,
    /// otherwise built from the first dominant eigenvector.
    pub subgradient: Transform3,
}

/// Gradient of `σ(AᵀA − I)` with respect to the entries of `A`.
pub fn spectral_norm_penalty_grad(a: &Transform3) -> Result<Transform3, DegenerateSpectrum> {
    spectral_norm_penalty_grad_with_tol(a, DEFAULT_DEGENERACY_TOL)
}

pub fn spectral_norm_penalty_grad_with_tol(
    a: &Transform3,
    tol: f64,
) -> Result<Transform3, DegenerateSpectrum> {
    let eig = symmetric_eigen(&a.gram_deviation());
    let order = eig.order_by_magnitude();
    let lead = order[0];
    let lambda = eig.values[lead];
    let v = eig.vectors[lead];
    let gap = lambda.abs() - eig.values[order[1]].abs();

    // d λ = 2 (A v)ᵀ dA v for a simple eigenpair of AᵀA − I.
    let grad = |sign: f64| Transform3::outer(a.apply(v), v).scale(2.0 * sign);

    if gap < tol {
        let subgradient = if lambda.abs() < tol {
            // σ attains its minimum 0 here, so 0 is in the subdifferential.
            Transform3::ZERO
        } else {
            grad(lambda.signum())
        };
        return Err(DegenerateSpectrum { gap, subgradient });
    }
    Ok(grad(lambda.signum()))
}

/// Gradient, or the fallback subgradient together with a degeneracy flag.
pub fn penalty_subgradient(a: &Transform3) -> (Transform3, bool) {
    match spectral_norm_penalty_grad(a) {
        Ok(g) => (g, false),
        Err(e) => (e.subgradient, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_matrix(rng: &mut ChaCha8Rng) -> Transform3 {
        let mut v = [0.0; 9];
        v.iter_mut().for_each(|x| *x = rng.random_range(-1.5..1.5));
        Transform3::from_row_major(v)
    }

    fn assert_close(a: &Transform3, b: &Transform3, tol: f64) {
        assert!((*a - *b).max_abs() <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn euler_zero_is_identity() {
        let r = euler_to_rotation(EulerAngles::new(0.0, 0.0, 0.0));
        assert_close(&r, &Transform3::IDENTITY, 0.0);
    }

    #[test]
    fn euler_quarter_turn_about_x() {
        let r = euler_to_rotation(EulerAngles::new(PI / 2.0, 0.0, 0.0));
        let expected = Transform3::new([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]);
        assert_close(&r, &expected, 1e-15);
    }

    #[test]
    fn euler_composition_order_is_x_then_y_then_z() {
        let angles = EulerAngles::new(0.3, -1.1, 2.0);
        let expected = rotation_x(0.3) * rotation_y(-1.1) * rotation_z(2.0);
        assert_close(&euler_to_rotation(angles), &expected, 0.0);
        // reversed order is a different matrix
        let reversed = rotation_z(2.0) * rotation_y(-1.1) * rotation_x(0.3);
        assert!((euler_to_rotation(angles) - reversed).max_abs() > 1e-3);
    }

    #[test]
    fn euler_rotation_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = EulerAngles::new(
                rng.random_range(-PI..=PI),
                rng.random_range(-PI..=PI),
                rng.random_range(-PI..=PI),
            );
            let r = euler_to_rotation(a);
            assert!(is_orthogonal(&r, 1e-9));
            assert!((r.determinant() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn householder_axis_examples() {
        let z = householder_reflection(ReflectionAxis::new(0.0, 0.0));
        assert_close(&z, &Transform3::from_diagonal([1.0, 1.0, -1.0]), 1e-15);
        let x = householder_reflection(ReflectionAxis::new(0.0, PI / 2.0));
        assert_close(&x, &Transform3::from_diagonal([-1.0, 1.0, 1.0]), 1e-15);
    }

    #[test]
    fn householder_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let axis = ReflectionAxis::new(rng.random_range(-PI..=PI), rng.random_range(0.0..=PI));
            let v = axis.normal();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
            let p = householder_reflection(axis);
            assert_close(&p, &p.transpose(), 1e-15);
            assert!(is_orthogonal(&p, 1e-9));
            assert!((p.determinant() + 1.0).abs() <= 1e-9);
            assert_close(&(p * p), &Transform3::IDENTITY, 1e-9);
            let pv = p.apply(v);
            for i in 0..3 {
                assert!((pv[i] + v[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn compose_examples() {
        let a = euler_to_rotation(EulerAngles::new(0.1, 0.2, 0.3));
        assert_close(&compose(Transform3::IDENTITY, a), &a, 0.0);
        let p = householder_reflection(ReflectionAxis::new(0.7, 1.2));
        assert_close(&compose(p, p), &Transform3::IDENTITY, 1e-12);
        let q = householder_reflection(ReflectionAxis::new(-2.0, 0.4));
        assert!((compose(p, q).determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_examples() {
        let r = euler_to_rotation(EulerAngles::new(1.0, -2.0, 0.5));
        assert!(spectral_norm_penalty(&r) <= 1e-9);
        let p = householder_reflection(ReflectionAxis::new(1.0, 2.0));
        assert!(spectral_norm_penalty(&p) <= 1e-9);
        let d = Transform3::from_diagonal([1.1, 1.0, 1.0]);
        assert!((spectral_norm_penalty(&d) - 0.21).abs() < 1e-12);
        assert!((spectral_norm_penalty(&Transform3::IDENTITY.scale(2.0)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_uses_largest_magnitude_even_when_negative() {
        // AᵀA − I = diag(−0.75, 0.21, 0)
        let d = Transform3::from_diagonal([0.5, 1.1, 1.0]);
        assert!((spectral_norm_penalty(&d) - 0.75).abs() < 1e-12);
        let g = spectral_norm_penalty_grad(&d).unwrap();
        assert_close(&g, &Transform3::from_diagonal([-1.0, 0.0, 0.0]), 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = random_matrix(&mut rng);
            let m = a.gram_deviation();
            let eig = symmetric_eigen(&m);
            let mut rebuilt = Transform3::ZERO;
            for i in 0..3 {
                rebuilt = rebuilt + Transform3::outer(eig.vectors[i], eig.vectors[i]).scale(eig.values[i]);
            }
            assert_close(&rebuilt, &m, 1e-10);
        }
    }

    #[test]
    fn penalty_is_attained_at_dominant_eigenvector() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let stretch = |a: &Transform3, x: [f64; 3]| {
            let y = a.apply(x);
            (y[0] * y[0] + y[1] * y[1] + y[2] * y[2] - 1.0).abs()
        };
        for _ in 0..200 {
            let a = random_matrix(&mut rng);
            let eig = symmetric_eigen(&a.gram_deviation());
            let v = eig.vectors[eig.order_by_magnitude()[0]];
            let p = spectral_norm_penalty(&a);
            assert!((stretch(&a, v) - p).abs() <= 1e-12 * (1.0 + p));
            for _ in 0..100 {
                let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                if n > 1e-6 {
                    assert!(stretch(&a, x.map(|c| c / n)) <= p + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradient_of_stretched_identity() {
        let g = spectral_norm_penalty_grad(&Transform3::from_diagonal([1.1, 1.0, 1.0])).unwrap();
        assert_close(&g, &Transform3::from_diagonal([2.2, 0.0, 0.0]), 1e-12);
    }

    #[test]
    fn gradient_at_identity_is_degenerate() {
        let err = spectral_norm_penalty_grad(&Transform3::IDENTITY).unwrap_err();
        assert_eq!(err.subgradient, Transform3::ZERO);
        let (g, flagged) = penalty_subgradient(&Transform3::IDENTITY);
        assert!(flagged);
        assert_eq!(g, Transform3::ZERO);
    }

    #[test]
    fn degenerate_nonzero_spectrum_returns_dominant_subgradient() {
        // AᵀA − I = diag(0.44, 0.44, 0): tied dominant pair away from zero
        let err = spectral_norm_penalty_grad(&Transform3::from_diagonal([1.2, 1.2, 1.0])).unwrap_err();
        assert!(err.gap.abs() < 1e-12);
        assert!(err.subgradient.frobenius_norm() > 1.0);
    }

    fn central_difference(a: &Transform3, h: f64) -> Transform3 {
        let mut g = Transform3::ZERO;
        for r in 0..3 {
            for c in 0..3 {
                let mut plus = *a;
                plus.set(r, c, a[(r, c)] + h);
                let mut minus = *a;
                minus.set(r, c, a[(r, c)] - h);
                g.set(r, c, (spectral_norm_penalty(&plus) - spectral_norm_penalty(&minus)) / (2.0 * h));
            }
        }
        g
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 200 {
            let a = random_matrix(&mut rng);
            let Ok(g) = spectral_norm_penalty_grad(&a) else { continue };
            let fd = central_difference(&a, 1e-6);
            let rel = (g - fd).frobenius_norm() / g.frobenius_norm().max(fd.frobenius_norm());
            assert!(rel <= 1e-4, "rel {rel} at {a:?}");
            checked += 1;
        }
    }

    #[test]
    fn is_orthogonal_examples() {
        assert!(is_orthogonal(&euler_to_rotation(EulerAngles::new(0.4, 0.5, 0.6)), 1e-9));
        assert!(!is_orthogonal(&Transform3::from_diagonal([1.1, 1.0, 1.0]), 1e-9));
        assert!(is_orthogonal(&Transform3::IDENTITY, 1e-300));
    }

    #[test]
    fn distance_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let r = euler_to_rotation(EulerAngles::new(
                rng.random_range(-PI..=PI),
                rng.random_range(-PI..=PI),
                rng.random_range(-PI..=PI),
            ));
            let x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let y: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let (ax, ay) = (r.apply(x), r.apply(y));
            let d0 = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt();
            let d1 = (0..3).map(|i| (ax[i] - ay[i]).powi(2)).sum::<f64>().sqrt();
            assert!((d0 - d1).abs() <= 1e-9);
        }
    }

    #[test]
    fn serializes_row_major() {
        let a = Transform3::new([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[1.0,2.0,3.0,4.0,5.0,6.0,7.0,8.0,9.0]");
        let back: Transform3 = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
