//! Point clouds: representation, normalization, transforms and augmentation.

mod io;
mod shapes;

pub use io::{
    load_cloud, load_cloud_binary, load_cloud_text, save_cloud, save_cloud_binary, save_cloud_text,
    CloudFormat, DatasetManifest, ManifestEntry, BINARY_MAGIC, MANIFEST_SCHEMA_VERSION,
};
pub use shapes::{generate_shapes, Dataset, ShapeDatasetSpec, ShapeKind};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{euler_to_rotation, EulerAngles, Transform3};

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("point cloud has no points")]
    Empty,
    #[error("point cloud contains a non-finite coordinate at row {0}")]
    NonFinite(usize),
    #[error("all points of the cloud coincide")]
    DegenerateCloud,
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CloudError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        CloudError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// An `m × 3` array of Cartesian coordinates with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    pub label: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, label: Option<usize>) -> Result<Self, CloudError> {
        if points.is_empty() {
            return Err(CloudError::Empty);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(CloudError::NonFinite(i));
        }
        Ok(Self { points, label })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|x| x / n)
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| norm(*p)).fold(0.0, f64::max)
    }

    /// Same label, new coordinates (row count may differ).
    pub(crate) fn with_points(&self, points: Vec<[f64; 3]>) -> Self {
        Self {
            points,
            label: self.label,
        }
    }

    fn map_points(&self, f: impl FnMut(&[f64; 3]) -> [f64; 3]) -> Self {
        self.with_points(self.points.iter().map(f).collect())
    }
}

#[inline]
pub(crate) fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// `P·Aᵀ`: row `i` of the result is `A pᵢ`.
pub fn apply_transform(p: &PointCloud, a: &Transform3) -> PointCloud {
    p.map_points(|x| a.apply(*x))
}

/// Centre on the centroid and scale so the farthest point has norm 1.
pub fn normalize_to_unit_sphere(p: &PointCloud) -> Result<PointCloud, CloudError> {
    let c = p.centroid();
    let centred: Vec<[f64; 3]> = p
        .points
        .iter()
        .map(|x| [x[0] - c[0], x[1] - c[1], x[2] - c[2]])
        .collect();
    let radius = centred.iter().map(|x| norm(*x)).fold(0.0, f64::max);
    if radius <= f64::EPSILON * (1.0 + norm(c)) {
        return Err(CloudError::DegenerateCloud);
    }
    Ok(p.with_points(centred.into_iter().map(|x| x.map(|v| v / radius)).collect()))
}

/// Ranges for the training-time augmentation chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Rotation about +y drawn uniformly from this interval (radians).
    pub rotate_y: (f64, f64),
    /// Isotropic scale factor range.
    pub scale: (f64, f64),
    /// Per-axis translation range.
    pub translate: (f64, f64),
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate_y: (0.0, 2.0 * PI),
            scale: (0.8, 1.25),
            translate: (-0.1, 0.1),
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
        }
    }
}

impl AugmentConfig {
    /// The chain collapses to the identity map.
    pub fn identity() -> Self {
        Self {
            rotate_y: (0.0, 0.0),
            scale: (1.0, 1.0),
            translate: (0.0, 0.0),
            jitter_sigma: 0.0,
            jitter_clip: 0.0,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Rotate about y, scale, translate, then jitter each coordinate.
pub fn augment<R: Rng + ?Sized>(p: &PointCloud, cfg: &AugmentConfig, rng: &mut R) -> PointCloud {
    let theta = uniform(rng, cfg.rotate_y);
    let scale = uniform(rng, cfg.scale);
    let shift = [
        uniform(rng, cfg.translate),
        uniform(rng, cfg.translate),
        uniform(rng, cfg.translate),
    ];
    let rot = euler_to_rotation(EulerAngles::new(0.0, theta, 0.0));
    let linear = rot.scale(scale);
    let mut out = Vec::with_capacity(p.len());
    for x in &p.points {
        let mut q = linear.apply(*x);
        for k in 0..3 {
            q[k] += shift[k];
            if cfg.jitter_sigma > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                q[k] += (cfg.jitter_sigma * n).clamp(-cfg.jitter_clip, cfg.jitter_clip);
            }
        }
        out.push(q);
    }
    p.with_points(out)
}

/// With probability `prob`, rotate by Euler angles drawn uniformly from
/// `[-π, π]³`. Always consumes four draws so the stream stays aligned.
pub fn augment_p_rotation<R: Rng + ?Sized>(p: &PointCloud, prob: f64, rng: &mut R) -> PointCloud {
    augment_p_rotation_flagged(p, prob, rng).0
}

/// Like [`augment_p_rotation`], also reporting whether the rotation fired.
pub fn augment_p_rotation_flagged<R: Rng + ?Sized>(
    p: &PointCloud,
    prob: f64,
    rng: &mut R,
) -> (PointCloud, bool) {
    let u: f64 = rng.random();
    let angles = EulerAngles::new(
        rng.random_range(-PI..=PI),
        rng.random_range(-PI..=PI),
        rng.random_range(-PI..=PI),
    );
    if u < prob {
        (apply_transform(p, &euler_to_rotation(angles)), true)
    } else {
        (p.clone(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{householder_reflection, ReflectionAxis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(seed: u64, m: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..m)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        PointCloud::new(pts, Some(1)).unwrap()
    }

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![], None), Err(CloudError::Empty)));
        assert!(matches!(
            PointCloud::new(vec![[0.0, f64::NAN, 0.0]], None),
            Err(CloudError::NonFinite(0))
        ));
    }

    #[test]
    fn identity_transform_is_noop() {
        let p = random_cloud(1, 50);
        assert_eq!(apply_transform(&p, &Transform3::IDENTITY), p);
    }

    #[test]
    fn orthogonal_transform_preserves_pairwise_distances() {
        let p = random_cloud(2, 40);
        for a in [
            euler_to_rotation(EulerAngles::new(0.3, 2.0, -1.0)),
            householder_reflection(ReflectionAxis::new(1.0, 0.5)),
        ] {
            let q = apply_transform(&p, &a);
            assert_eq!(q.label, p.label);
            for i in 0..p.len() {
                for j in 0..p.len() {
                    let d0 = dist(p.points()[i], p.points()[j]);
                    let d1 = dist(q.points()[i], q.points()[j]);
                    assert!((d0 - d1).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn scaling_doubles_norms() {
        let p = random_cloud(3, 20);
        let q = apply_transform(&p, &Transform3::IDENTITY.scale(2.0));
        for (a, b) in p.points().iter().zip(q.points()) {
            assert!((2.0 * norm(*a) - norm(*b)).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_two_points() {
        let p = PointCloud::new(vec![[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]], None).unwrap();
        let q = normalize_to_unit_sphere(&p).unwrap();
        assert_eq!(q.points(), &[[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let p = normalize_to_unit_sphere(&random_cloud(4, 100)).unwrap();
        let c = p.centroid();
        assert!(norm(c) <= 1e-9);
        assert!((p.max_norm() - 1.0).abs() <= 1e-9);
        let q = normalize_to_unit_sphere(&p).unwrap();
        for (a, b) in p.points().iter().zip(q.points()) {
            assert!(dist(*a, *b) <= 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_coincident_points() {
        let p = PointCloud::new(vec![[1.0, 2.0, 3.0]; 5], None).unwrap();
        assert!(matches!(normalize_to_unit_sphere(&p), Err(CloudError::DegenerateCloud)));
    }

    #[test]
    fn identity_augmentation_is_noop() {
        let p = random_cloud(5, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = augment(&p, &AugmentConfig::identity(), &mut rng);
        assert_eq!(p, q);
    }

    #[test]
    fn jitter_is_clipped() {
        let p = random_cloud(6, 200);
        let cfg = AugmentConfig {
            jitter_sigma: 0.5,
            jitter_clip: 0.05,
            ..AugmentConfig::identity()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = augment(&p, &cfg, &mut rng);
        for (a, b) in p.points().iter().zip(q.points()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 0.05 + 1e-15);
            }
        }
    }

    #[test]
    fn augmentation_is_deterministic_per_seed() {
        let p = random_cloud(7, 64);
        let cfg = AugmentConfig::default();
        let a = augment(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn p_rotation_extremes() {
        let p = random_cloud(8, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert_eq!(augment_p_rotation(&p, 0.0, &mut rng), p);
            let q = augment_p_rotation(&p, 1.0, &mut rng);
            assert_ne!(q, p);
            let d0 = dist(p.points()[0], p.points()[1]);
            let d1 = dist(q.points()[0], q.points()[1]);
            assert!((d0 - d1).abs() <= 1e-9);
        }
    }

    #[test]
    fn p_rotation_rate_matches_probability() {
        // Binomial(10000, 0.5): sd = 50, so ±150 is a 3σ bound.
        let p = random_cloud(9, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fired = (0..10_000)
            .filter(|_| augment_p_rotation_flagged(&p, 0.5, &mut rng).1)
            .count();
        assert!((4850..=5150).contains(&fired), "{fired}");
    }
}
