//! Procedural shape dataset: sphere, box, cone and stairs surfaces.
//!
//! `y` is the up axis. Every shape carries small per-cloud size variation and
//! Gaussian surface noise before being normalized to the unit sphere. Cloud
//! `i` (train clouds first, then test) draws from its own generator seeded
//! with `seed ^ i`, and class labels cycle through the class list so any
//! prefix of a split is close to balanced.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize_to_unit_sphere, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Box,
    Cone,
    Stairs,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cone, ShapeKind::Stairs];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cone => "cone",
            ShapeKind::Stairs => "stairs",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown shape '{s}' (expected sphere, box, cone or stairs)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeDatasetSpec {
    pub classes: Vec<ShapeKind>,
    pub points_per_cloud: usize,
    /// Clouds per class in the training split.
    pub train_count: usize,
    /// Clouds per class in the test split.
    pub test_count: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ShapeDatasetSpec {
    fn default() -> Self {
        Self {
            classes: ShapeKind::ALL.to_vec(),
            points_per_cloud: 512,
            train_count: 100,
            test_count: 60,
            noise_sigma: 0.005,
            seed: 0,
        }
    }
}

impl ShapeDatasetSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes.len() < 2 {
            return Err("dataset needs at least two classes".into());
        }
        if self.points_per_cloud == 0 {
            return Err("points_per_cloud must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err("noise_sigma must be a finite non-negative number".into());
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name().to_string()).collect()
    }
}

/// A labelled list of clouds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.clouds.iter().map(|c| c.label.unwrap_or(usize::MAX))
    }
}

/// Deterministically build the train and test splits described by `spec`.
pub fn generate_shapes(spec: &ShapeDatasetSpec) -> (Dataset, Dataset) {
    let c = spec.classes.len();
    let n_train = spec.train_count * c;
    let n_test = spec.test_count * c;
    let make = |global: usize, local: usize| {
        let label = local % c;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ global as u64);
        sample_shape(spec.classes[label], spec.points_per_cloud, spec.noise_sigma, label, &mut rng)
    };
    let train = (0..n_train).map(|i| make(i, i)).collect();
    let test = (0..n_test).map(|i| make(n_train + i, i)).collect();
    (Dataset { clouds: train }, Dataset { clouds: test })
}

fn sample_shape(kind: ShapeKind, m: usize, noise: f64, label: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let mut pts = vec![[0.0; 3]; m];
    let vary = |rng: &mut ChaCha8Rng| rng.random_range(0.85..1.15);
    match kind {
        ShapeKind::Sphere => {
            for p in pts.iter_mut() {
                *p = unit_sphere_point(rng);
            }
        }
        ShapeKind::Box => {
            let half = [0.5 * vary(rng), 0.25 * vary(rng), 0.35 * vary(rng)];
            let surface = BoxSurface::new(half);
            for p in pts.iter_mut() {
                *p = surface.sample(rng);
            }
        }
        ShapeKind::Cone => {
            let radius = 0.5 * vary(rng);
            let height = 1.5 * vary(rng);
            let slant = (radius * radius + height * height).sqrt();
            let lateral = PI * radius * slant;
            let base = PI * radius * radius;
            for p in pts.iter_mut() {
                let phi = rng.random_range(0.0..2.0 * PI);
                if rng.random::<f64>() * (lateral + base) < lateral {
                    // distance from apex ∝ √u gives uniform density on the mantle
                    let t: f64 = rng.random::<f64>().sqrt();
                    let r = radius * t;
                    *p = [r * phi.cos(), height * (1.0 - t), r * phi.sin()];
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    *p = [r * phi.cos(), 0.0, r * phi.sin()];
                }
            }
        }
        ShapeKind::Stairs => {
            let stairs = Stairs {
                steps: 4,
                rise: 0.25 * vary(rng),
                run: 0.3 * vary(rng),
                width: 1.0 * vary(rng),
            };
            for p in pts.iter_mut() {
                *p = stairs.sample(rng);
            }
        }
    }
    if noise > 0.0 {
        for p in pts.iter_mut() {
            for x in p.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *x += noise * n;
            }
        }
    }
    let cloud = PointCloud::new(pts, Some(label)).expect("generated coordinates are finite");
    normalize_to_unit_sphere(&cloud).expect("generated shapes are not degenerate")
}

fn unit_sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = super::norm(v);
        if n > 1e-12 {
            return v.map(|x| x / n);
        }
    }
}

struct BoxSurface {
    half: [f64; 3],
    /// Area of each pair of opposite faces, indexed by the fixed axis.
    areas: [f64; 3],
}

impl BoxSurface {
    fn new(half: [f64; 3]) -> Self {
        let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
        Self { half, areas }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let total: f64 = self.areas.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut axis = 2;
        for (i, a) in self.areas.iter().enumerate() {
            if u < *a {
                axis = i;
                break;
            }
            u -= a;
        }
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = rng.random_range(-self.half[k]..self.half[k]);
        }
        p[axis] = if rng.random::<bool>() { self.half[axis] } else { -self.half[axis] };
        p
    }
}

/// Treads, risers and the two side profiles of a straight staircase climbing
/// along +z.
struct Stairs {
    steps: usize,
    rise: f64,
    run: f64,
    width: f64,
}

impl Stairs {
    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let n = self.steps as f64;
        let tread_area = n * self.width * self.run;
        let riser_area = n * self.width * self.rise;
        // staircase profile area: Σ_{i=1..n} i·rise·run, per side
        let side_area = n * (n + 1.0) / 2.0 * self.rise * self.run;
        let total = tread_area + riser_area + 2.0 * side_area;
        let u = rng.random::<f64>() * total;
        let x = rng.random_range(-self.width / 2.0..self.width / 2.0);
        if u < tread_area {
            let i = rng.random_range(0..self.steps) as f64;
            let z = self.run * (i + rng.random::<f64>());
            [x, self.rise * (i + 1.0), z]
        } else if u < tread_area + riser_area {
            let i = rng.random_range(0..self.steps) as f64;
            let y = self.rise * (i + rng.random::<f64>());
            [x, y, self.run * i]
        } else {
            let side = if u < tread_area + riser_area + side_area { -1.0 } else { 1.0 };
            loop {
                let z = rng.random_range(0.0..n * self.run);
                let y = rng.random_range(0.0..n * self.rise);
                let step = (z / self.run).floor() + 1.0;
                if y <= step * self.rise {
                    return [side * self.width / 2.0, y, z];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_rotation, EulerAngles};
    use crate::pointcloud::{apply_transform, norm};

    fn small_spec() -> ShapeDatasetSpec {
        ShapeDatasetSpec {
            points_per_cloud: 64,
            train_count: 5,
            test_count: 3,
            ..ShapeDatasetSpec::default()
        }
    }

    #[test]
    fn counts_and_balance() {
        let spec = ShapeDatasetSpec {
            points_per_cloud: 16,
            train_count: 100,
            test_count: 10,
            ..ShapeDatasetSpec::default()
        };
        let (train, test) = generate_shapes(&spec);
        assert_eq!(train.len(), 400);
        assert_eq!(test.len(), 40);
        for class in 0..4 {
            assert_eq!(train.labels().filter(|&l| l == class).count(), 100);
            assert_eq!(test.labels().filter(|&l| l == class).count(), 10);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_shapes(&small_spec()), generate_shapes(&small_spec()));
        let other = ShapeDatasetSpec { seed: 1, ..small_spec() };
        assert_ne!(generate_shapes(&small_spec()).0, generate_shapes(&other).0);
    }

    #[test]
    fn clouds_are_normalized() {
        let (train, test) = generate_shapes(&small_spec());
        for c in train.clouds.iter().chain(&test.clouds) {
            assert_eq!(c.len(), 64);
            assert!(norm(c.centroid()) <= 1e-9);
            assert!((c.max_norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn sphere_norms_are_rotation_invariant() {
        let spec = ShapeDatasetSpec {
            classes: vec![ShapeKind::Sphere, ShapeKind::Box],
            ..small_spec()
        };
        let (train, _) = generate_shapes(&spec);
        let sphere = &train.clouds[0];
        let r = euler_to_rotation(EulerAngles::new(0.7, -1.3, 2.9));
        let rotated = apply_transform(sphere, &r);
        let mut a: Vec<f64> = sphere.points().iter().map(|p| norm(*p)).collect();
        let mut b: Vec<f64> = rotated.points().iter().map(|p| norm(*p)).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_names_parse() {
        for k in ShapeKind::ALL {
            assert_eq!(k.name().parse::<ShapeKind>().unwrap(), k);
        }
        assert!("torus".parse::<ShapeKind>().is_err());
    }
}
