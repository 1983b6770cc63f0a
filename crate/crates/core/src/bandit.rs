//! Beta-Bernoulli Thompson sampling over a grid partition of an angle box.
//!
//! The box `[a, b]^r` (r = 3 for Euler angles, r = 2 for reflection normals)
//! is cut into `d` equal intervals per axis, giving `d^r` arms. Arm `k` has
//! linear index `(i·d + j)·d + h` for zero-based axis indices `(i, j, h)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{EulerAngles, ReflectionAxis};
use std::f64::consts::PI;

/// Equal-width partition of a product of angle intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnglePartition {
    /// One `(lo, hi)` interval per axis; the rank is its length.
    ranges: Vec<(f64, f64)>,
    divisions: usize,
}

impl AnglePartition {
    /// `[lo, hi]³` for Euler-angle sampling.
    pub fn cube(lo: f64, hi: f64, divisions: usize) -> Result<Self, String> {
        Self::with_ranges(vec![(lo, hi); 3], divisions)
    }

    /// Azimuth over `[lo, hi] ∩ [-π, π]`, polar over `[0, π]`.
    pub fn reflection(lo: f64, hi: f64, divisions: usize) -> Result<Self, String> {
        Self::with_ranges(vec![(lo.max(-PI), hi.min(PI)), (0.0, PI)], divisions)
    }

    pub fn with_ranges(ranges: Vec<(f64, f64)>, divisions: usize) -> Result<Self, String> {
        if !(2..=3).contains(&ranges.len()) {
            return Err(format!("partition rank must be 2 or 3, got {}", ranges.len()));
        }
        if divisions == 0 {
            return Err("divisions must be at least 1".into());
        }
        for &(lo, hi) in &ranges {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("invalid angle range [{lo}, {hi}]"));
            }
        }
        Ok(Self { ranges, divisions })
    }

    pub fn rank(&self) -> usize {
        self.ranges.len()
    }

    pub fn divisions(&self) -> usize {
        self.divisions
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn cell_count(&self) -> usize {
        self.divisions.pow(self.rank() as u32)
    }

    /// Zero-based per-axis indices of arm `k`, first axis most significant.
    pub fn cell_coords(&self, k: usize) -> Vec<usize> {
        let d = self.divisions;
        let mut coords = vec![0; self.rank()];
        let mut rest = k;
        for c in coords.iter_mut().rev() {
            *c = rest % d;
            rest /= d;
        }
        coords
    }

    pub fn cell_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.divisions + c)
    }

    /// `[a + i(b−a)/d, a + (i+1)(b−a)/d]` for zero-based `i`.
    pub fn interval(&self, axis: usize, i: usize) -> (f64, f64) {
        let (a, b) = self.ranges[axis];
        let d = self.divisions as f64;
        (a + i as f64 * (b - a) / d, a + (i + 1) as f64 * (b - a) / d)
    }

    /// Uniform point inside the closed cell `k`, one value per axis.
    pub fn sample_cell<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        self.cell_coords(k)
            .into_iter()
            .enumerate()
            .map(|(axis, i)| {
                let (lo, hi) = self.interval(axis, i);
                let u: f64 = rng.random();
                (lo + u * (hi - lo)).clamp(lo, hi)
            })
            .collect()
    }
}

/// Euler angles drawn uniformly from rank-3 cell `k`.
pub fn sample_angles<R: Rng + ?Sized>(partition: &AnglePartition, k: usize, rng: &mut R) -> EulerAngles {
    assert_eq!(partition.rank(), 3, "Euler sampling needs a rank-3 partition");
    let v = partition.sample_cell(k, rng);
    EulerAngles::new(v[0], v[1], v[2])
}

/// Reflection normal drawn uniformly (in angle space) from rank-2 cell `k`.
pub fn sample_reflection_axis<R: Rng + ?Sized>(partition: &AnglePartition, k: usize, rng: &mut R) -> ReflectionAxis {
    assert_eq!(partition.rank(), 2, "reflection sampling needs a rank-2 partition");
    let v = partition.sample_cell(k, rng);
    ReflectionAxis::new(v[0], v[1])
}

/// Gamma(shape, 1) by Marsaglia and Tsang's squeeze method.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = rng.random();
        return sample_gamma(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Beta(α, β) as `X / (X + Y)` with independent gamma variates.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let x = sample_gamma(alpha, rng);
    let y = sample_gamma(beta, rng);
    x / (x + y)
}

/// Posterior parameters for every arm of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    partition: AnglePartition,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BanditState {
    /// Uniform Beta(1, 1) prior on every arm.
    pub fn new(partition: AnglePartition) -> Self {
        let n = partition.cell_count();
        Self {
            partition,
            alpha: vec![1.0; n],
            beta: vec![1.0; n],
        }
    }

    pub fn partition(&self) -> &AnglePartition {
        &self.partition
    }

    pub fn cell_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn params(&self, k: usize) -> (f64, f64) {
        (self.alpha[k], self.beta[k])
    }

    /// Overwrite one arm's parameters (both must be ≥ 1).
    pub fn set_params(&mut self, k: usize, alpha: f64, beta: f64) {
        assert!(alpha >= 1.0 && beta >= 1.0, "Beta parameters must stay ≥ 1");
        self.alpha[k] = alpha;
        self.beta[k] = beta;
    }

    pub fn posterior_mean(&self, k: usize) -> f64 {
        self.alpha[k] / (self.alpha[k] + self.beta[k])
    }

    pub fn pulls(&self, k: usize) -> u64 {
        (self.alpha[k] + self.beta[k] - 2.0).round() as u64
    }

    pub fn total_pulls(&self) -> u64 {
        (0..self.cell_count()).map(|k| self.pulls(k)).sum()
    }

    /// One Beta draw per arm, then the argmax (lowest index on ties).
    pub fn select_action<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.select_with(|_, a, b| sample_beta(a, b, rng))
    }

    /// Argmax over `draw(k, α_k, β_k)`, with `draw` called once per arm in
    /// index order.
    pub fn select_with(&self, mut draw: impl FnMut(usize, f64, f64) -> f64) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for k in 0..self.cell_count() {
            let v = draw(k, self.alpha[k], self.beta[k]);
            if v > best_value {
                best_value = v;
                best = k;
            }
        }
        best
    }

    /// Conjugate update: `(α, β) += (r, 1 − r)` on arm `k` only.
    pub fn update(&mut self, k: usize, success: bool) {
        if success {
            self.alpha[k] += 1.0;
        } else {
            self.beta[k] += 1.0;
        }
    }

    /// Posterior means averaged along each axis. Rank 3 yields the `xy`,
    /// `xz` and `yz` projections (averaging out z, y and x respectively);
    /// rank 2 yields the single plane of means.
    pub fn heatmap_marginals(&self) -> Vec<Marginal> {
        let d = self.partition.divisions();
        let mean = |k: usize| self.posterior_mean(k);
        if self.partition.rank() == 2 {
            let values = (0..d).map(|i| (0..d).map(|j| mean(i * d + j)).collect()).collect();
            return vec![Marginal {
                plane: "azimuth_polar".into(),
                values,
            }];
        }
        let idx = |i: usize, j: usize, h: usize| (i * d + j) * d + h;
        let project = |f: &dyn Fn(usize, usize, usize) -> usize| -> Vec<Vec<f64>> {
            (0..d)
                .map(|r| (0..d).map(|c| (0..d).map(|t| mean(f(r, c, t))).sum::<f64>() / d as f64).collect())
                .collect()
        };
        vec![
            Marginal {
                plane: "xy".into(),
                values: project(&|r, c, t| idx(r, c, t)),
            },
            Marginal {
                plane: "xz".into(),
                values: project(&|r, c, t| idx(r, t, c)),
            },
            Marginal {
                plane: "yz".into(),
                values: project(&|r, c, t| idx(t, r, c)),
            },
        ]
    }
}

/// A `d × d` heat map of averaged posterior means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub plane: String,
    /// `values[row][col]`; rows follow the first named axis.
    pub values: Vec<Vec<f64>>,
}

impl Marginal {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Plain-text greyscale PGM, probability 1 maps to white.
    pub fn to_pgm(&self) -> String {
        let rows = self.values.len();
        let cols = self.values.first().map_or(0, |r| r.len());
        let mut out = format!("P2\n{cols} {rows}\n255\n");
        for row in &self.values {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}
