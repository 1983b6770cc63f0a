//! Shared per-point MLP, channel-wise max pool, then a small classifier head.
//!
//! Every point goes through the same weights and the pool is a coordinatewise
//! max, so the logits are exactly invariant to the order of the rows. The
//! backward pass routes each pooled channel's gradient to the single point
//! that won it (lowest index on ties) and only re-evaluates those points.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Classifier, Logits, ModelError};
use crate::pointcloud::PointCloud;

const POOL_BLOCK: usize = 64;

/// Fully connected layer, `y = W x + b` with `W` stored row-major
/// (`outputs × inputs`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal weights, zero bias.
    fn he<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let sd = (2.0 / inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weights.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *w = sd * n;
        }
        layer
    }

    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        // accumulate in input order starting from the bias; `forward_block`
        // uses the same order, so both paths agree bit for bit
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *y = acc;
        }
    }

    /// Forward for `n` inputs stored channel-major with stride `POOL_BLOCK`.
    #[inline]
    fn forward_block(&self, x: &[f64], out: &mut [f64], n: usize) {
        for o in 0..self.outputs {
            let y = &mut out[o * POOL_BLOCK..o * POOL_BLOCK + n];
            y.fill(self.bias[o]);
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (k, &w) in row.iter().enumerate() {
                let xk = &x[k * POOL_BLOCK..k * POOL_BLOCK + n];
                for (yj, xj) in y.iter_mut().zip(xk) {
                    *yj += w * xj;
                }
            }
        }
    }

    /// `dx = Wᵀ dy`.
    #[inline]
    fn backward_input(&self, dy: &[f64], dx: &mut [f64]) {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
    }

    /// Accumulate `dW += dy xᵀ`, `db += dy` into `grad`.
    #[inline]
    fn accumulate(&self, x: &[f64], dy: &[f64], grad: &mut Dense) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }

    fn param_iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn param_iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }
}

/// Layer widths. The default is `3 → 32 → 64` per point and `64 → 32 → c`
/// after pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub classes: usize,
}

impl ArchSpec {
    pub fn new(classes: usize) -> Self {
        Self {
            point_widths: vec![32, 64],
            head_widths: vec![32],
            classes,
        }
    }

    /// The wider `3 → 48 → 96` variant.
    pub fn wide(classes: usize) -> Self {
        Self {
            point_widths: vec![48, 96],
            head_widths: vec![32],
            classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.classes < 2 {
            return Err(ModelError::Config("need at least two classes".into()));
        }
        if self.point_widths.is_empty() || self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(ModelError::Config("layer widths must be positive and at least one point layer is required".into()));
        }
        Ok(())
    }
}

/// Parameters of the point network.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniPointNet {
    pub point_layers: Vec<Dense>,
    /// Hidden head layers use a rectifier; the last one produces logits.
    pub head_layers: Vec<Dense>,
}

/// Gradients with the same layout as [`MiniPointNet`].
pub type PointGradients = MiniPointNet;

/// Pooled features plus the winning point of every channel.
pub(crate) struct PoolTrace {
    pub pooled: Vec<f64>,
    pub argmax: Vec<usize>,
}

/// Head activations, input first.
pub(crate) struct HeadTrace {
    pub acts: Vec<Vec<f64>>,
}

impl MiniPointNet {
    /// Random hidden layers, zero final layer (so an untrained model predicts
    /// class 0 everywhere).
    pub fn init<R: Rng + ?Sized>(arch: &ArchSpec, rng: &mut R) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut point_layers = Vec::new();
        let mut width = 3;
        for &w in &arch.point_widths {
            point_layers.push(Dense::he(width, w, rng));
            width = w;
        }
        let mut head_layers = Vec::new();
        for &w in &arch.head_widths {
            head_layers.push(Dense::he(width, w, rng));
            width = w;
        }
        head_layers.push(Dense::zeros(width, arch.classes));
        Ok(Self {
            point_layers,
            head_layers,
        })
    }

    pub fn from_layers(point_layers: Vec<Dense>, head_layers: Vec<Dense>) -> Result<Self, ModelError> {
        if point_layers.is_empty() || head_layers.is_empty() {
            return Err(ModelError::Config("need at least one point layer and one head layer".into()));
        }
        let mut width = 3;
        for l in point_layers.iter().chain(&head_layers) {
            if l.inputs != width || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ModelError::Config("layer shapes do not chain".into()));
            }
            width = l.outputs;
        }
        if width < 2 {
            return Err(ModelError::Config("need at least two classes".into()));
        }
        Ok(Self {
            point_layers,
            head_layers,
        })
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            point_widths: self.point_layers.iter().map(|l| l.outputs).collect(),
            head_widths: self.head_layers[..self.head_layers.len() - 1].iter().map(|l| l.outputs).collect(),
            classes: self.head_layers.last().unwrap().outputs,
        }
    }

    pub fn feature_width(&self) -> usize {
        self.point_layers.last().unwrap().outputs
    }

    pub fn zeros_like(&self) -> PointGradients {
        let z = |l: &Dense| Dense::zeros(l.inputs, l.outputs);
        Self {
            point_layers: self.point_layers.iter().map(z).collect(),
            head_layers: self.head_layers.iter().map(z).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.point_layers.iter().chain(&self.head_layers)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.point_layers.iter_mut().chain(self.head_layers.iter_mut())
    }

    /// `self += scale · other` over every parameter.
    pub fn add_scaled(&mut self, other: &PointGradients, scale: f64) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            for (x, y) in a.param_iter_mut().zip(b.param_iter()) {
                *x += scale * y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers().all(|l| l.param_iter().all(|x| x.is_finite()))
    }

    /// Round every parameter to the nearest f32 so checkpoints are exact.
    pub fn quantize_f32(&mut self) {
        for l in self.layers_mut() {
            for x in l.param_iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }

    /// Run the shared MLP over every point and max-pool. Points are processed
    /// in blocks laid out channel-major.
    pub(crate) fn pool(&self, points: &[[f64; 3]]) -> PoolTrace {
        let width = self.feature_width();
        let mut pooled = vec![f64::NEG_INFINITY; width];
        let mut argmax = vec![0usize; width];
        let max_w = self.point_layers.iter().map(|l| l.outputs).max().unwrap().max(3);
        let mut a = vec![0.0; max_w * POOL_BLOCK];
        let mut b = vec![0.0; max_w * POOL_BLOCK];
        for (bi, chunk) in points.chunks(POOL_BLOCK).enumerate() {
            let n = chunk.len();
            for (j, p) in chunk.iter().enumerate() {
                for k in 0..3 {
                    a[k * POOL_BLOCK + j] = p[k];
                }
            }
            for layer in &self.point_layers {
                layer.forward_block(&a, &mut b, n);
                for o in 0..layer.outputs {
                    b[o * POOL_BLOCK..o * POOL_BLOCK + n].iter_mut().for_each(|v| *v = v.max(0.0));
                }
                std::mem::swap(&mut a, &mut b);
            }
            for c in 0..width {
                for (j, &v) in a[c * POOL_BLOCK..c * POOL_BLOCK + n].iter().enumerate() {
                    if v > pooled[c] {
                        pooled[c] = v;
                        argmax[c] = bi * POOL_BLOCK + j;
                    }
                }
            }
        }
        PoolTrace { pooled, argmax }
    }

    pub(crate) fn head_forward(&self, pooled: &[f64]) -> HeadTrace {
        let mut acts = vec![pooled.to_vec()];
        let last = self.head_layers.len() - 1;
        for (li, layer) in self.head_layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.forward(acts.last().unwrap(), &mut out);
            if li < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        HeadTrace { acts }
    }

    /// Back through the head; returns `∂/∂pooled`. Accumulates head grads
    /// when `grads` is given.
    pub(crate) fn head_backward(&self, trace: &HeadTrace, dz: &[f64], mut grads: Option<&mut PointGradients>) -> Vec<f64> {
        let mut dy = dz.to_vec();
        for li in (0..self.head_layers.len()).rev() {
            let layer = &self.head_layers[li];
            let x = &trace.acts[li];
            if let Some(g) = grads.as_deref_mut() {
                layer.accumulate(x, &dy, &mut g.head_layers[li]);
            }
            let mut dx = vec![0.0; layer.inputs];
            layer.backward_input(&dy, &mut dx);
            if li > 0 {
                // x is a rectified activation
                for (d, v) in dx.iter_mut().zip(x) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = dx;
        }
        dy
    }

    /// Back through the shared MLP for one point, given `∂/∂features`.
    /// Returns `∂/∂p` and accumulates point-layer grads when requested.
    fn point_backward(&self, p: [f64; 3], dfeat: &[f64], mut grads: Option<&mut PointGradients>) -> [f64; 3] {
        // recompute this point's activations
        let mut acts: Vec<Vec<f64>> = vec![p.to_vec()];
        for layer in &self.point_layers {
            let mut out = vec![0.0; layer.outputs];
            layer.forward(acts.last().unwrap(), &mut out);
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(out);
        }
        let mut dy = dfeat.to_vec();
        for li in (0..self.point_layers.len()).rev() {
            let layer = &self.point_layers[li];
            for (d, v) in dy.iter_mut().zip(&acts[li + 1]) {
                if *v <= 0.0 {
                    *d = 0.0;
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                layer.accumulate(&acts[li], &dy, &mut g.point_layers[li]);
            }
            let mut dx = vec![0.0; layer.inputs];
            layer.backward_input(&dy, &mut dx);
            dy = dx;
        }
        [dy[0], dy[1], dy[2]]
    }

    /// Full backward pass for cotangent `dz` on the logits. Returns the input
    /// gradient and accumulates parameter gradients when requested.
    pub(crate) fn backward(
        &self,
        points: &[[f64; 3]],
        pool: &PoolTrace,
        head: &HeadTrace,
        dz: &[f64],
        mut grads: Option<&mut PointGradients>,
    ) -> Vec<[f64; 3]> {
        let mut dinput = vec![[0.0; 3]; points.len()];
        let dpooled = self.head_backward(head, dz, grads.as_deref_mut());
        // gather channel gradients per winning point
        let width = self.feature_width();
        let mut per_point: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (c, &g) in dpooled.iter().enumerate() {
            if g != 0.0 {
                per_point.entry(pool.argmax[c]).or_insert_with(|| vec![0.0; width])[c] += g;
            }
        }
        for (i, dfeat) in per_point {
            dinput[i] = self.point_backward(points[i], &dfeat, grads.as_deref_mut());
        }
        dinput
    }

    /// Logits plus the traces needed for a backward pass.
    pub(crate) fn forward_traced(&self, points: &[[f64; 3]]) -> (PoolTrace, HeadTrace) {
        let pool = self.pool(points);
        let head = self.head_forward(&pool.pooled);
        (pool, head)
    }

    /// Hash of every discrete choice the forward pass makes on `cloud`: the
    /// pool winners, the rectifier pattern of each winner, and the head's
    /// rectifier pattern. Two inputs with the same signature lie in the same
    /// smooth piece of the network.
    pub fn activation_signature(&self, cloud: &PointCloud) -> u64 {
        let (pool, head) = self.forward_traced(cloud.points());
        let mut h = std::collections::hash_map::DefaultHasher::new();
        pool.argmax.hash(&mut h);
        let mut winners: Vec<usize> = pool.argmax.clone();
        winners.sort_unstable();
        winners.dedup();
        for i in winners {
            let mut x = cloud.points()[i].to_vec();
            for layer in &self.point_layers {
                let mut out = vec![0.0; layer.outputs];
                layer.forward(&x, &mut out);
                for v in &out {
                    (*v > 0.0).hash(&mut h);
                }
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                x = out;
            }
        }
        for act in &head.acts[1..head.acts.len() - 1] {
            for v in act {
                (*v > 0.0).hash(&mut h);
            }
        }
        h.finish()
    }
}

impl Classifier for MiniPointNet {
    fn class_count(&self) -> usize {
        self.head_layers.last().unwrap().outputs
    }

    fn logits(&self, cloud: &PointCloud) -> Logits {
        let pool = self.pool(cloud.points());
        let head = self.head_forward(&pool.pooled);
        Logits(head.acts.last().unwrap().clone())
    }

    fn input_gradient(&self, cloud: &PointCloud, cotangent: &[f64]) -> Vec<[f64; 3]> {
        assert_eq!(cotangent.len(), self.class_count(), "cotangent length must equal class count");
        if cotangent.iter().all(|&c| c == 0.0) {
            return vec![[0.0; 3]; cloud.len()];
        }
        let (pool, head) = self.forward_traced(cloud.points());
        self.backward(cloud.points(), &pool, &head, cotangent, None)
    }
}
