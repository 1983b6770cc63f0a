//! Classifier interface and the built-in permutation-invariant network.
//!
//! Attacks only talk to [`Classifier`]; any differentiable model that can
//! produce logits and input gradients for a cloud can be plugged in.

mod checkpoint;
mod pointnet;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use pointnet::{ArchSpec, Dense, MiniPointNet, PointGradients};
pub use train::{evaluate_accuracy, train, train_on_spec, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::PointCloud;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pre-softmax network output `z ∈ R^c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax probabilities and the predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
}

impl Prediction {
    pub fn from_logits(z: &Logits) -> Self {
        let probabilities = softmax(z.values());
        let predicted_class = argmax(&probabilities);
        Self {
            probabilities,
            predicted_class,
        }
    }

    pub fn confidence(&self) -> f64 {
        self.probabilities[self.predicted_class]
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A differentiable point-cloud classifier.
pub trait Classifier {
    fn class_count(&self) -> usize;

    fn logits(&self, cloud: &PointCloud) -> Logits;

    fn predict(&self, cloud: &PointCloud) -> Prediction {
        Prediction::from_logits(&self.logits(cloud))
    }

    /// `∂(cotangent · z) / ∂P`, one row per point.
    fn input_gradient(&self, cloud: &PointCloud, cotangent: &[f64]) -> Vec<[f64; 3]>;
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }

    fn logits(&self, cloud: &PointCloud) -> Logits {
        (**self).logits(cloud)
    }

    fn predict(&self, cloud: &PointCloud) -> Prediction {
        (**self).predict(cloud)
    }

    fn input_gradient(&self, cloud: &PointCloud, cotangent: &[f64]) -> Vec<[f64; 3]> {
        (**self).input_gradient(cloud, cotangent)
    }
}
