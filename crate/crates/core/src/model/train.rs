//! Minibatch gradient descent on softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, ArchSpec, Classifier, MiniPointNet, ModelError};
use crate::pointcloud::{augment, augment_p_rotation, generate_shapes, AugmentConfig, Dataset, ShapeDatasetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    /// Apply the rotate-y/scale/translate/jitter chain to every sample.
    pub augment: bool,
    pub augment_config: AugmentConfig,
    /// Probability of a full random Euler rotation per sample.
    pub p_rotation: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = ArchSpec::new(2);
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.05,
            point_widths: arch.point_widths,
            head_widths: arch.head_widths,
            augment: true,
            augment_config: AugmentConfig::default(),
            p_rotation: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn arch(&self, classes: usize) -> ArchSpec {
        ArchSpec {
            point_widths: self.point_widths.clone(),
            head_widths: self.head_widths.clone(),
            classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_rotation) {
            return Err(ModelError::Config("p_rotation must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub seed: u64,
}

/// Fraction of clouds whose prediction matches their label.
pub fn evaluate_accuracy<M: Classifier + ?Sized>(model: &M, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .clouds
        .iter()
        .filter(|c| c.label == Some(model.predict(c).predicted_class))
        .count();
    correct as f64 / data.len() as f64
}

/// Train on `train`, report accuracy on both splits. Final parameters are
/// rounded to f32 so they survive a checkpoint round trip unchanged.
pub fn train(
    train_set: &Dataset,
    test_set: &Dataset,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<(MiniPointNet, TrainReport), ModelError> {
    cfg.validate()?;
    if train_set.clouds.iter().any(|c| c.label.is_none_or(|l| l >= classes)) {
        return Err(ModelError::Config("every training cloud needs a label below the class count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = MiniPointNet::init(&cfg.arch(classes), &mut rng)?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zeros_like();
            for &idx in batch {
                let cloud = &train_set.clouds[idx];
                let label = cloud.label.unwrap();
                let mut sample = if cfg.augment {
                    augment(cloud, &cfg.augment_config, &mut rng)
                } else {
                    cloud.clone()
                };
                sample = augment_p_rotation(&sample, cfg.p_rotation, &mut rng);
                let (pool, head) = net.forward_traced(sample.points());
                let probs = softmax(head.acts.last().unwrap());
                loss_sum -= probs[label].max(f64::MIN_POSITIVE).ln();
                let mut dz = probs;
                dz[label] -= 1.0;
                net.backward(sample.points(), &pool, &head, &dz, Some(&mut grads));
            }
            net.add_scaled(&grads, -cfg.learning_rate / batch.len() as f64);
        }
        let loss = loss_sum / train_set.len().max(1) as f64;
        if !loss.is_finite() || !net.all_finite() {
            return Err(ModelError::Divergence { epoch, loss });
        }
        epoch_losses.push(loss);
    }

    net.quantize_f32();
    let report = TrainReport {
        epochs: cfg.epochs,
        epoch_losses,
        train_accuracy: evaluate_accuracy(&net, train_set),
        test_accuracy: evaluate_accuracy(&net, test_set),
        seed: cfg.seed,
    };
    Ok((net, report))
}

/// Generate the synthetic dataset and train on it.
pub fn train_on_spec(spec: &ShapeDatasetSpec, cfg: &TrainConfig) -> Result<(MiniPointNet, TrainReport), ModelError> {
    spec.validate().map_err(ModelError::Config)?;
    let (train_set, test_set) = generate_shapes(spec);
    train(&train_set, &test_set, spec.classes.len(), cfg)
}
