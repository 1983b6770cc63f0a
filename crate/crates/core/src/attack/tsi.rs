use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{AttackOutcome, TransformFamily, TsiConfig};
use crate::bandit::{sample_angles, sample_reflection_axis, AnglePartition, BanditState};
use crate::geometry::{euler_to_rotation, householder_reflection, Transform3};
use crate::model::{Classifier, Prediction};
use crate::pointcloud::{apply_transform, PointCloud};

/// One bandit round.
#[derive(Debug, Clone, PartialEq)]
pub struct TsiRound {
    pub cell: usize,
    /// Sampled Euler angles or (azimuth, polar).
    pub params: Vec<f64>,
    pub transform: Transform3,
    pub prediction: Prediction,
    pub success: bool,
    pub true_class_probability: f64,
}

/// Full record of the bandit search on one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TsiTrace {
    pub rounds: Vec<TsiRound>,
    pub transform: Transform3,
    pub prediction: Prediction,
    pub success: bool,
}

impl TsiTrace {
    pub fn first_success_round(&self) -> Option<usize> {
        self.rounds.iter().position(|r| r.success).map(|i| i + 1)
    }

    /// The trace this search would have produced had it stopped after
    /// `budget` rounds on this cloud.
    pub fn truncated(&self, budget: usize) -> TsiTrace {
        let rounds = &self.rounds[..budget.min(self.rounds.len())];
        assert!(!rounds.is_empty(), "budget must be at least 1");
        let pick = match rounds.iter().position(|r| r.success) {
            Some(i) => i,
            None => {
                let mut best = 0;
                for (i, r) in rounds.iter().enumerate() {
                    if r.true_class_probability < rounds[best].true_class_probability {
                        best = i;
                    }
                }
                best
            }
        };
        let end = if rounds[pick].success { pick + 1 } else { rounds.len() };
        TsiTrace {
            rounds: rounds[..end].to_vec(),
            transform: rounds[pick].transform,
            prediction: rounds[pick].prediction.clone(),
            success: rounds[pick].success,
        }
    }

    pub(crate) fn to_outcome(&self, cloud_index: usize, true_class: usize) -> AttackOutcome {
        AttackOutcome {
            cloud_index,
            transform: self.transform,
            success: self.success,
            penalty: 0.0,
            iterations_used: self.rounds.len(),
            samples_used: self.rounds.len(),
            gradient_steps: 0,
            first_success_round: self.first_success_round(),
            warm_start_success: self.success,
            original_class: true_class,
            final_class: self.prediction.predicted_class,
            target_class: None,
            target_hit: None,
            confidence: self.prediction.confidence(),
            degenerate_steps: 0,
        }
    }
}

/// Draw an exact isometry from cell `k`.
pub fn build_transform<R: Rng + ?Sized>(
    family: TransformFamily,
    partition: &AnglePartition,
    k: usize,
    rng: &mut R,
) -> (Transform3, Vec<f64>) {
    match family {
        TransformFamily::Rotation => {
            let e = sample_angles(partition, k, rng);
            (euler_to_rotation(e), vec![e.theta_x, e.theta_y, e.theta_z])
        }
        TransformFamily::Reflection => {
            let axis = sample_reflection_axis(partition, k, rng);
            (householder_reflection(axis), vec![axis.azimuth, axis.polar])
        }
    }
}

fn true_label(cloud: &PointCloud) -> usize {
    cloud.label.expect("attacked clouds carry their true label")
}

/// Bandit search on a single cloud. With `learn` false the state is read but
/// never updated.
fn search<M, R>(
    model: &M,
    cloud: &PointCloud,
    cfg: &TsiConfig,
    state: &mut BanditState,
    rng: &mut R,
    learn: bool,
) -> TsiTrace
where
    M: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let truth = true_label(cloud);
    let mut rounds = Vec::with_capacity(cfg.max_samples);
    let mut best: Option<usize> = None;
    for _ in 0..cfg.max_samples {
        let k = state.select_action(rng);
        let (a, params) = build_transform(cfg.family, state.partition(), k, rng);
        let pred = model.predict(&apply_transform(cloud, &a));
        let success = pred.predicted_class != truth;
        let p_true = pred.probabilities[truth];
        if learn {
            state.update(k, success);
        }
        rounds.push(TsiRound {
            cell: k,
            params,
            transform: a,
            prediction: pred.clone(),
            success,
            true_class_probability: p_true,
        });
        if success {
            return TsiTrace {
                rounds,
                transform: a,
                prediction: pred,
                success: true,
            };
        }
        if best.is_none_or(|b| p_true < rounds[b].true_class_probability) {
            best = Some(rounds.len() - 1);
        }
    }
    let best = &rounds[best.expect("at least one round")];
    TsiTrace {
        transform: best.transform,
        prediction: best.prediction.clone(),
        rounds,
        success: false,
    }
}

/// Run the bandit search on one cloud, updating the shared state.
pub fn tsi_single<M, R>(model: &M, cloud: &PointCloud, cfg: &TsiConfig, state: &mut BanditState, rng: &mut R) -> TsiTrace
where
    M: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    search(model, cloud, cfg, state, rng, true)
}

/// Attack every cloud in order. The bandit state carries over between clouds.
pub fn tsi<M, R>(
    model: &M,
    clouds: &[PointCloud],
    cfg: &TsiConfig,
    state: &mut BanditState,
    rng: &mut R,
) -> Vec<AttackOutcome>
where
    M: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    clouds
        .iter()
        .enumerate()
        .map(|(i, c)| tsi_single(model, c, cfg, state, rng).to_outcome(i, true_label(c)))
        .collect()
}

/// Fresh state and generator from `cfg.seed`, then [`tsi`].
pub fn run_tsi<M>(model: &M, clouds: &[PointCloud], cfg: &TsiConfig) -> Result<(Vec<AttackOutcome>, BanditState), String>
where
    M: Classifier + ?Sized,
{
    cfg.validate()?;
    let mut state = cfg.initial_state()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = tsi(model, clouds, cfg, &mut state, &mut rng);
    Ok((out, state))
}

/// Throughput mode: every cloud sees a snapshot of `state` that is never
/// updated, and cloud `i` uses its own generator seeded with `seed ^ i`.
/// Results do not match the sequential attack.
pub fn tsi_frozen<M>(model: &M, clouds: &[PointCloud], cfg: &TsiConfig, state: &BanditState) -> Vec<AttackOutcome>
where
    M: Classifier + Sync + ?Sized,
{
    clouds
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut local = state.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
            search(model, c, cfg, &mut local, &mut rng, false).to_outcome(i, true_label(c))
        })
        .collect()
}
