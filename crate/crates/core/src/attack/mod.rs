//! Isometry attacks.
//!
//! * [`tsi`]: black-box search over exact isometries. A Thompson-sampling
//!   bandit picks a cell of the angle grid, an isometry is drawn from that
//!   cell, and the reward is 1 when the transformed cloud is misclassified.
//! * [`ctri`]: white-box refinement. Starting from the bandit's best isometry,
//!   plain gradient descent on `σ(AᵀA − I) + λ·g_t(P Aᵀ)` relaxes the
//!   isometry constraint until the prediction leaves the true class.

mod ctri;
mod tsi;

pub use ctri::{ctri, ctri_multi_k, run_ctri, transform_gradient, TransformGradient};
pub use tsi::{build_transform, run_tsi, tsi, tsi_frozen, tsi_single, TsiRound, TsiTrace};

use serde::{Deserialize, Serialize};

use crate::bandit::{AnglePartition, BanditState};
use crate::geometry::{Transform3, DEFAULT_DEGENERACY_TOL};
use crate::model::{argmax, Logits};
use std::f64::consts::PI;

/// Which isometries the bandit samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformFamily {
    /// Euler rotations over a `d³` grid.
    Rotation,
    /// Householder reflections over a `d²` (azimuth, polar) grid.
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsiConfig {
    pub lo: f64,
    pub hi: f64,
    pub divisions: usize,
    /// Maximum number of bandit rounds per cloud.
    pub max_samples: usize,
    pub family: TransformFamily,
    pub seed: u64,
}

impl Default for TsiConfig {
    fn default() -> Self {
        Self {
            lo: -PI,
            hi: PI,
            divisions: 4,
            max_samples: 10,
            family: TransformFamily::Rotation,
            seed: 0,
        }
    }
}

impl TsiConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lo < self.hi) {
            return Err(format!("angle range [{}, {}] is empty", self.lo, self.hi));
        }
        if self.divisions == 0 {
            return Err("divisions must be at least 1".into());
        }
        if self.max_samples == 0 {
            return Err("max_samples must be at least 1".into());
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<AnglePartition, String> {
        match self.family {
            TransformFamily::Rotation => AnglePartition::cube(self.lo, self.hi, self.divisions),
            TransformFamily::Reflection => AnglePartition::reflection(self.lo, self.hi, self.divisions),
        }
    }

    /// Fresh Beta(1, 1) state over this configuration's grid.
    pub fn initial_state(&self) -> Result<BanditState, String> {
        Ok(BanditState::new(self.partition()?))
    }
}

/// How CTRI picks the target class `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// The largest logit other than the true class, read at the warm-start pose.
    SecondLogit,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtriConfig {
    /// Warm-start bandit search.
    pub tsi: TsiConfig,
    /// Maximum gradient steps `K`.
    pub max_iters: usize,
    /// Step size `η`.
    pub eta: f64,
    /// Weight `λ` of the margin loss.
    pub lambda: f64,
    /// Margin clip `κ`.
    pub kappa: f64,
    pub target: TargetRule,
    pub degeneracy_tol: f64,
}

impl Default for CtriConfig {
    fn default() -> Self {
        Self {
            tsi: TsiConfig {
                max_samples: 50,
                ..TsiConfig::default()
            },
            max_iters: 50,
            eta: 0.0005,
            lambda: 0.001,
            kappa: 0.0,
            target: TargetRule::SecondLogit,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
        }
    }
}

impl CtriConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.tsi.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err("eta must be positive".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err("lambda must be positive".into());
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err("kappa must be non-negative".into());
        }
        Ok(())
    }
}

/// Per-cloud attack record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    /// Position of the cloud in the attacked list.
    pub cloud_index: usize,
    /// The final map `A*`.
    pub transform: Transform3,
    /// Untargeted: the final prediction differs from the true class.
    pub success: bool,
    /// `σ(A*ᵀA* − I)`; exactly 0 when `A*` came from the bandit alone.
    pub penalty: f64,
    /// Bandit rounds plus gradient steps.
    pub iterations_used: usize,
    pub samples_used: usize,
    pub gradient_steps: usize,
    /// 1-based bandit round of the first misclassification, if any.
    pub first_success_round: Option<usize>,
    /// Success was already reached by the bandit search.
    pub warm_start_success: bool,
    pub original_class: usize,
    pub final_class: usize,
    pub target_class: Option<usize>,
    pub target_hit: Option<bool>,
    /// Softmax probability of `final_class`.
    pub confidence: f64,
    /// Gradient steps that fell back to a penalty subgradient.
    pub degenerate_steps: usize,
}

/// Margin loss value and its cotangent with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CwLoss {
    pub value: f64,
    /// Zero when clipped at `−κ`, otherwise `+1` at the strongest rival and
    /// `−1` at the target.
    pub cotangent: Vec<f64>,
}

/// `max{−κ, max_{j≠t} z_j − z_t}`.
pub fn cw_loss(z: &Logits, target: usize, kappa: f64) -> CwLoss {
    let v = z.values();
    assert!(v.len() >= 2 && target < v.len(), "need c ≥ 2 and a valid target");
    let rival = best_excluding(v, target);
    let margin = v[rival] - v[target];
    let mut cotangent = vec![0.0; v.len()];
    if margin > -kappa {
        cotangent[rival] = 1.0;
        cotangent[target] = -1.0;
        CwLoss { value: margin, cotangent }
    } else {
        CwLoss { value: -kappa, cotangent }
    }
}

/// The largest logit other than `true_class`, lowest index on ties.
pub fn select_target(z: &Logits, true_class: usize) -> usize {
    assert!(z.len() >= 2, "need at least two classes");
    best_excluding(z.values(), true_class)
}

fn best_excluding(v: &[f64], excluded: usize) -> usize {
    let mut best: Option<usize> = None;
    for (j, x) in v.iter().enumerate() {
        if j == excluded {
            continue;
        }
        if best.is_none_or(|b| *x > v[b]) {
            best = Some(j);
        }
    }
    best.unwrap_or_else(|| argmax(v))
}
