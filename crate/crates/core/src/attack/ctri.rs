use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tsi::tsi_single;
use super::{cw_loss, select_target, AttackOutcome, CtriConfig, TargetRule};
use crate::bandit::BanditState;
use crate::geometry::{
    spectral_norm_penalty, spectral_norm_penalty_grad_with_tol, Transform3, DEFAULT_DEGENERACY_TOL,
};
use crate::model::{Classifier, Logits, Prediction};
use crate::pointcloud::{apply_transform, PointCloud};

/// Objective and gradient of `σ(AᵀA − I) + λ·g_t(P Aᵀ)` with respect to `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGradient {
    pub objective: f64,
    pub gradient: Transform3,
    pub penalty: f64,
    pub cw_value: f64,
    /// The penalty term fell back to a subgradient.
    pub degenerate: bool,
}

pub fn transform_gradient<M: Classifier + ?Sized>(
    model: &M,
    cloud: &PointCloud,
    a: &Transform3,
    target: usize,
    lambda: f64,
    kappa: f64,
) -> TransformGradient {
    let moved = apply_transform(cloud, a);
    let z = model.logits(&moved);
    gradient_at(model, cloud, &moved, &z, a, target, lambda, kappa, DEFAULT_DEGENERACY_TOL)
}

/// Shared body; `moved` is `P Aᵀ` and `z` its logits.
#[allow(clippy::too_many_arguments)]
fn gradient_at<M: Classifier + ?Sized>(
    model: &M,
    cloud: &PointCloud,
    moved: &PointCloud,
    z: &Logits,
    a: &Transform3,
    target: usize,
    lambda: f64,
    kappa: f64,
    tol: f64,
) -> TransformGradient {
    let penalty = spectral_norm_penalty(a);
    let (mut gradient, degenerate) = match spectral_norm_penalty_grad_with_tol(a, tol) {
        Ok(g) => (g, false),
        Err(e) => (e.subgradient, true),
    };
    let cw = cw_loss(z, target, kappa);
    if lambda != 0.0 && cw.cotangent.iter().any(|c| *c != 0.0) {
        // Q = P Aᵀ, so ∂/∂A = Gᵀ P with G = ∂g/∂Q
        let g = model.input_gradient(moved, &cw.cotangent);
        let mut gp = Transform3::ZERO;
        for (gi, pi) in g.iter().zip(cloud.points()) {
            gp = gp + Transform3::outer(*gi, *pi);
        }
        gradient = gradient + gp.scale(lambda);
    }
    TransformGradient {
        objective: penalty + lambda * cw.value,
        gradient,
        penalty,
        cw_value: cw.value,
        degenerate,
    }
}

/// Descent state after some number of steps.
#[derive(Clone)]
struct Snapshot {
    transform: Transform3,
    logits: Logits,
    prediction: Prediction,
    steps: usize,
    degenerate_steps: usize,
}

/// Warm start on one cloud followed by descent, reporting the outcome that a
/// run with each budget in `ks` would produce. The bandit and generator are
/// only touched by the warm start, so every budget shares it.
fn attack_cloud<M, R>(
    model: &M,
    index: usize,
    cloud: &PointCloud,
    cfg: &CtriConfig,
    ks: &[usize],
    state: &mut BanditState,
    rng: &mut R,
) -> Vec<AttackOutcome>
where
    M: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let truth = cloud.label.expect("attacked clouds carry their true label");
    let warm = tsi_single(model, cloud, &cfg.tsi, state, rng);
    let warm_outcome = warm.to_outcome(index, truth);
    let k_max = ks.iter().copied().max().unwrap_or(0);
    if warm.success || k_max == 0 {
        return vec![warm_outcome; ks.len()];
    }

    let warm_logits = model.logits(&apply_transform(cloud, &warm.transform));
    let target = match cfg.target {
        TargetRule::SecondLogit => select_target(&warm_logits, truth),
        TargetRule::Fixed(t) => t,
    };
    let mut snaps: Vec<Option<Snapshot>> = vec![None; ks.len()];
    let mut cur = Snapshot {
        transform: warm.transform,
        logits: warm_logits,
        prediction: warm.prediction.clone(),
        steps: 0,
        degenerate_steps: 0,
    };
    loop {
        for (slot, &k) in snaps.iter_mut().zip(ks) {
            if k == cur.steps {
                *slot = Some(cur.clone());
            }
        }
        if cur.prediction.predicted_class != truth || cur.steps == k_max {
            for (slot, &k) in snaps.iter_mut().zip(ks) {
                if slot.is_none() && k > cur.steps {
                    *slot = Some(cur.clone());
                }
            }
            break;
        }
        let moved = apply_transform(cloud, &cur.transform);
        let g = gradient_at(
            model,
            cloud,
            &moved,
            &cur.logits,
            &cur.transform,
            target,
            cfg.lambda,
            cfg.kappa,
            cfg.degeneracy_tol,
        );
        cur.transform = cur.transform - g.gradient.scale(cfg.eta);
        cur.steps += 1;
        cur.degenerate_steps += g.degenerate as usize;
        cur.logits = model.logits(&apply_transform(cloud, &cur.transform));
        cur.prediction = Prediction::from_logits(&cur.logits);
    }

    snaps
        .into_iter()
        .map(|s| {
            let s = s.expect("every budget is reached or passed");
            if s.steps == 0 {
                return warm_outcome.clone();
            }
            let final_class = s.prediction.predicted_class;
            AttackOutcome {
                transform: s.transform,
                success: final_class != truth,
                penalty: spectral_norm_penalty(&s.transform),
                iterations_used: warm_outcome.samples_used + s.steps,
                gradient_steps: s.steps,
                final_class,
                target_class: Some(target),
                target_hit: Some(final_class == target),
                confidence: s.prediction.confidence(),
                degenerate_steps: s.degenerate_steps,
                ..warm_outcome.clone()
            }
        })
        .collect()
}

/// CTRI on every cloud with the state shared across clouds.
pub fn ctri<M, R>(
    model: &M,
    clouds: &[PointCloud],
    cfg: &CtriConfig,
    state: &mut BanditState,
    rng: &mut R,
) -> Vec<AttackOutcome>
where
    M: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    ctri_multi_k(model, clouds, cfg, &[cfg.max_iters], state, rng)
        .pop()
        .expect("one budget")
}

/// Outcomes for several step budgets from one pass; `result[j]` is what
/// [`ctri`] returns with `max_iters = ks[j]`.
pub fn ctri_multi_k<M, R>(
    model: &M,
    clouds: &[PointCloud],
    cfg: &CtriConfig,
    ks: &[usize],
    state: &mut BanditState,
    rng: &mut R,
) -> Vec<Vec<AttackOutcome>>
where
    M: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let mut out = vec![Vec::with_capacity(clouds.len()); ks.len()];
    for (i, cloud) in clouds.iter().enumerate() {
        for (j, o) in attack_cloud(model, i, cloud, cfg, ks, state, rng).into_iter().enumerate() {
            out[j].push(o);
        }
    }
    out
}

/// Fresh state and generator from `cfg.tsi.seed`, then [`ctri`].
pub fn run_ctri<M: Classifier + ?Sized>(
    model: &M,
    clouds: &[PointCloud],
    cfg: &CtriConfig,
) -> Result<(Vec<AttackOutcome>, BanditState), String> {
    cfg.validate()?;
    let mut state = cfg.tsi.initial_state()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.tsi.seed);
    let out = ctri(model, clouds, cfg, &mut state, &mut rng);
    Ok((out, state))
}
