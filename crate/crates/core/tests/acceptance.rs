//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use isoattack::attack::{cw_loss, select_target, transform_gradient, AttackOutcome, CtriConfig};
use isoattack::bandit::{AnglePartition, BanditState};
use isoattack::geometry::{
    euler_to_rotation, householder_reflection, spectral_norm_penalty, spectral_norm_penalty_grad, EulerAngles,
    ReflectionAxis, Transform3,
};
use isoattack::harness::report::mean_var;
use isoattack::harness::{
    run_augmentation_tradeoff, run_ctri_eval, run_transfer_eval, run_tsi_eval, select_attack_set, CtriEvalConfig,
    RunOutput, TradeoffConfig, TransferConfig, TsiEvalConfig,
};
use isoattack::model::{train_on_spec, Classifier, MiniPointNet, TrainConfig};
use isoattack::pointcloud::{apply_transform, generate_shapes, Dataset, PointCloud, ShapeDatasetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 2024;
const N_CLOUDS: usize = 200;
/// CW weight used for the toy victim; see README.
const TOY_LAMBDA: f64 = 1.0;

struct Check {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Check {
    Check {
        ok,
        detail: detail.into(),
    }
}

struct Suite {
    passed: usize,
    failed: Vec<usize>,
}

impl Suite {
    fn run<T>(&mut self, id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> (Check, T)) -> Option<T> {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (mut c, value) = match result {
            Ok((c, v)) => (c, Some(v)),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (check(false, format!("panicked: {msg}")), None)
            }
        };
        if let Some(l) = limit {
            if elapsed > l {
                c.ok = false;
                c.detail.push_str(&format!("; runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), l.as_secs_f64()));
            }
        }
        let tag = if c.ok { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name}: {} ({:.2}s)", c.detail, elapsed.as_secs_f64());
        if c.ok {
            self.passed += 1;
        } else {
            self.failed.push(id);
        }
        value
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn rate(run: &RunOutput, key: &str) -> f64 {
    run.entry(key)
        .unwrap_or_else(|| panic!("missing entry {key}"))
        .summary
        .success_rate
        .unwrap_or_else(|| panic!("entry {key} attacked nothing"))
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Transform3 {
    Transform3::from_row_major(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return v.map(|x| x / n);
        }
    }
}

fn unit_basis(i: usize, j: usize, h: f64) -> Transform3 {
    let mut e = Transform3::ZERO;
    e.set(i, j, h);
    e
}

fn max_abs_diff(a: &Transform3, b: &Transform3) -> f64 {
    (*a - *b).max_abs()
}

// 1
fn isometry_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_gram, mut worst_det, mut bad) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..10_000 {
        let r = euler_to_rotation(EulerAngles::new(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        ));
        let h = householder_reflection(ReflectionAxis::new(rng.random_range(-PI..PI), rng.random_range(0.0..PI)));
        for (a, sign) in [(r, 1.0), (h, -1.0)] {
            let g = a.gram_deviation().max_abs();
            let d = (a.determinant().abs() - 1.0).abs();
            worst_gram = worst_gram.max(g);
            worst_det = worst_det.max(d);
            if g > 1e-9 || d > 1e-9 || (a.determinant() - sign).abs() > 1e-9 {
                bad += 1;
            }
        }
    }
    check(
        bad == 0,
        format!("10000 rotations + 10000 reflections, max |AᵀA−I| {worst_gram:.1e}, max ||det|−1| {worst_det:.1e}, {bad} violations"),
    )
}

// 2
fn spectral_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let (mut above, mut short, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..1000 {
        let a = random_matrix(&mut rng);
        let emp = (0..1000)
            .map(|_| {
                let y = a.apply(random_unit(&mut rng));
                (y[0] * y[0] + y[1] * y[1] + y[2] * y[2] - 1.0).abs()
            })
            .fold(0.0, f64::max);
        let p = spectral_norm_penalty(&a);
        if emp > p + 1e-6 {
            above += 1;
        }
        let gap = (p - emp).abs();
        worst = worst.max(gap);
        if gap > 1e-6 + 1e-3 {
            short += 1;
        }
    }
    check(
        above == 0 && short == 0,
        format!(
            "1000 A with entries U(−1,1); sampled sup above penalty: {above}; |penalty − sampled sup| > 1e-6 + 1e-3: {short}; worst gap {worst:.2e}"
        ),
    )
}

// 3
fn gradient_fidelity(model: &MiniPointNet, clouds: &[PointCloud]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);

    // penalty gradient, step 1e-6, relative error 1e-4
    let h = 1e-6;
    let (mut p_ok, mut p_flagged, mut p_unexplained) = (0usize, 0usize, 0usize);
    for _ in 0..500 {
        let a = random_matrix(&mut rng);
        let (an, flagged) = match spectral_norm_penalty_grad(&a) {
            Ok(g) => (g, false),
            Err(e) => (e.subgradient, true),
        };
        let mut fd = Transform3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                let e = unit_basis(i, j, h);
                fd.set(i, j, (spectral_norm_penalty(&(a + e)) - spectral_norm_penalty(&(a - e))) / (2.0 * h));
            }
        }
        let rel = max_abs_diff(&fd, &an) / an.max_abs().max(1e-12);
        if rel <= 1e-4 {
            p_ok += 1;
        } else if flagged {
            p_flagged += 1;
        } else {
            p_unexplained += 1;
        }
    }

    // transform gradient on the trained model, step 1e-5, relative error 1e-3
    let h = 1e-5;
    let (mut t_ok, mut t_flagged, mut t_unexplained) = (0usize, 0usize, 0usize);
    let (mut pool_ties, mut rival_ties) = (0usize, 0usize);
    for probe in 0..500 {
        let cloud = &clouds[probe % clouds.len()];
        let rot = euler_to_rotation(EulerAngles::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
        ));
        let e = Transform3::from_row_major(std::array::from_fn(|_| rng.random_range(-0.05..0.05)));
        let a = rot * (Transform3::IDENTITY + e);
        let base = model.logits(&apply_transform(cloud, &a));
        let target = select_target(&base, cloud.label.expect("labelled"));
        let tg = transform_gradient(model, cloud, &a, target, TOY_LAMBDA, 0.0);

        let rival = |z: &isoattack::model::Logits| {
            let l = cw_loss(z, target, 0.0);
            l.cotangent.iter().position(|c| *c > 0.0)
        };
        let base_sig = model.activation_signature(&apply_transform(cloud, &a));
        let base_rival = rival(&base);
        let (mut pool_tie, mut rival_tie) = (false, false);
        let mut fd = Transform3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                let d = unit_basis(i, j, h);
                let mut side = |m: Transform3| {
                    let moved = apply_transform(cloud, &m);
                    let z = model.logits(&moved);
                    pool_tie |= model.activation_signature(&moved) != base_sig;
                    rival_tie |= rival(&z) != base_rival;
                    spectral_norm_penalty(&m) + TOY_LAMBDA * cw_loss(&z, target, 0.0).value
                };
                let plus = side(a + d);
                let minus = side(a - d);
                fd.set(i, j, (plus - minus) / (2.0 * h));
            }
        }
        let rel = max_abs_diff(&fd, &tg.gradient) / tg.gradient.max_abs().max(1e-12);
        pool_ties += pool_tie as usize;
        rival_ties += rival_tie as usize;
        if rel <= 1e-3 {
            t_ok += 1;
        } else if tg.degenerate || pool_tie || rival_tie {
            t_flagged += 1;
        } else {
            t_unexplained += 1;
        }
    }
    let ok = p_ok * 100 >= 95 * 500 && t_ok * 100 >= 95 * 500 && p_unexplained == 0 && t_unexplained == 0;
    check(
        ok,
        format!(
            "penalty grad {p_ok}/500 within 1e-4 ({p_flagged} flagged, {p_unexplained} unexplained); \
             transform grad {t_ok}/500 within 1e-3 ({t_flagged} flagged, {t_unexplained} unexplained; \
             probes crossing a pool/rectifier switch {pool_ties}, rival switch {rival_ties})"
        ),
    )
}

// 4
fn bandit_concentration() -> Check {
    let partition = AnglePartition::cube(-PI, PI, 4).unwrap();
    let best = 37;
    let mut shares: Vec<f64> = (0..20u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = BanditState::new(partition.clone());
            for _ in 0..5000 {
                let k = state.select_action(&mut rng);
                let p = if k == best { 0.8 } else { 0.1 };
                let reward = rng.random::<f64>() < p;
                state.update(k, reward);
            }
            state.pulls(best) as f64 / 5000.0
        })
        .collect();
    shares.sort_by(f64::total_cmp);
    let median = (shares[9] + shares[10]) / 2.0;
    check(
        median >= 0.6,
        format!("64 cells, median best-cell share {median:.3} over 20 seeds (min {:.3})", shares[0]),
    )
}

// 5
fn update_rule() -> Check {
    let mut bad = 0usize;
    let mut cases = 0usize;
    for partition in [AnglePartition::cube(-PI, PI, 4).unwrap(), AnglePartition::reflection(-PI, PI, 4).unwrap()] {
        let fresh = BanditState::new(partition);
        for k in 0..fresh.cell_count() {
            for (reward, expect) in [(true, (2.0, 1.0)), (false, (1.0, 2.0))] {
                cases += 1;
                let mut s = fresh.clone();
                s.update(k, reward);
                for j in 0..s.cell_count() {
                    let want = if j == k { expect } else { (1.0, 1.0) };
                    if s.params(j) != want {
                        bad += 1;
                    }
                }
            }
        }
    }
    check(bad == 0, format!("{cases} single updates over every cell of both partitions, {bad} wrong parameters"))
}

fn tsi_eval_config() -> TsiEvalConfig {
    TsiEvalConfig {
        samples: vec![1, 10],
        ranges: vec!["pi".parse().unwrap(), "pi/8".parse().unwrap(), "pi/64".parse().unwrap()],
        n_clouds: N_CLOUDS,
        ..TsiEvalConfig::default()
    }
}

fn ctri_eval_config() -> CtriEvalConfig {
    CtriEvalConfig {
        k_values: vec![7, 50, 1000],
        ranges: vec!["pi".parse().unwrap(), "pi/8".parse().unwrap(), "pi/64".parse().unwrap()],
        lambda: TOY_LAMBDA,
        n_clouds: N_CLOUDS,
        ..CtriEvalConfig::default()
    }
}

// 6
fn tsi_trend(model: &MiniPointNet, test: &Dataset) -> (Check, RunOutput) {
    let out = run_tsi_eval(model, test, &tsi_eval_config(), SEED).expect("tsi eval").run;
    let r: Vec<f64> = ["pi", "pi/8", "pi/64"].iter().map(|g| rate(&out, &format!("range={g},S=10"))).collect();
    let attacked = out.report.entries[0].summary.attacked;
    let c = check(
        attacked == N_CLOUDS && r[0] >= r[1] && r[1] >= r[2],
        format!("N={attacked}, S=10: π {:.3} ≥ π/8 {:.3} ≥ π/64 {:.3}", r[0], r[1], r[2]),
    );
    (c, out)
}

// 7
fn ctri_dominates(model: &MiniPointNet, test: &Dataset) -> (Check, RunOutput) {
    let cfg = ctri_eval_config();
    let out = run_ctri_eval(model, test, &cfg, SEED).expect("ctri eval");
    let mut ok = true;
    let mut parts = Vec::new();
    for g in ["pi", "pi/8", "pi/64"] {
        let t = rate(&out, &format!("range={g},tsi"));
        let ks: Vec<f64> = cfg.k_values.iter().map(|k| rate(&out, &format!("range={g},K={k}"))).collect();
        ok &= ks.iter().all(|c| *c >= t);
        // paired per-cloud superset
        for k in &cfg.k_values {
            let tsi: Vec<&AttackOutcome> = out.outcomes_for(&format!("range={g},tsi")).collect();
            let ctri: Vec<&AttackOutcome> = out.outcomes_for(&format!("range={g},K={k}")).collect();
            ok &= tsi.len() == ctri.len() && tsi.iter().zip(&ctri).all(|(a, b)| !a.success || b.success);
        }
        parts.push(format!(
            "{g}: TSI {t:.3}, K=7/50/1000 {}",
            ks.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join("/")
        ));
    }
    (check(ok, format!("S=50, λ={TOY_LAMBDA}; {}", parts.join("; "))), out)
}

// 8
fn budget_trend(tsi: &RunOutput) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for g in ["pi", "pi/8"] {
        let (s1, s10) = (rate(tsi, &format!("range={g},S=1")), rate(tsi, &format!("range={g},S=10")));
        ok &= s10 > s1;
        parts.push(format!("{g}: S=1 {s1:.3} < S=10 {s10:.3}"));
    }
    check(ok, parts.join("; "))
}

// 9
fn zero_penalty_bookkeeping(ctri: &RunOutput) -> Check {
    let mut ok = ctri.verify().is_ok();
    let (mut warm, mut grad) = (0usize, 0usize);
    for e in &ctri.report.entries {
        let outs: Vec<&AttackOutcome> = ctri.outcomes_for(&e.key).collect();
        let successes: Vec<&&AttackOutcome> = outs.iter().filter(|o| o.success).collect();
        for o in &successes {
            if o.warm_start_success {
                warm += 1;
                ok &= o.penalty == 0.0;
            } else {
                grad += 1;
                ok &= o.penalty > 0.0;
            }
        }
        let starred: Vec<f64> =
            successes.iter().filter(|o| !o.warm_start_success).map(|o| o.penalty).collect();
        let (m, v) = mean_var(&starred);
        let p = &e.summary.penalty;
        ok &= p.nonzero_count == e.summary.successes - e.summary.warm_start_successes;
        ok &= p.mean_star == m && p.var_star == v;
    }
    check(
        ok,
        format!("{warm} warm-start successes all at penalty 0, {grad} gradient successes all positive, starred stats match"),
    )
}

// 10
fn transfer(model: &MiniPointNet, spec: &ShapeDatasetSpec, test: &Dataset) -> Check {
    let (other, rep) = train_on_spec(
        spec,
        &TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        },
    )
    .expect("second model");
    let cfg = TransferConfig {
        attack: CtriEvalConfig {
            k_values: vec![50],
            ranges: vec!["pi".parse().unwrap()],
            lambda: TOY_LAMBDA,
            n_clouds: N_CLOUDS,
            ..CtriEvalConfig::default()
        },
        baseline_samples: 1,
    };
    let models = vec![("a".to_string(), model.clone()), ("b".to_string(), other)];
    let out = run_transfer_eval(&models, test, &cfg, SEED).expect("transfer");
    let (ab, ba) = (rate(&out, "transfer=a->b"), rate(&out, "transfer=b->a"));
    let (base_a, base_b) = (rate(&out, "baseline=a"), rate(&out, "baseline=b"));
    check(
        ab >= base_b && ba >= base_a,
        format!(
            "second model test acc {:.3}; a→b {ab:.3} vs baseline on b {base_b:.3}; b→a {ba:.3} vs baseline on a {base_a:.3}",
            rep.test_accuracy
        ),
    )
}

// 11
fn tradeoff(spec: &ShapeDatasetSpec) -> Check {
    let cfg = TradeoffConfig {
        attack: CtriEvalConfig {
            k_values: vec![50],
            ranges: vec!["pi".parse().unwrap()],
            lambda: TOY_LAMBDA,
            n_clouds: N_CLOUDS,
            ..CtriEvalConfig::default()
        },
        ..TradeoffConfig::default()
    };
    assert_eq!(cfg.repeats, 3);
    let (_, rows) = run_augmentation_tradeoff(spec, &TrainConfig::default(), &cfg, SEED).expect("tradeoff");
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    assert!(first.p == 0.0 && last.p == 1.0);
    let (t0, t1) = (first.tsi_success_rate.unwrap(), last.tsi_success_rate.unwrap());
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("p={:.1} acc {:.3}±{:.4} tsi {:.3}", r.p, r.accuracy_mean, r.accuracy_var, r.tsi_success_rate.unwrap_or(f64::NAN)))
        .collect();
    check(
        t1 < t0 && last.accuracy_var > first.accuracy_var,
        format!(
            "TSI p=1 {t1:.3} vs p=0 {t0:.3}; acc var p=1 {:.2e} vs p=0 {:.2e} [{}]",
            last.accuracy_var,
            first.accuracy_var,
            table.join(", ")
        ),
    )
}

// 12
fn determinism(model: &MiniPointNet, spec: &ShapeDatasetSpec, test: &Dataset, tsi: &RunOutput) -> Check {
    let (again, _) = train_on_spec(spec, &TrainConfig::default()).expect("retrain");
    let same_model = &again == model;
    let tsi_again = run_tsi_eval(&again, test, &tsi_eval_config(), SEED).expect("tsi").run;
    let same_tsi = tsi_again.outcomes_jsonl() == tsi.outcomes_jsonl();
    let small = CtriEvalConfig {
        k_values: vec![7, 50],
        ranges: vec!["pi/64".parse().unwrap()],
        n_clouds: 40,
        lambda: TOY_LAMBDA,
        ..CtriEvalConfig::default()
    };
    let c1 = run_ctri_eval(model, test, &small, SEED).expect("ctri").outcomes_jsonl();
    let c2 = run_ctri_eval(&again, test, &small, SEED).expect("ctri").outcomes_jsonl();
    let c3 = run_ctri_eval(model, test, &small, SEED + 1).expect("ctri").outcomes_jsonl();
    check(
        same_model && same_tsi && c1 == c2 && c1 != c3,
        format!(
            "retrained model identical: {same_model}; TSI lines identical: {same_tsi}; CTRI lines identical: {}; other seed differs: {}",
            c1 == c2,
            c1 != c3
        ),
    )
}

fn main() {
    let mut suite = Suite {
        passed: 0,
        failed: Vec::new(),
    };
    let spec = ShapeDatasetSpec::default();
    let start = Instant::now();
    let (model, report) = train_on_spec(&spec, &TrainConfig::default()).expect("training the toy model");
    let (_, test) = generate_shapes(&spec);
    println!(
        "toy model: test accuracy {:.3}, trained in {:.1}s",
        report.test_accuracy,
        start.elapsed().as_secs_f64()
    );
    let probe_clouds = select_attack_set(&[&model], &test, 50).clouds;
    assert!(CtriConfig::default().lambda < TOY_LAMBDA);

    suite.run(1, "isometry exactness", Some(Duration::from_secs(1)), || (isometry_exactness(), ()));
    suite.run(2, "spectral equivalence", secs(10), || (spectral_equivalence(), ()));
    suite.run(3, "gradient fidelity", secs(60), || (gradient_fidelity(&model, &probe_clouds), ()));
    suite.run(4, "bandit concentration", secs(30), || (bandit_concentration(), ()));
    suite.run(5, "update rule", None, || (update_rule(), ()));
    let tsi = suite.run(6, "TSI range trend", secs(600), || tsi_trend(&model, &test));
    let ctri = suite.run(7, "CTRI at least TSI", None, || ctri_dominates(&model, &test));
    suite.run(8, "TSI budget trend", None, || match &tsi {
        Some(t) => (budget_trend(t), ()),
        None => (check(false, "TSI run unavailable"), ()),
    });
    suite.run(9, "zero-penalty bookkeeping", None, || match &ctri {
        Some(c) => (zero_penalty_bookkeeping(c), ()),
        None => (check(false, "CTRI run unavailable"), ()),
    });
    suite.run(10, "transfer sanity", secs(600), || (transfer(&model, &spec, &test), ()));
    suite.run(11, "augmentation tradeoff", secs(1800), || (tradeoff(&spec), ()));
    suite.run(12, "determinism", None, || match &tsi {
        Some(t) => (determinism(&model, &spec, &test, t), ()),
        None => (check(false, "TSI run unavailable"), ()),
    });

    println!(
        "acceptance: {}/{} passed{}",
        suite.passed,
        suite.passed + suite.failed.len(),
        if suite.failed.is_empty() {
            String::new()
        } else {
            format!(", failed {:?}", suite.failed)
        }
    );
    if !suite.failed.is_empty() {
        std::process::exit(1);
    }
}
