use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::report::{csv_field, AttackSummary, OutcomeLine, ReportEntry, RunOutput, RunReport, REPORT_SCHEMA_VERSION};
use super::{sub_seed, AngleSpec, HarnessError};
use crate::attack::{
    ctri_multi_k, run_ctri, run_tsi, tsi_single, AttackOutcome, CtriConfig, TargetRule, TransformFamily, TsiConfig,
};
use crate::bandit::BanditState;
use crate::model::{evaluate_accuracy, train, Classifier, MiniPointNet, TrainConfig};
use crate::pointcloud::{apply_transform, generate_shapes, Dataset, PointCloud, ShapeDatasetSpec};

/// The clouds an attack runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSet {
    pub clouds: Vec<PointCloud>,
    /// Position of each attacked cloud in the source split.
    pub source_indices: Vec<usize>,
    /// Clouds skipped because some victim misclassifies them unmodified.
    pub excluded: usize,
}

/// Scan `data` in order and keep the first `n` clouds that every model
/// classifies correctly.
pub fn select_attack_set<M: Classifier>(models: &[&M], data: &Dataset, n: usize) -> AttackSet {
    let mut set = AttackSet {
        clouds: Vec::new(),
        source_indices: Vec::new(),
        excluded: 0,
    };
    for (i, c) in data.clouds.iter().enumerate() {
        if set.clouds.len() == n {
            break;
        }
        let Some(label) = c.label else { continue };
        if models.iter().all(|m| m.predict(c).predicted_class == label) {
            set.clouds.push(c.clone());
            set.source_indices.push(i);
        } else {
            set.excluded += 1;
        }
    }
    set
}

fn default_ranges() -> Vec<AngleSpec> {
    vec!["pi".parse().unwrap()]
}

/// How the budgets of a TSI evaluation relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// One run at the largest budget; budget `S` counts a cloud as fooled
    /// when the first misclassification came within `S` rounds.
    Nested,
    /// A fresh run per budget with the same seed.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsiEvalConfig {
    pub samples: Vec<usize>,
    /// Half-widths `ε` of the symmetric ranges `[−ε, ε]`.
    pub ranges: Vec<AngleSpec>,
    pub divisions: usize,
    pub family: TransformFamily,
    pub n_clouds: usize,
    pub budget_mode: BudgetMode,
}

impl Default for TsiEvalConfig {
    fn default() -> Self {
        Self {
            samples: vec![1, 2, 10],
            ranges: default_ranges(),
            divisions: 4,
            family: TransformFamily::Rotation,
            n_clouds: 200,
            budget_mode: BudgetMode::Nested,
        }
    }
}

impl TsiEvalConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.samples.is_empty() || self.samples.contains(&0) {
            return Err(HarnessError::Config("samples must be a non-empty list of positive budgets".into()));
        }
        validate_ranges(&self.ranges)
    }

    fn tsi_config(&self, range: &AngleSpec, max_samples: usize, seed: u64) -> Result<TsiConfig, HarnessError> {
        let cfg = TsiConfig {
            lo: -range.radians(),
            hi: range.radians(),
            divisions: self.divisions,
            max_samples,
            family: self.family,
            seed,
        };
        cfg.validate().map_err(HarnessError::Config)?;
        Ok(cfg)
    }
}

fn validate_ranges(ranges: &[AngleSpec]) -> Result<(), HarnessError> {
    if ranges.is_empty() {
        return Err(HarnessError::Config("ranges must not be empty".into()));
    }
    if let Some(r) = ranges.iter().find(|r| !(r.radians() > 0.0)) {
        return Err(HarnessError::Config(format!("range half-width {r} must be positive")));
    }
    Ok(())
}

/// TSI report plus the final bandit state for each range.
#[derive(Debug, Clone)]
pub struct TsiEvalOutput {
    pub run: RunOutput,
    pub states: Vec<(String, BanditState)>,
}

fn entry(key: String, params: BTreeMap<String, Value>, outcomes: &[AttackOutcome], lines: &mut Vec<OutcomeLine>) -> ReportEntry {
    lines.extend(outcomes.iter().map(|o| OutcomeLine {
        entry: key.clone(),
        outcome: o.clone(),
    }));
    ReportEntry {
        key,
        params,
        summary: AttackSummary::from_outcomes(outcomes),
    }
}

fn params(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn report(
    experiment: &str,
    seed: u64,
    sub_seeds: BTreeMap<String, u64>,
    config: Value,
    excluded: usize,
    entries: Vec<ReportEntry>,
    extra: Value,
    started: Instant,
) -> RunReport {
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: experiment.into(),
        seed,
        sub_seeds,
        config,
        excluded,
        entries,
        extra,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

/// TSI success rates for every (range, budget) pair. All ranges share one
/// attack seed, so runs are paired.
pub fn run_tsi_eval<M: Classifier>(
    model: &M,
    data: &Dataset,
    cfg: &TsiEvalConfig,
    seed: u64,
) -> Result<TsiEvalOutput, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let attack_seed = sub_seed(seed, "tsi");
    let set = select_attack_set(&[model], data, cfg.n_clouds);
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    let mut states = Vec::new();
    let s_max = *cfg.samples.iter().max().unwrap();
    for range in &cfg.ranges {
        match cfg.budget_mode {
            BudgetMode::Nested => {
                let tcfg = cfg.tsi_config(range, s_max, attack_seed)?;
                let mut state = tcfg.initial_state().map_err(HarnessError::Config)?;
                let mut rng = ChaCha8Rng::seed_from_u64(attack_seed);
                let traces: Vec<_> = set
                    .clouds
                    .iter()
                    .map(|c| tsi_single(model, c, &tcfg, &mut state, &mut rng))
                    .collect();
                for &s in &cfg.samples {
                    let outcomes: Vec<AttackOutcome> = traces
                        .iter()
                        .zip(&set.clouds)
                        .enumerate()
                        .map(|(i, (t, c))| t.truncated(s).to_outcome(i, c.label.unwrap()))
                        .collect();
                    let p = params(&[("range", json!(range.to_string())), ("samples", json!(s))]);
                    entries.push(entry(format!("range={range},S={s}"), p, &outcomes, &mut lines));
                }
                states.push((range.to_string(), state));
            }
            BudgetMode::Independent => {
                let mut last = None;
                for &s in &cfg.samples {
                    let tcfg = cfg.tsi_config(range, s, attack_seed)?;
                    let (outcomes, state) = run_tsi(model, &set.clouds, &tcfg).map_err(HarnessError::Config)?;
                    let p = params(&[("range", json!(range.to_string())), ("samples", json!(s))]);
                    entries.push(entry(format!("range={range},S={s}"), p, &outcomes, &mut lines));
                    if s == s_max {
                        last = Some(state);
                    }
                }
                states.push((range.to_string(), last.unwrap()));
            }
        }
    }
    let sub_seeds = BTreeMap::from([("tsi".to_string(), attack_seed)]);
    let config = serde_json::to_value(cfg).expect("config serializes");
    let report = report("tsi", seed, sub_seeds, config, set.excluded, entries, Value::Null, started);
    Ok(TsiEvalOutput {
        run: RunOutput { report, outcomes: lines },
        states,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtriEvalConfig {
    pub k_values: Vec<usize>,
    pub ranges: Vec<AngleSpec>,
    /// Warm-start budget `S`.
    pub max_samples: usize,
    pub divisions: usize,
    pub family: TransformFamily,
    pub eta: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub target: TargetRule,
    pub n_clouds: usize,
}

impl Default for CtriEvalConfig {
    fn default() -> Self {
        let c = CtriConfig::default();
        Self {
            k_values: vec![7, 50, 1000],
            ranges: default_ranges(),
            max_samples: c.tsi.max_samples,
            divisions: c.tsi.divisions,
            family: c.tsi.family,
            eta: c.eta,
            lambda: c.lambda,
            kappa: c.kappa,
            target: c.target,
            n_clouds: 200,
        }
    }
}

impl CtriEvalConfig {
    fn ctri_config(&self, range: &AngleSpec, max_iters: usize, seed: u64) -> Result<CtriConfig, HarnessError> {
        let cfg = CtriConfig {
            tsi: TsiConfig {
                lo: -range.radians(),
                hi: range.radians(),
                divisions: self.divisions,
                max_samples: self.max_samples,
                family: self.family,
                seed,
            },
            max_iters,
            eta: self.eta,
            lambda: self.lambda,
            kappa: self.kappa,
            target: self.target,
            ..CtriConfig::default()
        };
        cfg.validate().map_err(HarnessError::Config)?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.k_values.is_empty() {
            return Err(HarnessError::Config("k_values must not be empty".into()));
        }
        validate_ranges(&self.ranges)
    }
}

/// CTRI over every (range, K) pair. For each range the entry `range=…,tsi`
/// holds the warm-start outcomes, which are exactly a TSI run with budget
/// `max_samples` on the same clouds and seed.
pub fn run_ctri_eval<M: Classifier>(
    model: &M,
    data: &Dataset,
    cfg: &CtriEvalConfig,
    seed: u64,
) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let attack_seed = sub_seed(seed, "ctri");
    let set = select_attack_set(&[model], data, cfg.n_clouds);
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    let mut ks = vec![0];
    ks.extend(&cfg.k_values);
    for range in &cfg.ranges {
        let ccfg = cfg.ctri_config(range, 0, attack_seed)?;
        let mut state = ccfg.tsi.initial_state().map_err(HarnessError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(attack_seed);
        let per_k = ctri_multi_k(model, &set.clouds, &ccfg, &ks, &mut state, &mut rng);
        let p = params(&[("range", json!(range.to_string())), ("samples", json!(cfg.max_samples))]);
        entries.push(entry(format!("range={range},tsi"), p, &per_k[0], &mut lines));
        for (k, outcomes) in cfg.k_values.iter().zip(&per_k[1..]) {
            let p = params(&[("range", json!(range.to_string())), ("k", json!(k))]);
            entries.push(entry(format!("range={range},K={k}"), p, outcomes, &mut lines));
        }
    }
    let sub_seeds = BTreeMap::from([("ctri".to_string(), attack_seed)]);
    let config = serde_json::to_value(cfg).expect("config serializes");
    let report = report("ctri", seed, sub_seeds, config, set.excluded, entries, Value::Null, started);
    Ok(RunOutput { report, outcomes: lines })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Attack used on each source model.
    pub attack: CtriEvalConfig,
    /// Budget of the random-isometry baseline on each target.
    pub baseline_samples: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            attack: CtriEvalConfig {
                k_values: vec![50],
                ..CtriEvalConfig::default()
            },
            baseline_samples: 1,
        }
    }
}

/// CTRI examples from each source model, replayed on every other model.
/// Clouds are those every model classifies correctly. Each target also gets
/// a TSI baseline with `baseline_samples` rounds on the same clouds.
pub fn run_transfer_eval<M: Classifier>(
    models: &[(String, M)],
    data: &Dataset,
    cfg: &TransferConfig,
    seed: u64,
) -> Result<RunOutput, HarnessError> {
    if models.len() < 2 {
        return Err(HarnessError::Config("transfer needs at least two models".into()));
    }
    let (range, k) = match (cfg.attack.ranges.as_slice(), cfg.attack.k_values.as_slice()) {
        ([r], [k]) => (r.clone(), *k),
        _ => return Err(HarnessError::Config("transfer takes exactly one range and one K".into())),
    };
    validate_ranges(std::slice::from_ref(&range))?;
    let started = Instant::now();
    let attack_seed = sub_seed(seed, "transfer/attack");
    let baseline_seed = sub_seed(seed, "transfer/baseline");
    let refs: Vec<&M> = models.iter().map(|(_, m)| m).collect();
    let set = select_attack_set(&refs, data, cfg.attack.n_clouds);
    let n = models.len();
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    let mut matrix = vec![vec![Value::Null; n]; n];
    let mut baseline = Vec::new();

    for (s, (src_name, src)) in models.iter().enumerate() {
        let ccfg = cfg.attack.ctri_config(&range, k, attack_seed)?;
        let (outcomes, _) = run_ctri(src, &set.clouds, &ccfg).map_err(HarnessError::Config)?;
        let p = params(&[("source", json!(src_name))]);
        entries.push(entry(format!("source={src_name}"), p, &outcomes, &mut lines));
        for (t, (dst_name, dst)) in models.iter().enumerate() {
            if t == s {
                continue;
            }
            let replayed: Vec<AttackOutcome> = outcomes
                .iter()
                .zip(&set.clouds)
                .map(|(o, c)| {
                    let pred = dst.predict(&apply_transform(c, &o.transform));
                    AttackOutcome {
                        success: pred.predicted_class != o.original_class,
                        final_class: pred.predicted_class,
                        confidence: pred.confidence(),
                        target_hit: o.target_class.map(|t| t == pred.predicted_class),
                        ..o.clone()
                    }
                })
                .collect();
            let p = params(&[("source", json!(src_name)), ("target", json!(dst_name))]);
            let e = entry(format!("transfer={src_name}->{dst_name}"), p, &replayed, &mut lines);
            matrix[s][t] = json!(e.summary.success_rate);
            entries.push(e);
        }
    }
    for (name, m) in models {
        let tcfg = TsiConfig {
            max_samples: cfg.baseline_samples,
            ..cfg.attack.ctri_config(&range, k, baseline_seed)?.tsi
        };
        let (outcomes, _) = run_tsi(m, &set.clouds, &tcfg).map_err(HarnessError::Config)?;
        let p = params(&[("target", json!(name)), ("samples", json!(cfg.baseline_samples))]);
        let e = entry(format!("baseline={name}"), p, &outcomes, &mut lines);
        baseline.push(json!(e.summary.success_rate));
        entries.push(e);
    }
    let names: Vec<&str> = models.iter().map(|(n, _)| n.as_str()).collect();
    let extra = json!({ "models": names, "transfer_matrix": matrix, "baseline": baseline });
    let sub_seeds = BTreeMap::from([
        ("transfer/attack".to_string(), attack_seed),
        ("transfer/baseline".to_string(), baseline_seed),
    ]);
    let config = serde_json::to_value(cfg).expect("config serializes");
    let report = report("transfer", seed, sub_seeds, config, set.excluded, entries, extra, started);
    Ok(RunOutput { report, outcomes: lines })
}

/// Transfer matrix as CSV with `/` on the diagonal.
pub fn transfer_matrix_csv(report: &RunReport) -> Option<String> {
    let names = report.extra.get("models")?.as_array()?;
    let matrix = report.extra.get("transfer_matrix")?.as_array()?;
    let mut s = String::from("source\\target");
    for n in names {
        s.push(',');
        s.push_str(&csv_field(n.as_str()?));
    }
    s.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        s.push_str(&csv_field(names[i].as_str()?));
        for (j, v) in row.as_array()?.iter().enumerate() {
            s.push(',');
            if i == j {
                s.push('/');
            } else if let Some(x) = v.as_f64() {
                s.push_str(&x.to_string());
            }
        }
        s.push('\n');
    }
    Some(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeoffConfig {
    pub p_values: Vec<f64>,
    /// Trainings per rotation probability.
    pub repeats: usize,
    pub tsi_samples: usize,
    pub attack: CtriEvalConfig,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        Self {
            p_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            repeats: 3,
            tsi_samples: 10,
            attack: CtriEvalConfig {
                k_values: vec![50],
                ..CtriEvalConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub p: f64,
    pub accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    /// Population variance over the repeats.
    pub accuracy_var: f64,
    pub tsi_success_rate: Option<f64>,
    pub ctri_success_rate: Option<f64>,
}

/// Train `repeats` models per rotation probability and attack the first one.
/// Repeat `r` uses the same training seed at every `p`, and all attacks share
/// one seed.
pub fn run_augmentation_tradeoff(
    spec: &ShapeDatasetSpec,
    train_cfg: &TrainConfig,
    cfg: &TradeoffConfig,
    seed: u64,
) -> Result<(RunOutput, Vec<TradeoffRow>), HarnessError> {
    if cfg.repeats == 0 {
        return Err(HarnessError::Config("repeats must be at least 1".into()));
    }
    if cfg.p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(HarnessError::Config("p_values must lie in [0, 1]".into()));
    }
    let (range, k) = match (cfg.attack.ranges.as_slice(), cfg.attack.k_values.as_slice()) {
        ([r], [k]) => (r.clone(), *k),
        _ => return Err(HarnessError::Config("tradeoff takes exactly one range and one K".into())),
    };
    spec.validate().map_err(HarnessError::Config)?;
    let started = Instant::now();
    let (train_set, test_set) = generate_shapes(spec);
    let attack_seed = sub_seed(seed, "tradeoff/attack");
    let mut sub_seeds = BTreeMap::from([("tradeoff/attack".to_string(), attack_seed)]);
    let train_seeds: Vec<u64> = (0..cfg.repeats)
        .map(|r| {
            let name = format!("tradeoff/train/{r}");
            let s = sub_seed(seed, &name);
            sub_seeds.insert(name, s);
            s
        })
        .collect();
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut excluded = 0;
    for &p in &cfg.p_values {
        let mut accuracies = Vec::new();
        let mut victim: Option<MiniPointNet> = None;
        for &ts in &train_seeds {
            let tc = TrainConfig {
                p_rotation: p,
                seed: ts,
                ..train_cfg.clone()
            };
            let (net, _) = train(&train_set, &test_set, spec.classes.len(), &tc)?;
            accuracies.push(evaluate_accuracy(&net, &test_set));
            victim.get_or_insert(net);
        }
        let victim = victim.unwrap();
        let set = select_attack_set(&[&victim], &test_set, cfg.attack.n_clouds);
        excluded += set.excluded;
        let ccfg = cfg.attack.ctri_config(&range, k, attack_seed)?;
        let tcfg = TsiConfig {
            max_samples: cfg.tsi_samples,
            ..ccfg.tsi.clone()
        };
        let (tsi_out, _) = run_tsi(&victim, &set.clouds, &tcfg).map_err(HarnessError::Config)?;
        let (ctri_out, _) = run_ctri(&victim, &set.clouds, &ccfg).map_err(HarnessError::Config)?;
        let pp = params(&[("p", json!(p))]);
        let te = entry(format!("p={p},tsi"), pp.clone(), &tsi_out, &mut lines);
        let ce = entry(format!("p={p},ctri"), pp, &ctri_out, &mut lines);
        let (mean, var) = super::report::mean_var(&accuracies);
        rows.push(TradeoffRow {
            p,
            accuracy_mean: mean.unwrap(),
            accuracy_var: var.unwrap(),
            accuracies,
            tsi_success_rate: te.summary.success_rate,
            ctri_success_rate: ce.summary.success_rate,
        });
        entries.push(te);
        entries.push(ce);
    }
    let extra = json!({ "rows": rows });
    let config = json!({ "dataset": spec, "train": train_cfg, "tradeoff": cfg });
    let report = report("tradeoff", seed, sub_seeds, config, excluded, entries, extra, started);
    Ok((RunOutput { report, outcomes: lines }, rows))
}

/// Tradeoff rows as CSV.
pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("p,accuracy_mean,accuracy_var,tsi_success_rate,ctri_success_rate\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.p,
            r.accuracy_mean,
            r.accuracy_var,
            f(r.tsi_success_rate),
            f(r.ctri_success_rate)
        ));
    }
    s
}
