//! Run reports: per-cloud outcome lines plus a summary whose aggregates can be
//! recomputed from those lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::attack::AttackOutcome;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";

/// Quote a CSV field when it holds a separator, quote or line break.
pub(crate) fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// Population mean and variance; `None` for an empty slice.
pub fn mean_var(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (Some(mean), Some(var))
}

/// Statistics of `σ(A*ᵀA* − I)` over successful outcomes. The starred pair
/// covers only strictly positive penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStats {
    pub count: usize,
    pub nonzero_count: usize,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub var: Option<f64>,
    pub mean_star: Option<f64>,
    pub var_star: Option<f64>,
}

impl PenaltyStats {
    pub fn from_penalties(penalties: &[f64]) -> Self {
        let nonzero: Vec<f64> = penalties.iter().copied().filter(|p| *p > 0.0).collect();
        let (mean, var) = mean_var(penalties);
        let (mean_star, var_star) = mean_var(&nonzero);
        Self {
            count: penalties.len(),
            nonzero_count: nonzero.len(),
            max: penalties.iter().copied().reduce(f64::max),
            mean,
            var,
            mean_star,
            var_star,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attacked: usize,
    pub successes: usize,
    /// `None` when nothing was attacked.
    pub success_rate: Option<f64>,
    pub zero_denominator: bool,
    pub warm_start_successes: usize,
    pub target_hits: usize,
    pub penalty: PenaltyStats,
}

impl AttackSummary {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a AttackOutcome>) -> Self {
        let outcomes: Vec<&AttackOutcome> = outcomes.into_iter().collect();
        let attacked = outcomes.len();
        let successes = outcomes.iter().filter(|o| o.success).count();
        let penalties: Vec<f64> = outcomes.iter().filter(|o| o.success).map(|o| o.penalty).collect();
        Self {
            attacked,
            successes,
            success_rate: (attacked > 0).then(|| successes as f64 / attacked as f64),
            zero_denominator: attacked == 0,
            warm_start_successes: outcomes.iter().filter(|o| o.warm_start_success).count(),
            target_hits: outcomes.iter().filter(|o| o.target_hit == Some(true)).count(),
            penalty: PenaltyStats::from_penalties(&penalties),
        }
    }
}

/// One experimental setting inside a run, e.g. one budget at one angle range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub key: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub summary: AttackSummary,
}

/// An outcome tagged with the entry it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLine {
    pub entry: String,
    #[serde(flatten)]
    pub outcome: AttackOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    /// Clouds dropped because the victim misclassifies them unmodified.
    pub excluded: usize,
    pub entries: Vec<ReportEntry>,
    /// Experiment-specific tables (transfer matrix, tradeoff rows).
    #[serde(default)]
    pub extra: serde_json::Value,
    pub wall_clock_secs: f64,
}

/// A report together with its outcome lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub outcomes: Vec<OutcomeLine>,
}

impl RunOutput {
    pub fn entry(&self, key: &str) -> Option<&ReportEntry> {
        self.report.entries.iter().find(|e| e.key == key)
    }

    pub fn outcomes_for<'a>(&'a self, key: &str) -> impl Iterator<Item = &'a AttackOutcome> + 'a {
        let key = key.to_string();
        self.outcomes.iter().filter(move |l| l.entry == key).map(|l| &l.outcome)
    }

    /// JSON-lines text of the outcomes; contains nothing time-dependent.
    pub fn outcomes_jsonl(&self) -> String {
        let mut s = String::new();
        for line in &self.outcomes {
            s.push_str(&serde_json::to_string(line).expect("outcomes serialize"));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let summary = dir.join(SUMMARY_FILE);
        let json = serde_json::to_string_pretty(&self.report).expect("report serializes");
        fs::write(&summary, json + "\n").map_err(|e| HarnessError::io(&summary, e))?;
        let path = dir.join(OUTCOMES_FILE);
        let mut f = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        f.write_all(self.outcomes_jsonl().as_bytes())
            .map_err(|e| HarnessError::io(&path, e))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let summary = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&summary).map_err(|e| HarnessError::io(&summary, e))?;
        let report: RunReport =
            serde_json::from_str(&text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", summary.display())))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(HarnessError::Runtime(format!(
                "{}: unsupported report schema_version {}",
                summary.display(),
                report.schema_version
            )));
        }
        let path = dir.join(OUTCOMES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let outcomes = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| HarnessError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { report, outcomes })
    }

    /// Recompute every entry's summary from the outcome lines and list the
    /// entries that disagree.
    pub fn verify(&self) -> Result<(), Vec<String>> {
        let mut bad = Vec::new();
        for e in &self.report.entries {
            let recomputed = AttackSummary::from_outcomes(self.outcomes_for(&e.key));
            if recomputed != e.summary {
                bad.push(e.key.clone());
            }
        }
        let known: Vec<&str> = self.report.entries.iter().map(|e| e.key.as_str()).collect();
        for l in &self.outcomes {
            if !known.contains(&l.entry.as_str()) {
                bad.push(format!("orphan outcome line for entry '{}'", l.entry));
                break;
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }

    /// One row per entry.
    pub fn summary_csv(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from(
            "entry,attacked,successes,success_rate,warm_start_successes,target_hits,penalty_max,penalty_mean,penalty_var,penalty_mean_star,penalty_var_star\n",
        );
        for e in &self.report.entries {
            let m = &e.summary;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&e.key),
                m.attacked,
                m.successes,
                f(m.success_rate),
                m.warm_start_successes,
                m.target_hits,
                f(m.penalty.max),
                f(m.penalty.mean),
                f(m.penalty.var),
                f(m.penalty.mean_star),
                f(m.penalty.var_star),
            ));
        }
        s
    }

    /// One row per outcome line.
    pub fn outcomes_csv(&self) -> String {
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from(
            "entry,cloud_index,success,penalty,iterations_used,samples_used,gradient_steps,first_success_round,warm_start_success,original_class,final_class,target_class,target_hit,confidence,degenerate_steps,a11,a12,a13,a21,a22,a23,a31,a32,a33\n",
        );
        for l in &self.outcomes {
            let o = &l.outcome;
            let a: Vec<String> = o.transform.to_row_major().iter().map(|v| v.to_string()).collect();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&l.entry),
                o.cloud_index,
                o.success,
                o.penalty,
                o.iterations_used,
                o.samples_used,
                o.gradient_steps,
                opt(o.first_success_round),
                o.warm_start_success,
                o.original_class,
                o.final_class,
                opt(o.target_class),
                o.target_hit.map(|b| b.to_string()).unwrap_or_default(),
                o.confidence,
                o.degenerate_steps,
                a.join(","),
            ));
        }
        s
    }
}
