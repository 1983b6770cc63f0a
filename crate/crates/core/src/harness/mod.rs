//! Experiment drivers, reports and the command line.

pub mod cli;
pub mod config;
mod experiments;
pub mod report;

pub use experiments::{
    run_augmentation_tradeoff, run_ctri_eval, run_transfer_eval, run_tsi_eval, select_attack_set, tradeoff_csv,
    transfer_matrix_csv, AttackSet, BudgetMode, CtriEvalConfig, TradeoffConfig, TradeoffRow, TransferConfig,
    TsiEvalConfig, TsiEvalOutput,
};
pub use report::{AttackSummary, OutcomeLine, PenaltyStats, ReportEntry, RunOutput, RunReport};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::ModelError;
use crate::pointcloud::CloudError;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration or arguments.
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Runtime(format!("{}: {e}", path.display()))
    }

    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Model(ModelError::Config(_)) => 1,
            _ => 2,
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the named stream of a run.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a(name))
}

/// An angle written either as a number of radians or as a multiple of pi
/// such as `"pi"`, `"pi/8"`, `"3pi/4"` or `"-pi/64"`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpec {
    text: String,
    radians: f64,
}

impl AngleSpec {
    pub fn radians(&self) -> f64 {
        self.radians
    }

    pub fn from_radians(r: f64) -> Self {
        Self {
            text: r.to_string(),
            radians: r,
        }
    }
}

impl fmt::Display for AngleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for AngleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().to_ascii_lowercase().replace(' ', "");
        let bad = || format!("cannot read angle '{s}' (use radians or forms like pi/8, 3pi/4)");
        let radians = if let Some(i) = t.find("pi") {
            let (coef, rest) = (&t[..i], &t[i + 2..]);
            let c = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
            };
            let d = match rest {
                "" => 1.0,
                r => r.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
            };
            c * std::f64::consts::PI / d
        } else {
            t.parse::<f64>().map_err(|_| bad())?
        };
        if !radians.is_finite() {
            return Err(bad());
        }
        Ok(Self {
            text: s.trim().to_string(),
            radians,
        })
    }
}

impl Serialize for AngleSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for AngleSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(AngleSpec::from_radians(r)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
