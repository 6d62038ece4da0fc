use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::Result;

/// Mean and sample standard deviation over repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / n };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std, values }
    }
}

/// Measurements of one transformation in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub transformation: String,
    pub activity_f1: f64,
    pub activity_accuracy: f64,
    pub identity_accuracy: f64,
    pub identity_f1: f64,
    pub rank_mean: f64,
    pub rank_variance: f64,
    /// Attacker trained on transformed data, when that stress test ran.
    #[serde(default)]
    pub identity_accuracy_retrained: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub transformation: String,
    pub activity_f1: Stat,
    pub activity_accuracy: Stat,
    pub identity_accuracy: Stat,
    pub identity_f1: Stat,
    pub rank_mean: Stat,
    /// Variance of ranks over users, per repetition.
    pub rank_variance_users: Stat,
    /// Variance of the mean rank over repetitions.
    pub rank_variance_repetitions: f64,
    #[serde(default)]
    pub identity_accuracy_retrained: Option<Stat>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub repetitions: usize,
    pub f1_averaging: String,
    pub data_source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    /// Aggregates per-repetition results; rows keep first-seen order.
    pub fn from_repetitions(metadata: ReportMetadata, results: &[RepetitionResult]) -> Self {
        let mut order: Vec<&str> = Vec::new();
        for r in results {
            if !order.contains(&r.transformation.as_str()) {
                order.push(&r.transformation);
            }
        }
        let rows = order
            .iter()
            .map(|name| {
                let rs: Vec<&RepetitionResult> = results.iter().filter(|r| r.transformation == *name).collect();
                let col = |f: fn(&RepetitionResult) -> f64| Stat::new(rs.iter().map(|r| f(r)).collect());
                let rank_mean = col(|r| r.rank_mean);
                let retrained: Option<Vec<f64>> = rs.iter().map(|r| r.identity_accuracy_retrained).collect();
                ReportRow {
                    transformation: name.to_string(),
                    activity_f1: col(|r| r.activity_f1),
                    activity_accuracy: col(|r| r.activity_accuracy),
                    identity_accuracy: col(|r| r.identity_accuracy),
                    identity_f1: col(|r| r.identity_f1),
                    rank_variance_users: col(|r| r.rank_variance),
                    rank_variance_repetitions: rank_mean.std.powi(2),
                    rank_mean,
                    identity_accuracy_retrained: retrained.filter(|v| !v.is_empty()).map(Stat::new),
                }
            })
            .collect();
        EvaluationReport { metadata, rows }
    }

    pub fn row(&self, transformation: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.transformation == transformation)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fixed-width table: activity F1/accuracy, identity accuracy/F1 (in
    /// percent) and DTW rank mean/variance per transformation.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let m = &self.metadata;
        let _ = writeln!(
            s,
            "seed {}  config {}  repetitions {}  F1 averaging: {}  data: {}",
            m.seed, m.config_hash, m.repetitions, m.f1_averaging, m.data_source
        );
        let _ = writeln!(
            s,
            "{:<14} | {:>15} {:>15} | {:>15} {:>15} | {:>11} {:>11}",
            "transformation", "ACT mean F1", "ACT mean ACC", "ID mean ACC", "ID mean F1", "mean Rank", "var Rank"
        );
        let _ = writeln!(s, "{}", "-".repeat(113));
        let pct = |st: &Stat| format!("{:.2} ± {:.2}", 100.0 * st.mean, 100.0 * st.std);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14} | {:>15} {:>15} | {:>15} {:>15} | {:>11.2} {:>11.2}",
                r.transformation,
                pct(&r.activity_f1),
                pct(&r.activity_accuracy),
                pct(&r.identity_accuracy),
                pct(&r.identity_f1),
                r.rank_mean.mean,
                r.rank_variance_users.mean,
            );
        }
        s
    }
}
