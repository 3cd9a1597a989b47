//! Result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::conditions::ConditionReport;
use crate::error::Result;
use crate::scenarios::{lambda_dim, MonteCarloReport, RepRecord};

/// 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub start_unix_secs: f64,
    pub end_unix_secs: Option<f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn estimates_csv(records: &[RepRecord], k: usize) -> String {
    let mut s = String::from("rep,psi_hat");
    for j in 1..=k {
        s.push_str(&format!(",lambda_hat_{j}"));
    }
    s.push_str(",converged,sandwich_se\n");
    let mut sorted: Vec<&RepRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.rep);
    for r in sorted {
        s.push_str(&format!("{},{}", r.rep, num(r.psi_hat)));
        for j in 0..k {
            s.push_str(&format!(",{}", num(r.lambda_hat.get(j).copied().unwrap_or(f64::NAN))));
        }
        s.push_str(&format!(",{},{}\n", r.converged, num(r.sandwich_se)));
    }
    s
}

pub fn conditions_csv(reports: &[ConditionReport]) -> String {
    let mut s = String::from("condition,lambda_point,residual,error_estimate,verdict\n");
    for r in reports {
        for res in &r.residuals {
            let point = r.grid.get(res.point).map(|p| p.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"));
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.condition.name(),
                point.unwrap_or_default(),
                num(res.value),
                num(res.error),
                r.verdict.name()
            ));
        }
    }
    s
}

fn float(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn summary_json(report: &MonteCarloReport) -> Value {
    let s = &report.summary;
    json!({
        "scenario": s.scenario,
        "n": s.n,
        "reps": s.reps,
        "seed": s.seed,
        "mean_psi_hat": float(s.mean_psi_hat),
        "bias": float(s.bias),
        "sd": float(s.sd),
        "mean_sandwich_se": float(s.mean_sandwich_se),
        "verdicts": report.verdicts(),
        "degraded": s.degraded,
    })
}

/// Writes the simulation result files and returns their paths.
pub fn write_simulation(dir: &Path, report: &MonteCarloReport) -> Result<Vec<PathBuf>> {
    let est = dir.join("estimates.csv");
    fs::write(&est, estimates_csv(&report.records, lambda_dim(&report.config)))?;
    let sum = dir.join("summary.json");
    fs::write(&sum, serde_json::to_string_pretty(&summary_json(report)).expect("summary serializes") + "\n")?;
    let cond = dir.join("conditions.csv");
    fs::write(&cond, conditions_csv(&report.conditions))?;
    Ok(vec![est, sum, cond])
}
