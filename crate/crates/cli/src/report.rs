//! Run report schema and persistence.
//!
//! Reports are JSON with a top-level `schema_version`; field order is fixed
//! by the struct, so two runs of the same seeded config produce
//! byte-identical files once wall-clock fields are zeroed (see
//! [`RunReport::zero_timing`]). Writes are atomic: temp file then rename.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fedfreeze_core::fed::{CaseMetrics, RoundRecord};
use fedfreeze_core::metrics::LedgerTotals;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub subject_id: u32,
    pub centre: String,
    pub mae: f64,
    /// `None` encodes the +infinity PSNR sentinel of identical images.
    pub psnr: Option<f64>,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: String,
    pub seed: u64,
    pub model_preset: String,
    pub freezing_mode: String,
    pub tau: Option<f64>,
    pub patience: Option<u32>,
    pub freeze_round: Option<u32>,
    pub rounds: Vec<RoundRecord>,
    pub eval_cases: Vec<EvalCase>,
    pub totals: LedgerTotals,
    pub wall_ms: f64,
    pub config: ExperimentConfig,
}

impl RunReport {
    /// Zeroes every measured wall-clock field, leaving the deterministic
    /// payload. Reproducibility checks compare reports after this.
    pub fn zero_timing(&mut self) {
        self.wall_ms = 0.0;
        self.totals.wall_ms = 0.0;
        for round in &mut self.rounds {
            for client in &mut round.clients {
                client.ledger.wall_ms = 0.0;
            }
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::Runtime(format!("serializing report: {e}")))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read(path).map_err(|e| {
            CliError::Runtime(format!("cannot read report `{}`: {e}", path.display()))
        })?;
        let report: RunReport = serde_json::from_slice(&text).map_err(|e| {
            CliError::Runtime(format!("report `{}` is not a valid run report: {e}", path.display()))
        })?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(CliError::Runtime(format!(
                "report `{}` has schema_version {}, expected {SCHEMA_VERSION}",
                path.display(),
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Per-case MAE values of the held-out evaluation.
    pub fn eval_mae(&self) -> Vec<f64> {
        self.eval_cases.iter().map(|c| c.mae).collect()
    }
}

/// Writes bytes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = path.to_path_buf();
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Runtime(format!("`{}` has no file name", path.display())))?;
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("creating `{}`: {e}", dir.display())))?;
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::Runtime(format!("writing `{}`: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("renaming into `{}`: {e}", path.display())))?;
    Ok(())
}

/// Fixed-column metrics CSV: one row per evaluation case.
pub fn metrics_csv(run_id: &str, seed: u64, cases: &[EvalCase]) -> String {
    let mut out = String::from("run_id,seed,centre,subject_id,mae,psnr,ssim\n");
    for c in cases {
        let psnr = match c.psnr {
            Some(v) => format!("{v}"),
            None => "inf".to_string(),
        };
        out.push_str(&format!(
            "{run_id},{seed},{},{},{},{psnr},{}\n",
            c.centre, c.subject_id, c.mae, c.ssim
        ));
    }
    out
}

pub fn eval_cases_from(centre: &str, cases: &[CaseMetrics]) -> Vec<EvalCase> {
    cases
        .iter()
        .map(|c| EvalCase {
            subject_id: c.subject_id,
            centre: centre.to_string(),
            mae: c.metrics.mae,
            psnr: c.metrics.psnr,
            ssim: c.metrics.ssim,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_columns_and_inf_sentinel() {
        let cases = vec![
            EvalCase {
                subject_id: 0,
                centre: "centre_e".into(),
                mae: 0.125,
                psnr: Some(18.0625),
                ssim: 0.5,
            },
            EvalCase {
                subject_id: 1,
                centre: "centre_e".into(),
                mae: 0.0,
                psnr: None,
                ssim: 1.0,
            },
        ];
        let csv = metrics_csv("demo_adaptive_rep00", 42, &cases);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "run_id,seed,centre,subject_id,mae,psnr,ssim");
        assert_eq!(lines[1], "demo_adaptive_rep00,42,centre_e,0,0.125,18.0625,0.5");
        assert_eq!(lines[2], "demo_adaptive_rep00,42,centre_e,1,0,inf,1");
    }

    #[test]
    fn write_atomic_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("report.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert!(!dir.path().join("sub").join(".report.json.tmp").exists());
    }
}
