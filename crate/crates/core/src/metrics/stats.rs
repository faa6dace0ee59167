//! Welch's unequal-variance two-sample t-test, two-sided p-value via the
//! Student-t CDF with Welch-Satterthwaite degrees of freedom.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

fn mean_and_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_ttest(sample_a: &[f64], sample_b: &[f64]) -> Result<TTestResult> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::Contract(
            "each sample needs at least two observations".into(),
        ));
    }
    let (ma, va) = mean_and_var(sample_a);
    let (mb, vb) = mean_and_var(sample_b);
    let na = sample_a.len() as f64;
    let nb = sample_b.len() as f64;

    if va == 0.0 && vb == 0.0 {
        // degenerate: no variance anywhere, the means decide outright
        return Ok(TTestResult {
            t_statistic: if ma == mb { 0.0 } else { f64::INFINITY },
            degrees_of_freedom: na + nb - 2.0,
            p_value: if ma == mb { 1.0 } else { 0.0 },
        });
    }

    let se_a = va / na;
    let se_b = vb / nb;
    let se = (se_a + se_b).sqrt();
    let t = (ma - mb) / se;
    let dof = (se_a + se_b) * (se_a + se_b)
        / (se_a * se_a / (na - 1.0) + se_b * se_b / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Contract(format!("t distribution: {e}")))?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: dof,
        p_value,
    })
}
