//! Vanishing-limit study over a decreasing schedule of `(eps, kappa, eta, gamma)`.

use alloc::format;
use alloc::vec::Vec;

use super::ode::{solve_param_ode, OdeOptions};
use super::TestFunctionSpec;
use crate::error::{Error, Result};
use crate::math::simpson;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub eps: f64,
    pub kappa: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Boundary values per ray; `None` means `w + eps^2` on every ray.
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub eps: f64,
    pub kappa: f64,
    pub eta: f64,
    pub gamma: f64,
    pub slope: f64,
    /// `max_{i, l} |(2/eps^2) int int psi_i - w|`.
    pub deviation: f64,
    pub max_residual: f64,
}

/// `|(2/eps^2) int_0^eps int_0^u psi - w|` for uniform samples of `psi` on `[0, eps]`.
pub fn mean_deviation(samples: &[f64], eps: f64, w: f64) -> f64 {
    let n = samples.len() - 1;
    let h = eps / n as f64;
    let f: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(j, v)| (eps - j as f64 * h) * v)
        .collect();
    (2.0 / (eps * eps) * simpson(&f, h) - w).abs()
}

/// Columns must be nonincreasing (magnitudes for `eta`, `gamma`) and each row strictly
/// smaller than the previous one in at least one column.
pub fn validate_schedule(rows: &[ScheduleRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidSchedule("schedule is empty".into()));
    }
    let key = |r: &ScheduleRow| [r.eps, r.kappa, r.eta.abs(), r.gamma.abs()];
    for r in rows {
        if !(r.eps > 0.0 && r.kappa > 0.0) || !key(r).iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "row with eps = {}, kappa = {} is not admissible",
                r.eps, r.kappa
            )));
        }
    }
    for w in rows.windows(2) {
        let (a, b) = (key(&w[0]), key(&w[1]));
        if a.iter().zip(&b).any(|(x, y)| y > x) || a == b {
            return Err(Error::InvalidSchedule(format!(
                "row {b:?} does not decrease from {a:?}"
            )));
        }
    }
    Ok(())
}

/// Solves each row with the absorbing slope and reports the mean deviation from `w`.
pub fn vanishing_limit_study(
    base: &TestFunctionSpec,
    rows: &[ScheduleRow],
    opts: &OdeOptions,
) -> Result<Vec<StudyRow>> {
    validate_schedule(rows)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let z = match &row.z {
            Some(z) if z.len() == base.rays() => z.clone(),
            Some(z) => {
                return Err(Error::InvalidSpec(format!(
                    "schedule row has {} boundary values, expected {}",
                    z.len(),
                    base.rays()
                )))
            }
            None => alloc::vec![base.w + row.eps * row.eps; base.rays()],
        };
        let spec = TestFunctionSpec {
            eps: row.eps,
            kappa: row.kappa,
            eta: row.eta,
            gamma: row.gamma,
            z,
            ..base.clone()
        }
        .with_absorbing_slope()?;
        let tf = solve_param_ode(&spec, opts)?;
        out.push(StudyRow {
            eps: row.eps,
            kappa: row.kappa,
            eta: row.eta,
            gamma: row.gamma,
            slope: spec.slope,
            deviation: tf.vanishing_deviation(),
            max_residual: tf.max_residual,
        });
    }
    Ok(out)
}
