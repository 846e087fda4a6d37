//! Left-point Itô sums and their exact discrete identities.

use crate::ensemble::{Ensemble, Replica};
use crate::error::{Error, Result};
use crate::processes::{AdaptedProcess, Shape};
use crate::stats::{pairwise_sum, Estimate};
use crate::wiener::WienerPath;

fn check_integrand(v: &AdaptedProcess, w: &WienerPath) -> Result<(usize, usize)> {
    v.check_predictable()?;
    if !v.grid().same_as(w.grid()) {
        return Err(Error::GridMismatch("integrand and driver live on different grids".into()));
    }
    match v.shape() {
        Shape::Matrix { rows, cols } if cols == w.dim() => Ok((rows, cols)),
        shape => Err(Error::GridMismatch(format!(
            "integrand of shape {shape:?} cannot be integrated against a {}-dimensional driver",
            w.dim()
        ))),
    }
}

/// `Σ_{j < upto} V(t_j) ΔW_j` in `ℝᵐ`.
pub fn ito_integral(v: &AdaptedProcess, w: &WienerPath, upto: usize) -> Result<Vec<f64>> {
    let (rows, cols) = check_integrand(v, w)?;
    if upto > w.grid().steps() {
        return Err(Error::InvalidArgument(format!(
            "upper node {upto} beyond grid of {} steps",
            w.grid().steps()
        )));
    }
    let mut acc = vec![0.0; rows];
    let mut dw = vec![0.0; cols];
    for j in 0..upto {
        for (c, d) in dw.iter_mut().enumerate() {
            *d = w.increment(j, c);
        }
        let m = v.at(j);
        for (r, a) in acc.iter_mut().enumerate() {
            let row = &m[r * cols..(r + 1) * cols];
            *a += row.iter().zip(&dw).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    Ok(acc)
}

/// The running integral at every node `t_0..t_N`, node-major with `m` entries per node.
pub fn ito_path(v: &AdaptedProcess, w: &WienerPath) -> Result<Vec<f64>> {
    let (rows, cols) = check_integrand(v, w)?;
    let n = w.grid().steps();
    let mut out = vec![0.0; (n + 1) * rows];
    for j in 0..n {
        let m = v.at(j);
        for r in 0..rows {
            let inc: f64 = (0..cols).map(|c| m[r * cols + c] * w.increment(j, c)).sum();
            out[(j + 1) * rows + r] = out[j * rows + r] + inc;
        }
    }
    Ok(out)
}

/// `∫₀ᵀ |V|² dt` by the left-point rule.
pub fn quadratic_variation(v: &AdaptedProcess) -> f64 {
    let terms: Vec<f64> = (0..v.grid().steps())
        .map(|j| v.at(j).iter().map(|x| x * x).sum::<f64>())
        .collect();
    pairwise_sum(&terms) * v.grid().dt()
}

/// Monte Carlo comparison of `E|∫V dW|²` with `E∫|V|² dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsometryCheck {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Mean of the paired difference over its standard error.
    pub z: f64,
}

pub const MIN_ISOMETRY_SAMPLES: usize = 100;

/// Checks the Itô isometry for the integrand built by `integrand` on every
/// replica of `ensemble`, integrating against the driver chosen by `driver`.
pub fn isometry_residual<F, D>(ensemble: &Ensemble, driver: D, integrand: F) -> Result<IsometryCheck>
where
    F: Fn(&Replica, &WienerPath) -> Result<AdaptedProcess> + Sync,
    D: Fn(&Replica) -> Result<WienerPath> + Sync,
{
    if ensemble.samples < MIN_ISOMETRY_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "isometry check needs at least {MIN_ISOMETRY_SAMPLES} samples, got {}",
            ensemble.samples
        )));
    }
    let rows = ensemble.map(|rep| {
        let w = driver(rep)?;
        let v = integrand(rep, &w)?;
        let i = ito_integral(&v, &w, w.grid().steps())?;
        let lhs: f64 = i.iter().map(|x| x * x).sum();
        let rhs = quadratic_variation(&v);
        Ok((lhs, rhs))
    })?;
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    Ok(IsometryCheck {
        lhs: Estimate::from_samples(&lhs),
        rhs: Estimate::from_samples(&rhs),
        z: Estimate::from_samples(&diff).z_score(0.0),
    })
}

/// Relative residual of `Σ W_j ΔW_j = (W_T² − Σ ΔW_j²)/2` on one path.
pub fn discrete_ito_identity_residual(w: &WienerPath) -> f64 {
    let n = w.grid().steps();
    let lhs: Vec<f64> = (0..n).map(|j| w.value(j, 0) * w.increment(j, 0)).collect();
    let sq: Vec<f64> = (0..n).map(|j| w.increment(j, 0).powi(2)).collect();
    let lhs = pairwise_sum(&lhs);
    let qv = pairwise_sum(&sq);
    let rhs = 0.5 * (w.terminal(0).powi(2) - qv);
    let scale = w.terminal(0).powi(2).max(qv).max(f64::MIN_POSITIVE);
    (lhs - rhs).abs() / scale
}
