//! Mean-L¹ temporal translation modulus `E∫ₕᵀ |F(t) − F(t−h)| dt` and power-law
//! fits of its decay in `h`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::{loglog_slope, pairwise_sum, Estimate};
use crate::wiener::TimeGrid;

/// Moduli below this are treated as exactly zero.
pub const ZERO_MODULUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationEstimate {
    pub requested_h: f64,
    pub lag_steps: usize,
    /// Lag actually used, `lag_steps · Δt`.
    pub h: f64,
    /// Set when `requested_h` was not a multiple of `Δt` and was snapped down.
    pub snapped: bool,
    pub modulus: Estimate,
}

/// Snaps a lag down to the grid.
pub fn snap_lag(grid: &TimeGrid, h: f64) -> Result<(usize, bool)> {
    if !(h > 0.0 && h < grid.horizon()) {
        return Err(Error::InvalidArgument(format!("lag {h} outside (0, {})", grid.horizon())));
    }
    let ratio = h / grid.dt();
    let steps = (ratio + 1e-9).floor() as usize;
    if steps == 0 {
        return Err(Error::InvalidArgument(format!("lag {h} shorter than one step {}", grid.dt())));
    }
    let snapped = (ratio - steps as f64).abs() > 1e-9;
    Ok((steps, snapped))
}

/// Trapezoid value of `∫ₕᵀ |F(t) − F(t−h)| dt` for one node path.
pub fn path_translation(path: &[f64], dt: f64, lag_steps: usize) -> f64 {
    if lag_steps >= path.len() {
        return 0.0;
    }
    let last = path.len() - 1;
    let terms: Vec<f64> = (lag_steps..=last)
        .map(|j| {
            let w = if j == lag_steps || j == last { 0.5 } else { 1.0 };
            w * (path[j] - path[j - lag_steps]).abs()
        })
        .collect();
    pairwise_sum(&terms) * dt
}

/// Monte Carlo modulus over an ensemble of node paths `F(t_0..t_N)`.
pub fn translation_modulus(paths: &[Vec<f64>], grid: &TimeGrid, h: f64) -> Result<TranslationEstimate> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("translation modulus of an empty ensemble".into()));
    }
    if let Some(p) = paths.iter().find(|p| p.len() != grid.steps() + 1) {
        return Err(Error::GridMismatch(format!(
            "path with {} nodes on a grid of {} steps",
            p.len(),
            grid.steps()
        )));
    }
    let (lag_steps, snapped) = snap_lag(grid, h)?;
    let dt = grid.dt();
    let per_path: Vec<f64> = paths.par_iter().map(|p| path_translation(p, dt, lag_steps)).collect();
    Ok(TranslationEstimate {
        requested_h: h,
        lag_steps,
        h: lag_steps as f64 * dt,
        snapped,
        modulus: Estimate::from_samples(&per_path),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSlope {
    Fitted(f64),
    /// Every modulus vanished; nothing to fit.
    Exact,
}

impl RateSlope {
    /// The slope, with the exact sentinel counting as infinitely fast.
    pub fn value(&self) -> f64 {
        match self {
            RateSlope::Fitted(s) => *s,
            RateSlope::Exact => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRate {
    pub n: u32,
    pub estimates: Vec<TranslationEstimate>,
    pub slope: RateSlope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub lags: Vec<f64>,
    pub families: Vec<FamilyRate>,
    pub max_over_n: Vec<f64>,
    pub min_over_n: Vec<f64>,
}

impl RateFit {
    pub fn min_slope(&self) -> f64 {
        self.families.iter().map(|f| f.slope.value()).fold(f64::INFINITY, f64::min)
    }

    /// Largest `max_n / min_n` ratio over the lags (1 when every family agrees).
    pub fn uniformity_ratio(&self) -> f64 {
        self.max_over_n
            .iter()
            .zip(&self.min_over_n)
            .map(|(hi, lo)| if *hi <= ZERO_MODULUS { 1.0 } else { hi / lo })
            .fold(1.0, f64::max)
    }

    /// Slope of the uniform-in-`n` envelope.
    pub fn envelope_slope(&self) -> RateSlope {
        fit(&self.lags, &self.max_over_n)
    }
}

fn fit(lags: &[f64], moduli: &[f64]) -> RateSlope {
    if moduli.iter().all(|m| *m <= ZERO_MODULUS) {
        return RateSlope::Exact;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = lags.iter().zip(moduli).filter(|(_, m)| **m > 0.0).map(|(h, m)| (*h, *m)).unzip();
    if xs.len() < 2 {
        return RateSlope::Exact;
    }
    RateSlope::Fitted(loglog_slope(&xs, &ys))
}

/// Minimum number of lags a rate fit accepts.
pub const MIN_LAGS: usize = 4;

/// Fits `log modulus` against `log h` for every family and records the
/// per-lag spread over `n`.
pub fn fit_translation_rate(families: &[(u32, Vec<Vec<f64>>)], grid: &TimeGrid, lags: &[f64]) -> Result<RateFit> {
    if lags.len() < MIN_LAGS {
        return Err(Error::InvalidArgument(format!("rate fit needs at least {MIN_LAGS} lags, got {}", lags.len())));
    }
    if families.is_empty() {
        return Err(Error::InvalidArgument("rate fit needs at least one family".into()));
    }
    let mut effective = Vec::with_capacity(lags.len());
    for &h in lags {
        let (steps, _) = snap_lag(grid, h)?;
        effective.push(steps as f64 * grid.dt());
    }
    let lo = effective.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = effective.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 8.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!("lags span {:.2} octaves, need at least 3", (hi / lo).log2())));
    }
    let mut out = Vec::with_capacity(families.len());
    for (n, paths) in families {
        let estimates = lags.iter().map(|&h| translation_modulus(paths, grid, h)).collect::<Result<Vec<_>>>()?;
        let moduli: Vec<f64> = estimates.iter().map(|e| e.modulus.mean).collect();
        out.push(FamilyRate { n: *n, slope: fit(&effective, &moduli), estimates });
    }
    let per_lag = |k: usize| out.iter().map(move |f: &FamilyRate| f.estimates[k].modulus.mean);
    let max_over_n = (0..lags.len()).map(|k| per_lag(k).fold(f64::NEG_INFINITY, f64::max)).collect();
    let min_over_n = (0..lags.len()).map(|k| per_lag(k).fold(f64::INFINITY, f64::min)).collect();
    Ok(RateFit { lags: effective, families: out, max_over_n, min_over_n })
}

/// The geometric ladder `T·2^{-k}` for `k` from `fine` down to `coarse`.
pub fn dyadic_lags(horizon: f64, fine: i32, coarse: i32) -> Vec<f64> {
    (coarse..=fine).rev().map(|k| horizon * 2f64.powi(-k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use crate::ito::ito_path;
    use crate::processes::{AdaptedProcess, Reads};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn deterministic(g: &TimeGrid, f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
        vec![g.times().into_iter().map(f).collect()]
    }

    #[test]
    fn constant_path_has_zero_modulus() {
        let g = grid(256);
        let paths = deterministic(&g, |_| 3.5);
        let e = translation_modulus(&paths, &g, 1.0 / 16.0).unwrap();
        assert_eq!(e.modulus.mean, 0.0);
        let fit = fit_translation_rate(&[(1, paths)], &g, &dyadic_lags(1.0, 8, 3)).unwrap();
        assert_eq!(fit.families[0].slope, RateSlope::Exact);
    }

    #[test]
    fn linear_path_closed_form() {
        let g = grid(1024);
        let paths = deterministic(&g, |t| t);
        for k in 2..9 {
            let h = 2f64.powi(-k);
            let e = translation_modulus(&paths, &g, h).unwrap();
            assert!(!e.snapped);
            assert!((e.modulus.mean - h * (1.0 - h)).abs() < 1e-10);
        }
        // h(T−h) bends away from h once h/T is a few percent, so fit on short lags
        let fit = fit_translation_rate(&[(1, paths)], &g, &dyadic_lags(1.0, 10, 6)).unwrap();
        let s = fit.families[0].slope.value();
        assert!((s - 1.0).abs() < 0.02, "slope {s}");
    }

    #[test]
    fn lags_snap_down_with_flag() {
        let g = grid(100);
        let e = translation_modulus(&deterministic(&g, |t| t), &g, 0.0255).unwrap();
        assert_eq!(e.lag_steps, 2);
        assert!(e.snapped);
        assert!(translation_modulus(&deterministic(&g, |t| t), &g, 0.001).is_err());
        assert!(translation_modulus(&deterministic(&g, |t| t), &g, 1.0).is_err());
    }

    #[test]
    fn fit_rejects_short_ladders() {
        let g = grid(1024);
        let p = deterministic(&g, |t| t);
        assert!(fit_translation_rate(&[(1, p.clone())], &g, &[0.01, 0.02, 0.04]).is_err());
        assert!(fit_translation_rate(&[(1, p)], &g, &[1.0 / 64.0, 1.0 / 32.0, 1.0 / 24.0, 1.0 / 16.0]).is_err());
    }

    #[test]
    fn oscillating_path_stays_order_one() {
        let g = grid(8192);
        for n in [4u32, 16, 64] {
            let paths = deterministic(&g, |t| (TAU * n as f64 * t).sin());
            let h = 1.0 / 32.0 + 1.0 / 256.0;
            let e = translation_modulus(&paths, &g, h).unwrap();
            // sin(a) − sin(a − b) = 2 cos(a − b/2) sin(b/2)
            let nf = n as f64;
            let m = 200_000;
            let oracle: f64 = (0..m)
                .map(|i| {
                    let t = e.h + (1.0 - e.h) * (i as f64 + 0.5) / m as f64;
                    2.0 * (TAU * nf * (t - 0.5 * e.h)).cos().abs() * (PI * nf * e.h).sin().abs()
                })
                .sum::<f64>()
                * (1.0 - e.h)
                / m as f64;
            assert!((e.modulus.mean - oracle).abs() < 1e-3, "n={n}: {} vs {oracle}", e.modulus.mean);
            // whole-period average of |cos| is 2/π
            let rough = (4.0 / PI) * (PI * nf * e.h).sin().abs() * (1.0 - e.h);
            assert!((e.modulus.mean - rough).abs() < 0.1);
            if n >= 16 {
                assert!(e.modulus.mean > 0.3);
            }
        }
    }

    #[test]
    fn ito_integral_paths_have_half_rate() {
        let g = grid(2048);
        let ens = Ensemble::new(g, 1, 77, 1000).unwrap();
        let amp = |t: f64| 1.0 + 0.5 * (TAU * t).sin();
        let paths = ens
            .map(|rep| {
                let v = AdaptedProcess::scalar(g, Reads::Initial, |_, t| amp(t))?;
                ito_path(&v, &rep.w)
            })
            .unwrap();
        let lags = dyadic_lags(1.0, 8, 3);
        let fit = fit_translation_rate(&[(1, paths.clone())], &g, &lags).unwrap();
        let s = fit.families[0].slope.value();
        assert!((s - 0.5).abs() < 0.1, "slope {s}");
        // Gaussian increments: E|ΔF| = √(2/π)·(∫ g²)^{1/2}
        let h = 1.0 / 16.0;
        let e = translation_modulus(&paths, &g, h).unwrap();
        let m = 4000;
        let mut oracle = 0.0;
        for i in 0..m {
            let t = h + (1.0 - h) * (i as f64 + 0.5) / m as f64;
            let k = 200;
            let var: f64 = (0..k).map(|q| amp(t - h + h * (q as f64 + 0.5) / k as f64).powi(2)).sum::<f64>() * h / k as f64;
            oracle += (2.0 / PI).sqrt() * var.sqrt() * (1.0 - h) / m as f64;
        }
        assert!((e.modulus.mean - oracle).abs() < 3.0 * e.modulus.stderr + 0.01 * oracle, "{} vs {oracle}", e.modulus.mean);
    }

    #[test]
    fn weak_in_omega_oscillation_costs_nothing_in_time() {
        let g = grid(1024);
        let ens = Ensemble::new(g, 1, 3, 2000).unwrap();
        let shape = |t: f64| (TAU * t).sin() + t * t;
        let families: Vec<(u32, Vec<Vec<f64>>)> = [1u32, 4, 16, 64]
            .iter()
            .map(|&n| {
                let paths = ens
                    .map(|rep| {
                        let a = (TAU * n as f64 * rep.omega0).sin();
                        Ok(g.times().into_iter().map(|t| a * shape(t)).collect())
                    })
                    .unwrap();
                (n, paths)
            })
            .collect();
        let fit = fit_translation_rate(&families, &g, &dyadic_lags(1.0, 8, 3)).unwrap();
        assert!(fit.min_slope() >= 0.9, "{}", fit.min_slope());
        let det = deterministic(&g, shape);
        for (k, h) in fit.lags.iter().enumerate() {
            let base = translation_modulus(&det, &g, *h).unwrap().modulus.mean;
            assert!(fit.max_over_n[k] <= 1.2 * (2.0 / PI) * base);
        }
        assert!(fit.uniformity_ratio() < 1.5);
    }

    proptest! {
        #[test]
        fn modulus_is_subadditive(seed in 0u64..500, k in 1usize..40) {
            let g = grid(256);
            let ens = Ensemble::new(g, 1, seed, 4).unwrap();
            let paths: Vec<Vec<f64>> = ens.map(|rep| Ok(rep.w.component(0).iter().map(|x| x.sin() + x).collect())).unwrap();
            let h = k as f64 * g.dt();
            let one = translation_modulus(&paths, &g, h).unwrap().modulus.mean;
            let two = translation_modulus(&paths, &g, 2.0 * h).unwrap().modulus.mean;
            let sup = paths.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(two <= 2.0 * one + 2.0 * g.dt() * sup);
        }
    }
}
