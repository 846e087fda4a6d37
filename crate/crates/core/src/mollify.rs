//! One-sided temporal mollification `R_ρ f(t) = ∫₀ᵗ R_ρ(t−s) f(s) ds`, its
//! reflection `R̃_ρ`, and the derivative operators.
//!
//! All four operators use trapezoid weights on the node grid and the inner
//! product [`inner`] uses trapezoid weights on `[0, T]`. With those choices
//! `⟨R_ρ f, g⟩ = ⟨f, R̃_ρ g⟩` and `⟨∂R_ρ f, g⟩ = −⟨f, ∂R̃_ρ g⟩` hold exactly on
//! the grid, up to rounding.
//!
//! The base kernel is the bump `exp(−1/(u(1−u)))` on `(0, 1)`. It vanishes with
//! all derivatives at both ends, so the derivative identity has no boundary
//! terms. The sampled kernel is renormalised to unit discrete mass.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::processes::AdaptedProcess;
use crate::stats::pairwise_sum;
use crate::wiener::TimeGrid;

/// Kernels narrower than this many grid steps are rejected.
pub const MIN_STEPS_PER_WIDTH: f64 = 4.0;

fn bump(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        (-1.0 / (u * (1.0 - u))).exp()
    }
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        // trapezoid is spectrally accurate for a function flat at both ends
        let n = 1 << 14;
        let h = 1.0 / n as f64;
        let vals: Vec<f64> = (1..n).map(|i| bump(i as f64 * h)).collect();
        pairwise_sum(&vals) * h
    })
}

/// Unit-mass base kernel `R(u)`.
pub fn base_kernel(u: f64) -> f64 {
    bump(u) / bump_mass()
}

/// `R'(u)`.
pub fn base_kernel_derivative(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let q = u * (1.0 - u);
    base_kernel(u) * (1.0 - 2.0 * u) / (q * q)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push(w * f(a + i as f64 * h));
    }
    pairwise_sum(&terms) * h / 3.0
}

/// Scaled kernel `R_ρ(t) = ρ⁻¹ R(t/ρ)` tabulated on a grid of spacing `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    rho: f64,
    dt: f64,
    // k[m] ≈ R_ρ(m dt) (scaled to unit discrete mass), k[0] = 0
    table: Vec<f64>,
    dtable: Vec<f64>,
    normalisation: f64,
}

impl MollifierKernel {
    pub fn new(rho: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel needs positive width and step (ρ = {rho}, Δt = {dt})")));
        }
        if rho < MIN_STEPS_PER_WIDTH * dt * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "mollifier width ρ = {rho} unresolved: need ρ ≥ {MIN_STEPS_PER_WIDTH}Δt = {}",
                MIN_STEPS_PER_WIDTH * dt
            )));
        }
        let last = (rho / dt).ceil() as usize;
        let raw: Vec<f64> = (0..=last).map(|m| base_kernel(m as f64 * dt / rho) / rho).collect();
        let mass = pairwise_sum(&raw) * dt;
        let normalisation = 1.0 / mass;
        let table = raw.iter().map(|k| k * normalisation).collect();
        let dtable = (0..=last)
            .map(|m| normalisation * base_kernel_derivative(m as f64 * dt / rho) / (rho * rho))
            .collect();
        Ok(MollifierKernel { rho, dt, table, dtable, normalisation })
    }

    pub fn for_grid(rho: f64, grid: &TimeGrid) -> Result<Self> {
        Self::new(rho, grid.dt())
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Grid-renormalised `R_ρ(t)` (zero outside `(0, ρ)`).
    pub fn eval(&self, t: f64) -> f64 {
        self.normalisation * base_kernel(t / self.rho) / self.rho
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        self.normalisation * base_kernel_derivative(t / self.rho) / (self.rho * self.rho)
    }

    /// `∫₀^δ R_ρ(t) dt` of the exact (continuous, unit-mass) kernel.
    pub fn mass_up_to(&self, delta: f64) -> f64 {
        let upper = (delta / self.rho).clamp(0.0, 1.0);
        simpson(base_kernel, 0.0, upper, 20_000)
    }

    /// `‖∂_t R_ρ‖_{L¹}` on the grid.
    pub fn derivative_l1(&self) -> f64 {
        let abs: Vec<f64> = self.dtable.iter().map(|x| x.abs()).collect();
        pairwise_sum(&abs) * self.dt
    }

    fn forward(&self, f: &[f64], table: &[f64]) -> Vec<f64> {
        let n = f.len();
        let m = table.len();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let lo = (i + 1).saturating_sub(m);
            let mut s = 0.0;
            for j in lo..=i {
                let w = if j == 0 { 0.5 } else { 1.0 };
                s += w * table[i - j] * f[j];
            }
            *o = s * self.dt;
        }
        out
    }

    fn backward(&self, g: &[f64], table: &[f64]) -> Vec<f64> {
        let n = g.len();
        let m = table.len();
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            let hi = (j + m).min(n);
            let mut s = 0.0;
            for i in j..hi {
                let w = if i + 1 == n { 0.5 } else { 1.0 };
                s += w * table[i - j] * g[i];
            }
            *o = s * self.dt;
        }
        out
    }

    /// `R_ρ f` on the nodes of `f`.
    pub fn mollify(&self, f: &[f64]) -> Vec<f64> {
        self.forward(f, &self.table)
    }

    /// `R̃_ρ g(s) = ∫ₛᵀ R_ρ(t−s) g(t) dt`.
    pub fn adjoint_mollify(&self, g: &[f64]) -> Vec<f64> {
        self.backward(g, &self.table)
    }

    /// `∂_t R_ρ f = ∫₀ᵗ R_ρ'(t−s) f(s) ds`.
    pub fn mollify_derivative(&self, f: &[f64]) -> Vec<f64> {
        self.forward(f, &self.dtable)
    }

    /// `∂_s R̃_ρ g(s) = −∫ₛᵀ R_ρ'(t−s) g(t) dt`.
    pub fn adjoint_mollify_derivative(&self, g: &[f64]) -> Vec<f64> {
        let mut out = self.backward(g, &self.dtable);
        out.iter_mut().for_each(|x| *x = -*x);
        out
    }

    /// Mollifies every entry of a process. The operator is causal, so the
    /// result is predictable whenever the input is.
    pub fn mollify_process(&self, v: &AdaptedProcess) -> Result<AdaptedProcess> {
        if (v.grid().dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::GridMismatch(format!(
                "kernel tabulated for Δt = {}, process has Δt = {}",
                self.dt,
                v.grid().dt()
            )));
        }
        v.causal_map(|s| self.mollify(s))
    }
}

fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

/// Trapezoid inner product on the nodes.
pub fn inner(f: &[f64], g: &[f64], dt: f64) -> f64 {
    let n = f.len();
    let terms: Vec<f64> = f.iter().zip(g).enumerate().map(|(i, (a, b))| trapezoid_weight(i, n) * a * b).collect();
    pairwise_sum(&terms) * dt
}

/// Trapezoid `L^r` norm on the nodes.
pub fn lr_norm(f: &[f64], dt: f64, r: f64) -> f64 {
    let n = f.len();
    let terms: Vec<f64> = f.iter().enumerate().map(|(i, a)| trapezoid_weight(i, n) * a.abs().powf(r)).collect();
    (pairwise_sum(&terms) * dt).powf(1.0 / r)
}
