//! Stochastic scalar conservation law `du + ∂ₓF(u)dt = εΔu dt + σ(u)dW` on the
//! unit torus and its kinetic formulation in terms of `χ(t,x,ξ) = 1{ξ < u}`.
//!
//! The scheme is Engquist–Osher for the flux, a centred second difference for
//! the viscosity and Euler–Maruyama for the noise. The kinetic measure collects
//! the cell entropy defects of the flux step, `−½e(κ)` for the Kružkov entropies
//! `|u − κ|` at the ξ-bin centres, plus the viscous dissipation `ε|∂ₓu|²`
//! deposited at `ξ = u`.
//!
//! With that measure and a test function `φ(x,ξ) = a(x)c(ξ)`, the pairing
//! `⟨χ,φ⟩` evolves as
//! `d⟨χ,φ⟩ = [⟨χ,F'∂ₓφ⟩ + ε⟨χ,∂ₓ²φ⟩ + ½⟨χ,∂_ξ(σ²∂_ξφ)⟩ − ⟨m,∂_ξφ⟩]dt + ⟨χ,∂_ξ(σφ)⟩dW`,
//! and [`kinetic_residual`] measures how far the discrete solution is from it.

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::ito::ito_integral;
use crate::lab::weak_columns;
use crate::processes::{AdaptedProcess, GapEstimate, Shape, TestVariable, TorusGrid};
use crate::stats::{pairwise_sum, Estimate};
use crate::translation::{fit_translation_rate, RateFit};
use crate::transport::{FieldPath, Profile, CFL_LIMIT};
use crate::wiener::{Coupling, TimeGrid, WienerPath};

/// `F(u) = c₁u + c₂u²/2 + c₃u³/3 + c_s sin u`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Flux {
    pub linear: f64,
    pub quadratic: f64,
    pub cubic: f64,
    pub wiggle: f64,
}

impl Flux {
    pub fn burgers() -> Self {
        Flux { quadratic: 1.0, ..Flux::default() }
    }

    pub fn linear(c: f64) -> Self {
        Flux { linear: c, ..Flux::default() }
    }

    pub fn cubic() -> Self {
        Flux { cubic: 1.0, ..Flux::default() }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let poly = u * (self.linear + u * (0.5 * self.quadratic + u * self.cubic / 3.0));
        if self.wiggle == 0.0 {
            poly
        } else {
            poly + self.wiggle * u.sin()
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        let poly = self.linear + u * (self.quadratic + u * self.cubic);
        if self.wiggle == 0.0 {
            poly
        } else {
            poly + self.wiggle * u.cos()
        }
    }

    pub fn plus_scaled(&self, s: f64, o: &Flux) -> Flux {
        Flux {
            linear: self.linear + s * o.linear,
            quadratic: self.quadratic + s * o.quadratic,
            cubic: self.cubic + s * o.cubic,
            wiggle: self.wiggle + s * o.wiggle,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Flux::default()
    }

    /// `sup |F'|` on `[lo, hi]` by sampling.
    pub fn max_speed(&self, lo: f64, hi: f64) -> f64 {
        let m = 2048;
        (0..=m).map(|k| self.derivative(lo + (hi - lo) * k as f64 / m as f64).abs()).fold(0.0, f64::max)
    }
}

/// `σ(ξ) = constant + a cos ξ + b sin ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseCoef {
    pub constant: f64,
    pub cos_amp: f64,
    pub sin_amp: f64,
}

impl NoiseCoef {
    pub fn constant(c: f64) -> Self {
        NoiseCoef { constant: c, ..NoiseCoef::default() }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let mut s = self.constant;
        if self.cos_amp != 0.0 {
            s += self.cos_amp * xi.cos();
        }
        if self.sin_amp != 0.0 {
            s += self.sin_amp * xi.sin();
        }
        s
    }

    pub fn derivative(&self, xi: f64) -> f64 {
        -self.cos_amp * xi.sin() + self.sin_amp * xi.cos()
    }

    pub fn sup_bound(&self) -> f64 {
        self.constant.abs() + self.cos_amp.abs() + self.sin_amp.abs()
    }

    pub fn plus_scaled(&self, s: f64, o: &NoiseCoef) -> NoiseCoef {
        NoiseCoef {
            constant: self.constant + s * o.constant,
            cos_amp: self.cos_amp + s * o.cos_amp,
            sin_amp: self.sin_amp + s * o.sin_amp,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_bound() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClawInitial {
    /// `left` on `[0, split)`, `right` on `[split, 1)`, periodically extended.
    Riemann { left: f64, right: f64, split: f64 },
    Smooth(Profile),
}

impl ClawInitial {
    /// Exact cell averages.
    pub fn cell_averages(&self, torus: &TorusGrid) -> Vec<f64> {
        match self {
            ClawInitial::Smooth(p) => p.sample(torus),
            ClawInitial::Riemann { left, right, split } => (0..torus.cells())
                .map(|i| {
                    let a = i as f64 * torus.dx();
                    let b = a + torus.dx();
                    let in_left = (b.min(*split) - a).clamp(0.0, torus.dx());
                    (in_left * left + (torus.dx() - in_left) * right) / torus.dx()
                })
                .collect(),
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            ClawInitial::Riemann { left, right, .. } => (left.min(*right), left.max(*right)),
            ClawInitial::Smooth(p) => (p.mean - (p.sup_bound() - p.mean.abs()), p.mean + (p.sup_bound() - p.mean.abs())),
        }
    }
}

/// Uniform bins on `[lo, hi]` in the kinetic variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiWindow {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl XiWindow {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::Config(format!("bad ξ-window [{lo}, {hi}] with {bins} bins")));
        }
        Ok(XiWindow { lo, hi, bins })
    }

    /// Window around the initial range `[a, b]`: a margin of twice the range
    /// width plus four noise standard deviations on each side.
    pub fn around(range: (f64, f64), noise_sup: f64, horizon: f64, bins: usize) -> Result<Self> {
        let width = (range.1 - range.0).max(1e-3);
        let margin = 2.0 * width + 4.0 * noise_sup * horizon.sqrt();
        Self::new(range.0 - margin, range.1 + margin, bins)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn center(&self, l: usize) -> f64 {
        self.lo + (l as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|l| self.center(l)).collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v > self.lo && v < self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticProblem {
    pub flux: Flux,
    pub noise: NoiseCoef,
    pub viscosity: f64,
    pub initial: ClawInitial,
    pub window: XiWindow,
}

impl KineticProblem {
    pub fn cfl_number(&self, torus: &TorusGrid, dt: f64) -> f64 {
        let dx = torus.dx();
        self.flux.max_speed(self.window.lo, self.window.hi) * dt / dx + 2.0 * self.viscosity * dt / (dx * dx)
    }
}

/// Engquist–Osher flux `G(a,b) = F(a) + ∫ₐᵇ min(F', 0)`, exact given the
/// sign changes of `F'` on the window.
#[derive(Debug, Clone)]
pub struct EoFlux {
    flux: Flux,
    breaks: Vec<f64>,
    // sign of F' between consecutive breaks
    negative: Vec<bool>,
}

impl EoFlux {
    pub fn new(flux: Flux, window: &XiWindow) -> Self {
        let pad = window.hi - window.lo;
        let (lo, hi) = (window.lo - pad, window.hi + pad);
        let m = 8192;
        let mut breaks = Vec::new();
        let mut prev = (lo, flux.derivative(lo));
        for k in 1..=m {
            let x = lo + (hi - lo) * k as f64 / m as f64;
            let d = flux.derivative(x);
            if (prev.1 < 0.0) != (d < 0.0) {
                let (mut a, mut b) = (prev.0, x);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if (flux.derivative(mid) < 0.0) == (prev.1 < 0.0) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                breaks.push(0.5 * (a + b));
            }
            prev = (x, d);
        }
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(&breaks);
        edges.push(f64::INFINITY);
        let negative = edges
            .windows(2)
            .map(|e| {
                let probe = match (e[0].is_finite(), e[1].is_finite()) {
                    (true, true) => 0.5 * (e[0] + e[1]),
                    (true, false) => e[0] + 1.0,
                    (false, true) => e[1] - 1.0,
                    (false, false) => 0.0,
                };
                flux.derivative(probe) < 0.0
            })
            .collect();
        EoFlux { flux, breaks, negative }
    }

    fn negative_part(&self, a: f64, b: f64) -> f64 {
        if a > b {
            return -self.negative_part(b, a);
        }
        let first = self.breaks.partition_point(|&r| r <= a);
        let mut total = 0.0;
        let mut s = a;
        let mut k = first;
        loop {
            let r = if k < self.breaks.len() && self.breaks[k] < b { self.breaks[k] } else { b };
            if self.negative[k] {
                total += self.flux.eval(r) - self.flux.eval(s);
            }
            if r == b {
                return total;
            }
            s = r;
            k += 1;
        }
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.flux.eval(a) + self.negative_part(a, b)
    }
}

/// Kinetic defect measure, binned in time (every `stride` steps), space (cells)
/// and `ξ` (window bins).
#[derive(Debug, Clone, PartialEq)]
pub struct KineticMeasure {
    pub window: XiWindow,
    pub cells: usize,
    pub stride: usize,
    pub time_bins: usize,
    data: Vec<f64>,
    pub numerical_total: f64,
    pub parabolic_total: f64,
}

impl KineticMeasure {
    pub fn new(window: XiWindow, cells: usize, steps: usize, stride: usize) -> Result<Self> {
        if stride == 0 || steps % stride != 0 {
            return Err(Error::Config(format!("measure stride {stride} must divide {steps} steps")));
        }
        let time_bins = steps / stride;
        Ok(KineticMeasure {
            window,
            cells,
            stride,
            time_bins,
            data: vec![0.0; time_bins * cells * window.bins],
            numerical_total: 0.0,
            parabolic_total: 0.0,
        })
    }

    fn idx(&self, tb: usize, i: usize, l: usize) -> usize {
        (tb * self.cells + i) * self.window.bins + l
    }

    pub fn bin(&self, tb: usize, i: usize, l: usize) -> f64 {
        self.data[self.idx(tb, i, l)]
    }

    pub fn bins(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.data)
    }

    /// Mass over the (time bin, cell) pairs for which `keep` holds.
    pub fn mass_where(&self, keep: impl Fn(usize, usize) -> bool) -> f64 {
        let mut parts = Vec::new();
        for tb in 0..self.time_bins {
            for i in 0..self.cells {
                if keep(tb, i) {
                    let k = self.idx(tb, i, 0);
                    parts.push(pairwise_sum(&self.data[k..k + self.window.bins]));
                }
            }
        }
        pairwise_sum(&parts)
    }

    /// `Σ m(bin)·g(x_i, ξ_l)` over time bins before `tb_end`.
    pub fn pair_until(&self, tb_end: usize, torus: &TorusGrid, g: impl Fn(f64, f64) -> f64) -> f64 {
        let xi = self.window.centers();
        let mut parts = Vec::with_capacity(tb_end * self.cells);
        for tb in 0..tb_end.min(self.time_bins) {
            for i in 0..self.cells {
                let x = torus.center(i);
                let k = self.idx(tb, i, 0);
                let s: f64 = self.data[k..k + self.window.bins].iter().zip(&xi).map(|(m, &z)| m * g(x, z)).sum();
                parts.push(s);
            }
        }
        pairwise_sum(&parts)
    }

    fn deposit(&mut self, tb: usize, i: usize, l: usize, mass: f64) {
        let k = self.idx(tb, i, l);
        self.data[k] += mass;
    }

    /// Splits `mass` at `ξ = v` between the two nearest bin centres.
    fn deposit_at(&mut self, tb: usize, i: usize, v: f64, mass: f64) {
        let s = ((v - self.window.lo) / self.window.width() - 0.5).clamp(0.0, (self.window.bins - 1) as f64);
        let l = (s.floor() as usize).min(self.window.bins - 1);
        let frac = s - l as f64;
        if l + 1 < self.window.bins {
            self.deposit(tb, i, l, mass * (1.0 - frac));
            self.deposit(tb, i, l + 1, mass * frac);
        } else {
            self.deposit(tb, i, l, mass);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClawSolution {
    pub path: FieldPath,
    pub measure: Option<KineticMeasure>,
}

/// Runs the scheme, handing every node to `observe` and accumulating the
/// kinetic measure into `measure` when given.
pub fn solve_claw_with(
    problem: &KineticProblem,
    torus: &TorusGrid,
    w: &WienerPath,
    mut measure: Option<&mut KineticMeasure>,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let grid = w.grid();
    let dt = grid.dt();
    let dx = torus.dx();
    let cfl = problem.cfl_number(torus, dt);
    if cfl > CFL_LIMIT {
        return Err(Error::Cfl { number: cfl, limit: CFL_LIMIT });
    }
    let n = torus.cells();
    let lambda = dt / dx;
    let mu = problem.viscosity * dt / (dx * dx);
    let eo = EoFlux::new(problem.flux, &problem.window);
    let window = problem.window;
    let kappas = window.centers();
    let dxi = window.width();
    let mut u = problem.initial.cell_averages(torus);
    if let Some(v) = u.iter().find(|v| !window.contains(**v)) {
        return Err(Error::RangeEscape { step: 0, value: *v, lo: window.lo, hi: window.hi });
    }
    let mut flux = vec![0.0; n];
    let mut hyper = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut q = vec![0.0; n];
    observe(0, &u);
    for j in 0..grid.steps() {
        for i in 0..n {
            flux[i] = eo.eval(u[i], u[torus.right(i)]);
        }
        for i in 0..n {
            hyper[i] = u[i] - lambda * (flux[i] - flux[torus.left(i)]);
        }
        if let Some(m) = measure.as_deref_mut() {
            let tb = j / m.stride;
            for (l, &kappa) in kappas.iter().enumerate() {
                for i in 0..n {
                    let r = torus.right(i);
                    q[i] = eo.eval(u[i].max(kappa), u[r].max(kappa)) - eo.eval(u[i].min(kappa), u[r].min(kappa));
                }
                for i in 0..n {
                    let e = (hyper[i] - kappa).abs() - (u[i] - kappa).abs() + lambda * (q[i] - q[torus.left(i)]);
                    let mass = (-0.5 * e).max(0.0) * dx * dxi;
                    if mass > 0.0 {
                        m.deposit(tb, i, l, mass);
                        m.numerical_total += mass;
                    }
                }
            }
            if problem.viscosity > 0.0 {
                for i in 0..n {
                    let dp = (u[torus.right(i)] - u[i]) / dx;
                    let dm = (u[i] - u[torus.left(i)]) / dx;
                    let mass = problem.viscosity * 0.5 * (dp * dp + dm * dm) * dt * dx;
                    m.deposit_at(tb, i, u[i], mass);
                    m.parabolic_total += mass;
                }
            }
        }
        let dw = w.increment(j, 0);
        for i in 0..n {
            let (l, r) = (torus.left(i), torus.right(i));
            next[i] = hyper[i] + mu * (u[r] - 2.0 * u[i] + u[l]) + problem.noise.eval(u[i]) * dw;
        }
        for &v in &next {
            if !v.is_finite() {
                return Err(Error::NonFinite { step: j });
            }
            if !window.contains(v) {
                return Err(Error::RangeEscape { step: j + 1, value: v, lo: window.lo, hi: window.hi });
            }
        }
        std::mem::swap(&mut u, &mut next);
        observe(j + 1, &u);
    }
    Ok(())
}

/// Solves and stores every node; `stride` sets the time binning of the
/// measure (`None` skips the measure).
pub fn solve_claw(problem: &KineticProblem, torus: &TorusGrid, w: &WienerPath, stride: Option<usize>) -> Result<ClawSolution> {
    let mut measure = match stride {
        Some(s) => Some(KineticMeasure::new(problem.window, torus.cells(), w.grid().steps(), s)?),
        None => None,
    };
    let mut values = Vec::with_capacity((w.grid().steps() + 1) * torus.cells());
    solve_claw_with(problem, torus, w, measure.as_mut(), |_, u| values.extend_from_slice(u))?;
    Ok(ClawSolution { path: FieldPath::from_values(*w.grid(), *torus, values)?, measure })
}

/// `χ(t_j, x_i, ξ) = 1{ξ < u(t_j, x_i)}`, evaluated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    window: XiWindow,
    path: FieldPath,
}

pub fn kinetic_function(u: &FieldPath, window: XiWindow) -> Result<KineticField> {
    for j in 0..=u.grid().steps() {
        if let Some(v) = u.at(j).iter().find(|v| !window.contains(**v)) {
            return Err(Error::RangeEscape { step: j, value: *v, lo: window.lo, hi: window.hi });
        }
    }
    Ok(KineticField { window, path: u.clone() })
}

impl KineticField {
    pub fn window(&self) -> &XiWindow {
        &self.window
    }

    pub fn path(&self) -> &FieldPath {
        &self.path
    }

    /// `χ` at the centre of bin `l`.
    pub fn chi(&self, j: usize, i: usize, l: usize) -> u8 {
        u8::from(self.window.center(l) < self.path.at(j)[i])
    }

    /// `∫_{ξ_lo}^{ξ} χ dξ'` restricted to bins, with the bin holding `u` counted fractionally.
    fn covered(&self, u: f64, l: usize) -> f64 {
        let a = self.window.lo + l as f64 * self.window.width();
        (u - a).clamp(0.0, self.window.width())
    }

    /// `∫₀^{ξ_max} χ dξ` by summing bins right of zero.
    pub fn layer_cake(&self, j: usize, i: usize) -> f64 {
        (0..self.window.bins)
            .filter(|&l| self.window.center(l) >= 0.0)
            .map(|l| self.chi(j, i, l) as f64 * self.window.width())
            .sum()
    }

    /// `∫∫ χ g dx dξ` at node `j`: midpoint in every full bin, the partial bin
    /// below `u` by its covered length at its own midpoint.
    pub fn pair(&self, j: usize, g: impl Fn(f64, f64) -> f64) -> f64 {
        let torus = self.path.torus();
        let u = self.path.at(j);
        let h = self.window.width();
        let per_cell: Vec<f64> = (0..torus.cells())
            .map(|i| {
                let x = torus.center(i);
                let mut s = 0.0;
                for l in 0..self.window.bins {
                    let c = self.covered(u[i], l);
                    if c <= 0.0 {
                        break;
                    }
                    let a = self.window.lo + l as f64 * h;
                    s += c * g(x, a + 0.5 * c);
                }
                s
            })
            .collect();
        torus.integrate(&per_cell)
    }
}

/// Separable kinetic test function `φ(x,ξ) = a(x)·c(ξ)`, `c` a smooth bump on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticTest {
    pub spatial: Profile,
    pub lo: f64,
    pub hi: f64,
    // cumulative tables of c and of F'c on a fine ξ-grid
    table_step: f64,
    cum_c: Vec<f64>,
    cum_fc: Vec<f64>,
}

const TABLE_POINTS: usize = 1 << 15;

impl KineticTest {
    pub fn new(spatial: Profile, lo: f64, hi: f64, flux: &Flux) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Config(format!("bump support [{lo}, {hi}] is empty")));
        }
        let h = (hi - lo) / TABLE_POINTS as f64;
        let mut cum_c = vec![0.0; TABLE_POINTS + 1];
        let mut cum_fc = vec![0.0; TABLE_POINTS + 1];
        let mut test = KineticTest { spatial, lo, hi, table_step: h, cum_c: Vec::new(), cum_fc: Vec::new() };
        // Simpson on each table cell
        for k in 0..TABLE_POINTS {
            let (a, b) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
            let m = 0.5 * (a + b);
            let simpson = |f: &dyn Fn(f64) -> f64| h / 6.0 * (f(a) + 4.0 * f(m) + f(b));
            cum_c[k + 1] = cum_c[k] + simpson(&|z| test.bump(z));
            cum_fc[k + 1] = cum_fc[k] + simpson(&|z| flux.derivative(z) * test.bump(z));
        }
        test.cum_c = cum_c;
        test.cum_fc = cum_fc;
        Ok(test)
    }

    /// `c(ξ)`, normalised to peak 1.
    pub fn bump(&self, xi: f64) -> f64 {
        let s = (xi - self.lo) / (self.hi - self.lo);
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            (4.0 - 1.0 / (s * (1.0 - s))).exp()
        }
    }

    pub fn bump_derivative(&self, xi: f64) -> f64 {
        let s = (xi - self.lo) / (self.hi - self.lo);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let q = s * (1.0 - s);
        self.bump(xi) * (1.0 - 2.0 * s) / (q * q) / (self.hi - self.lo)
    }

    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        self.spatial.eval(x) * self.bump(xi)
    }

    fn lookup(&self, table: &[f64], v: f64) -> f64 {
        if v <= self.lo {
            return 0.0;
        }
        if v >= self.hi {
            return table[TABLE_POINTS];
        }
        let s = (v - self.lo) / self.table_step;
        let k = (s.floor() as usize).min(TABLE_POINTS - 1);
        let f = s - k as f64;
        table[k] * (1.0 - f) + table[k + 1] * f
    }

    /// `∫_{-∞}^{v} c`.
    pub fn cumulative(&self, v: f64) -> f64 {
        self.lookup(&self.cum_c, v)
    }

    /// `∫_{-∞}^{v} F'c` for the flux given at construction.
    pub fn cumulative_flux(&self, v: f64) -> f64 {
        self.lookup(&self.cum_fc, v)
    }
}

/// A kinetic test function with its spatial factor sampled on a torus.
#[derive(Debug, Clone)]
pub struct Probe<'a> {
    phi: &'a KineticTest,
    torus: TorusGrid,
    weights: Vec<f64>,
}

impl KineticTest {
    pub fn probe(&self, torus: &TorusGrid) -> Probe<'_> {
        Probe { phi: self, torus: *torus, weights: torus.centers().iter().map(|&x| self.spatial.eval(x)).collect() }
    }
}

impl Probe<'_> {
    fn integrate(&self, f: impl Fn(f64) -> f64, u: &[f64]) -> f64 {
        let vals: Vec<f64> = u.iter().zip(&self.weights).map(|(&v, &a)| a * f(v)).collect();
        self.torus.integrate(&vals)
    }

    /// `⟨χ, ∂_ξ(σφ)⟩ = ∫ a(x) σ(u) c(u) dx`, the integrand of the kinetic
    /// stochastic integral.
    pub fn noise(&self, u: &[f64], noise: &NoiseCoef) -> f64 {
        self.integrate(|v| noise.eval(v) * self.phi.bump(v), u)
    }

    /// `⟨χ, φ⟩`.
    pub fn chi(&self, u: &[f64]) -> f64 {
        self.integrate(|v| self.phi.cumulative(v), u)
    }
}

pub fn noise_pairing(u: &[f64], torus: &TorusGrid, phi: &KineticTest, noise: &NoiseCoef) -> f64 {
    phi.probe(torus).noise(u, noise)
}

pub fn chi_pairing(u: &[f64], torus: &TorusGrid, phi: &KineticTest) -> f64 {
    phi.probe(torus).chi(u)
}

/// Weak-form kinetic residual at node `upto`, which must be a multiple of the
/// measure's time stride.
pub fn kinetic_residual(
    sol: &ClawSolution,
    problem: &KineticProblem,
    w: &WienerPath,
    phi: &KineticTest,
    upto: usize,
) -> Result<f64> {
    let path = &sol.path;
    let torus = path.torus();
    let grid = path.grid();
    if !w.grid().same_as(grid) || upto > grid.steps() {
        return Err(Error::GridMismatch("residual node or driver does not match the solution".into()));
    }
    let dt = grid.dt();
    let xs = torus.centers();
    let a: Vec<f64> = xs.iter().map(|&x| phi.spatial.eval(x)).collect();
    let a1: Vec<f64> = xs.iter().map(|&x| phi.spatial.derivative(x)).collect();
    let a2: Vec<f64> = xs.iter().map(|&x| phi.spatial.second_derivative(x)).collect();
    let sigma = &problem.noise;
    let probe = phi.probe(torus);
    let mut terms = vec![probe.chi(path.at(upto)), -probe.chi(path.at(0))];
    for j in 0..upto {
        let u = path.at(j);
        let drift: Vec<f64> = (0..xs.len())
            .map(|i| {
                let v = u[i];
                a1[i] * phi.cumulative_flux(v)
                    + problem.viscosity * a2[i] * phi.cumulative(v)
                    + 0.5 * a[i] * sigma.eval(v).powi(2) * phi.bump_derivative(v)
            })
            .collect();
        terms.push(-dt * torus.integrate(&drift));
        terms.push(-probe.noise(u, sigma) * w.increment(j, 0));
    }
    if let Some(m) = &sol.measure {
        if upto % m.stride != 0 {
            return Err(Error::InvalidArgument(format!("node {upto} is not on the measure's time bins")));
        }
        terms.push(m.pair_until(upto / m.stride, torus, |x, z| phi.spatial.eval(x) * phi.bump_derivative(z)));
    } else if problem.viscosity > 0.0 || !problem.flux.is_zero() {
        return Err(Error::InvalidArgument("residual needs the kinetic measure".into()));
    }
    Ok(pairwise_sum(&terms))
}

/// Position of the first downward crossing of `level` at or after `from`.
pub fn front_position(u: &[f64], torus: &TorusGrid, level: f64, from: f64) -> Option<f64> {
    let n = u.len();
    let start = ((from / torus.dx()).floor() as usize).min(n - 1);
    for k in 0..n {
        let i = (start + k) % n;
        let r = torus.right(i);
        if u[i] >= level && u[r] < level {
            let frac = (u[i] - level) / (u[i] - u[r]);
            let x = torus.center(i) + frac * torus.dx();
            return Some(if x >= 1.0 { x - 1.0 } else { x });
        }
    }
    None
}

/// A sequence of kinetic problems `Fₙ = F + F_pert/n`, `σₙ = σ + σ_pert/n`,
/// `ε = viscosity_scale/n` with a fine-mesh limit reference.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticSetup {
    pub flux: Flux,
    pub flux_perturbation: Flux,
    pub noise: NoiseCoef,
    pub noise_perturbation: NoiseCoef,
    pub viscosity_scale: f64,
    pub initial: ClawInitial,
    pub cells: usize,
    pub steps: usize,
    pub horizon: f64,
    pub refine: usize,
    pub ladder: Vec<u32>,
    pub bins: usize,
    pub spatial_test: Profile,
    pub coupling: Coupling,
    pub tests: Vec<TestVariable>,
    /// Replicas on which the kinetic measure is accumulated for the mass monitor.
    pub measure_replicas: usize,
}

impl KineticSetup {
    /// Burgers with a `u³/30` flux perturbation, `σ = 0.3 + cos ξ/10`
    /// perturbed by `−cos ξ/5`, smooth datum `0.5 + 0.3 sin 2πx`.
    pub fn standard() -> Self {
        KineticSetup {
            flux: Flux::burgers(),
            flux_perturbation: Flux { cubic: 0.1, ..Flux::default() },
            noise: NoiseCoef { constant: 0.3, cos_amp: 0.1, sin_amp: 0.0 },
            noise_perturbation: NoiseCoef { cos_amp: -0.2, ..NoiseCoef::default() },
            viscosity_scale: 1.0,
            initial: ClawInitial::Smooth(Profile::wave(0.5, 0.3, 1, 0.0)),
            cells: 64,
            steps: 2048,
            horizon: 0.25,
            refine: 2,
            ladder: vec![2, 4, 8, 16],
            bins: 16,
            spatial_test: Profile::wave(1.0, 0.5, 1, 0.0),
            coupling: Coupling::default(),
            tests: TestVariable::default_family(),
            measure_replicas: 4,
        }
    }

    pub fn window(&self) -> Result<XiWindow> {
        let sup = self.noise.sup_bound() + self.noise_perturbation.sup_bound();
        XiWindow::around(self.initial.range(), sup, self.horizon, self.bins)
    }

    pub fn member(&self, n: u32) -> Result<KineticProblem> {
        let s = 1.0 / n as f64;
        Ok(KineticProblem {
            flux: self.flux.plus_scaled(s, &self.flux_perturbation),
            noise: self.noise.plus_scaled(s, &self.noise_perturbation),
            viscosity: self.viscosity_scale * s,
            initial: self.initial.clone(),
            window: self.window()?,
        })
    }

    pub fn limit(&self) -> Result<KineticProblem> {
        Ok(KineticProblem {
            flux: self.flux,
            noise: self.noise,
            viscosity: 0.0,
            initial: self.initial.clone(),
            window: self.window()?,
        })
    }

    pub fn test_function(&self, flux: &Flux) -> Result<KineticTest> {
        let w = self.window()?;
        KineticTest::new(self.spatial_test.clone(), w.lo, w.hi, flux)
    }

    /// `sup|Fₙ' − F'|` and `sup|σₙ − σ|` on the window, per `n`.
    pub fn hypothesis_monitors(&self) -> Result<Vec<(&'static str, Vec<f64>)>> {
        let w = self.window()?;
        let speed = self.flux_perturbation.max_speed(w.lo, w.hi);
        let sig = self.noise_perturbation.sup_bound();
        let at = |b: f64| self.ladder.iter().map(|&n| b / n as f64).collect::<Vec<_>>();
        Ok(vec![("flux_speed_distance", at(speed)), ("noise_distance", at(sig))])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticReport {
    pub ladder: Vec<u32>,
    pub samples: usize,
    /// Weak gap of `∫⟨χₙ,∂_ξ(φσₙ)⟩dWₙ − ∫⟨χ,∂_ξ(φσ)⟩dW`.
    pub integral_gap: Vec<GapEstimate>,
    /// `|Ê∫⟨χₙ − χ, φ⟩dt|`.
    pub chi_gap: Vec<Estimate>,
    /// Total kinetic-measure mass on the first `measure_replicas` replicas.
    pub measure_mass: Vec<Estimate>,
    pub min_bin: f64,
    pub monitors: Vec<(&'static str, Vec<f64>)>,
    pub valid: bool,
}

impl KineticReport {
    pub fn gap_ratio(&self) -> f64 {
        self.integral_gap[self.integral_gap.len() - 1].gap / self.integral_gap[0].gap
    }

    /// Largest measure mass over smallest along the ladder.
    pub fn mass_spread(&self) -> f64 {
        let hi = self.measure_mass.iter().map(|e| e.mean).fold(0.0, f64::max);
        let lo = self.measure_mass.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

struct KineticRow {
    integral: Vec<f64>,
    chi: f64,
    mass: Option<f64>,
    min_bin: f64,
}

fn scalar_process(grid: TimeGrid, mut values: Vec<f64>) -> Result<AdaptedProcess> {
    values.truncate(grid.steps());
    AdaptedProcess::new(grid, Shape::SCALAR, values, (0..grid.steps()).collect())
}

pub fn kinetic_stability_experiment(setup: &KineticSetup, seed: u64, samples: usize) -> Result<KineticReport> {
    let torus = TorusGrid::new(setup.cells)?;
    let fine_torus = TorusGrid::new(setup.cells * setup.refine)?;
    let coarse = TimeGrid::new(setup.horizon, setup.steps)?;
    let fine = coarse.refined(setup.refine)?;
    let ens = Ensemble::new(fine, 1, seed, samples)?;
    let limit = setup.limit()?;
    let members = setup.ladder.iter().map(|&n| setup.member(n)).collect::<Result<Vec<_>>>()?;
    for m in &members {
        let c = m.cfl_number(&torus, coarse.dt());
        if c > CFL_LIMIT {
            return Err(Error::Cfl { number: c, limit: CFL_LIMIT });
        }
    }
    let phi = setup.test_function(&setup.flux)?;
    let r = setup.refine;
    let fine_probe = phi.probe(&fine_torus);
    let probe = phi.probe(&torus);
    let rows = ens.map(|rep| {
        let mut lim_pair = Vec::with_capacity(fine.steps() + 1);
        let mut lim_chi = Vec::with_capacity(coarse.steps() + 1);
        solve_claw_with(&limit, &fine_torus, &rep.w, None, |j, u| {
            lim_pair.push(fine_probe.noise(u, &limit.noise));
            if j % r == 0 {
                lim_chi.push(fine_probe.chi(u));
            }
        })?;
        let reference = ito_integral(&scalar_process(fine, lim_pair)?, &rep.w, fine.steps())?[0];
        let mut out = Vec::with_capacity(members.len());
        for (m, &n) in members.iter().zip(&setup.ladder) {
            let wn = setup.coupling.apply(&rep.w, &rep.b, n)?.coarsen(r)?;
            let mut pairs = Vec::with_capacity(coarse.steps() + 1);
            let mut chi = Vec::with_capacity(coarse.steps() + 1);
            let mut measure = if (rep.index as usize) < setup.measure_replicas {
                Some(KineticMeasure::new(m.window, setup.cells, coarse.steps(), coarse.steps())?)
            } else {
                None
            };
            solve_claw_with(m, &torus, &wn, measure.as_mut(), |j, u| {
                pairs.push(probe.noise(u, &m.noise));
                let wgt = if j == 0 || j == coarse.steps() { 0.5 } else { 1.0 };
                chi.push(wgt * (probe.chi(u) - lim_chi[j]));
            })?;
            let integral = ito_integral(&scalar_process(coarse, pairs)?, &wn, coarse.steps())?[0];
            out.push(KineticRow {
                integral: weak_columns(rep, &setup.tests, &[integral - reference]),
                chi: pairwise_sum(&chi) * coarse.dt(),
                mass: measure.as_ref().map(|m| m.total()),
                min_bin: measure.as_ref().map_or(0.0, |m| m.bins().iter().cloned().fold(f64::INFINITY, f64::min)),
            });
        }
        Ok(out)
    })?;
    let nl = setup.ladder.len();
    let width = setup.tests.len();
    let integral_gap = (0..nl)
        .map(|m| {
            let table: Vec<Vec<f64>> = rows.iter().map(|r| r[m].integral.clone()).collect();
            GapEstimate::from_columns(&table, width, |c| (c, 0))
        })
        .collect();
    let chi_gap = (0..nl).map(|m| Estimate::from_samples(&rows.iter().map(|r| r[m].chi).collect::<Vec<_>>())).collect();
    let measure_mass = (0..nl)
        .map(|m| Estimate::from_samples(&rows.iter().filter_map(|r| r[m].mass).collect::<Vec<_>>()))
        .collect();
    let min_bin = rows
        .iter()
        .flat_map(|r| r.iter().filter(|x| x.mass.is_some()).map(|x| x.min_bin))
        .fold(f64::INFINITY, f64::min);
    let monitors = setup.hypothesis_monitors()?;
    let valid = monitors.iter().all(|(_, v)| v.windows(2).all(|w| w[1] <= w[0]));
    Ok(KineticReport {
        ladder: setup.ladder.clone(),
        samples,
        integral_gap,
        chi_gap,
        measure_mass,
        min_bin,
        monitors,
        valid,
    })
}

/// Which pairing of `χₙ` a translation experiment tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KineticPairing {
    /// `⟨χₙ, φ⟩`
    Chi,
    /// `⟨χₙ, ∂_ξ(φσₙ)⟩`
    Noise,
}

/// Translation-rate fit for a kinetic pairing along the ladder.
pub fn kinetic_translation(
    setup: &KineticSetup,
    pairing: KineticPairing,
    seed: u64,
    samples: usize,
    lags: &[f64],
) -> Result<RateFit> {
    let torus = TorusGrid::new(setup.cells)?;
    let grid = TimeGrid::new(setup.horizon, setup.steps)?;
    let ens = Ensemble::new(grid, 1, seed, samples)?;
    let phi = setup.test_function(&setup.flux)?;
    let probe = phi.probe(&torus);
    let families = setup
        .ladder
        .iter()
        .map(|&n| {
            let m = setup.member(n)?;
            let paths = ens.map(|rep| {
                let wn = rep.driver(&setup.coupling, n)?;
                let mut path = Vec::with_capacity(grid.steps() + 1);
                solve_claw_with(&m, &torus, &wn, None, |_, u| {
                    path.push(match pairing {
                        KineticPairing::Chi => probe.chi(u),
                        KineticPairing::Noise => probe.noise(u, &m.noise),
                    })
                })?;
                Ok(path)
            })?;
            Ok((n, paths))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_translation_rate(&families, &grid, lags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::sample_wiener;

    fn riemann() -> ClawInitial {
        ClawInitial::Riemann { left: 1.0, right: 0.0, split: 0.5 }
    }

    fn burgers_problem(bins: usize) -> KineticProblem {
        KineticProblem {
            flux: Flux::burgers(),
            noise: NoiseCoef::default(),
            viscosity: 0.0,
            initial: riemann(),
            window: XiWindow::new(-0.5, 1.5, bins).unwrap(),
        }
    }

    fn driver(steps: usize, horizon: f64, seed: u64) -> WienerPath {
        sample_wiener(TimeGrid::new(horizon, steps).unwrap(), 1, seed, 0).unwrap()
    }

    #[test]
    fn eo_flux_closed_forms() {
        let w = XiWindow::new(-2.0, 2.0, 8).unwrap();
        let b = EoFlux::new(Flux::burgers(), &w);
        for (a, c) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.5), (0.3, -0.7), (-0.4, -0.1)] {
            // F(max(a,0)) + F(min(b,0)) for convex Burgers
            let f = |u: f64| 0.5 * u * u;
            let closed = f(f64::max(a, 0.0)) + f(f64::min(c, 0.0));
            assert!((b.eval(a, c) - closed).abs() < 1e-12);
        }
        let cubic = EoFlux::new(Flux::cubic(), &w);
        assert!((cubic.eval(0.7, -1.2) - Flux::cubic().eval(0.7)).abs() < 1e-12);
        let lin = EoFlux::new(Flux::linear(-0.5), &w);
        assert!((lin.eval(0.7, 0.2) - (-0.1)).abs() < 1e-12);
        assert!((b.eval(0.4, 0.4) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn static_problem_has_no_measure() {
        let torus = TorusGrid::new(32).unwrap();
        let p = KineticProblem { flux: Flux::default(), ..burgers_problem(16) };
        let w = driver(64, 0.5, 1);
        let s = solve_claw(&p, &torus, &w, Some(8)).unwrap();
        for j in 0..=64 {
            assert_eq!(s.path.at(j), s.path.at(0));
        }
        assert_eq!(s.measure.as_ref().unwrap().total(), 0.0);
        let phi = KineticTest::new(Profile::wave(0.3, 1.0, 2, 0.1), -0.4, 1.4, &p.flux).unwrap();
        assert!(kinetic_residual(&s, &p, &w, &phi, 64).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn kinetic_field_invariants() {
        let torus = TorusGrid::new(32).unwrap();
        let w = driver(100, 0.5, 0);
        let s = solve_claw(&burgers_problem(40), &torus, &w, None).unwrap();
        let window = XiWindow::new(-1.0, 2.0, 60).unwrap();
        let k = kinetic_function(&s.path, window).unwrap();
        for j in [0, 50, 100] {
            for i in 0..32 {
                let u = s.path.at(j)[i];
                let mut prev = 1u8;
                for l in 0..60 {
                    let c = k.chi(j, i, l);
                    assert!(c <= prev);
                    prev = c;
                }
                assert_eq!(k.chi(j, i, 0), 1);
                assert_eq!(k.chi(j, i, 59), 0);
                assert!((k.layer_cake(j, i) - u.max(0.0)).abs() <= window.width());
            }
        }
        let zero = FieldPath::from_values(TimeGrid::new(1.0, 1).unwrap(), torus, vec![0.0; 64]).unwrap();
        let sym = kinetic_function(&zero, XiWindow::new(-1.0, 1.0, 10).unwrap()).unwrap();
        for l in 0..10 {
            assert_eq!(sym.chi(0, 3, l), u8::from(l < 5));
        }
        assert!(kinetic_function(&s.path, XiWindow::new(0.2, 2.0, 10).unwrap()).is_err());
    }

    #[test]
    fn noise_pairing_matches_bin_evaluation() {
        let torus = TorusGrid::new(32).unwrap();
        let p = KineticProblem {
            noise: NoiseCoef::constant(0.4),
            initial: ClawInitial::Smooth(Profile::wave(0.5, 0.3, 1, 0.0)),
            ..burgers_problem(16)
        };
        let w = driver(200, 0.25, 3);
        let s = solve_claw(&p, &torus, &w, None).unwrap();
        let phi = KineticTest::new(Profile::wave(1.0, 0.5, 1, 0.0), -0.5, 1.5, &p.flux).unwrap();
        for bins in [64usize, 256] {
            let k = kinetic_function(&s.path, XiWindow::new(-0.5, 1.5, bins).unwrap()).unwrap();
            let h = k.window().width();
            for j in [0, 100, 200] {
                let direct = noise_pairing(s.path.at(j), &torus, &phi, &p.noise);
                let g = |x: f64, z: f64| 0.4 * phi.spatial.eval(x) * phi.bump_derivative(z);
                assert!((k.pair(j, g) - direct).abs() <= h, "{bins}: {} vs {direct}", k.pair(j, g));
            }
        }
    }

    #[test]
    fn burgers_shock_speed_and_max_principle() {
        let cells = 128;
        let torus = TorusGrid::new(cells).unwrap();
        let horizon = 0.5;
        let steps = 256;
        let s = solve_claw(&burgers_problem(16), &torus, &driver(steps, horizon, 0), None).unwrap();
        let u = s.path.at(steps);
        assert!(u.iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)));
        let x = front_position(u, &torus, 0.5, 0.55).unwrap();
        let speed = (x - 0.5) / horizon;
        assert!((speed - 0.5).abs() <= 2.0 * torus.dx() / horizon, "speed {speed}");
    }

    #[test]
    fn measure_is_nonnegative_and_leaves_rarefaction() {
        let horizon = 0.5;
        let mut fan = Vec::new();
        let mut residual = Vec::new();
        for cells in [64usize, 128, 256] {
            let torus = TorusGrid::new(cells).unwrap();
            let steps = 2 * cells;
            let p = burgers_problem(cells / 2);
            let w = driver(steps, horizon, 0);
            let stride = steps / 8;
            let s = solve_claw(&p, &torus, &w, Some(stride)).unwrap();
            let m = s.measure.as_ref().unwrap();
            assert!(m.bins().iter().all(|&b| b >= 0.0));
            assert!(m.total() > 0.0);
            // interior of the fan 0 < x < t, away from its edges, after a quarter of the run
            fan.push(m.mass_where(|tb, i| {
                let t = (tb as f64 + 0.5) * stride as f64 * horizon / steps as f64;
                let x = torus.center(i);
                tb >= 2 && x > 0.2 * t && x < 0.8 * t
            }));
            let phi = KineticTest::new(Profile::wave(1.0, 0.5, 1, 0.3), -0.4, 1.4, &p.flux).unwrap();
            residual.push(kinetic_residual(&s, &p, &w, &phi, steps).unwrap().abs());
        }
        for w in fan.windows(2) {
            assert!(w[0] >= 1.5 * w[1], "fan {fan:?}");
        }
        for w in residual.windows(2) {
            assert!(w[0] >= 1.5 * w[1], "residual {residual:?}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let flux = Flux { linear: 0.3, quadratic: 1.0, cubic: 0.2, wiggle: 0.1 };
        let noise = NoiseCoef { constant: 0.3, cos_amp: 0.1, sin_amp: -0.2 };
        let h = 1e-5;
        for k in 0..50 {
            let v = -2.0 + 0.09 * k as f64;
            let fd = (flux.eval(v + h) - flux.eval(v - h)) / (2.0 * h);
            assert!((fd - flux.derivative(v)).abs() < 1e-6);
            let sd = (noise.eval(v + h) - noise.eval(v - h)) / (2.0 * h);
            assert!((sd - noise.derivative(v)).abs() < 1e-6);
        }
        let phi = KineticTest::new(Profile::constant(1.0), -1.0, 1.0, &flux).unwrap();
        for k in 1..40 {
            let v = -1.0 + 0.05 * k as f64;
            let fd = (phi.bump(v + h) - phi.bump(v - h)) / (2.0 * h);
            assert!((fd - phi.bump_derivative(v)).abs() < 1e-6);
            let m = 4000;
            let dz = (v + 1.0) / m as f64;
            let simpson: f64 = (0..m)
                .map(|q| {
                    let a = -1.0 + q as f64 * dz;
                    dz / 6.0 * (phi.bump(a) + 4.0 * phi.bump(a + 0.5 * dz) + phi.bump(a + dz))
                })
                .sum();
            assert!((phi.cumulative(v) - simpson).abs() < 1e-8);
        }
    }

    #[test]
    fn range_escape_aborts() {
        let torus = TorusGrid::new(16).unwrap();
        let p = KineticProblem {
            flux: Flux::default(),
            noise: NoiseCoef::constant(5.0),
            window: XiWindow::new(-0.1, 1.1, 8).unwrap(),
            ..burgers_problem(8)
        };
        let err = solve_claw(&p, &torus, &driver(64, 1.0, 2), None).unwrap_err();
        assert!(matches!(err, Error::RangeEscape { .. }));
        let fast = KineticProblem { flux: Flux::linear(100.0), ..burgers_problem(8) };
        assert!(matches!(solve_claw(&fast, &torus, &driver(8, 1.0, 2), None), Err(Error::Cfl { .. })));
    }

    fn small_setup() -> KineticSetup {
        KineticSetup { cells: 32, steps: 512, horizon: 0.125, ladder: vec![2, 8], ..KineticSetup::standard() }
    }

    #[test]
    fn unperturbed_sequence_has_zero_gap() {
        let setup = KineticSetup {
            flux_perturbation: Flux::default(),
            noise_perturbation: NoiseCoef::default(),
            viscosity_scale: 0.0,
            refine: 1,
            coupling: Coupling::Identity,
            measure_replicas: 0,
            ..small_setup()
        };
        let r = kinetic_stability_experiment(&setup, 3, 20).unwrap();
        for (g, c) in r.integral_gap.iter().zip(&r.chi_gap) {
            assert_eq!(g.gap, 0.0);
            assert_eq!(c.mean, 0.0);
        }
        assert!(r.valid);
    }

    #[test]
    fn small_kinetic_run_is_well_formed() {
        let r = kinetic_stability_experiment(&small_setup(), 5, 40).unwrap();
        assert!(r.valid);
        assert!(r.min_bin >= 0.0);
        assert_eq!(r.measure_mass.len(), 2);
        assert!(r.measure_mass.iter().all(|m| m.mean > 0.0 && m.mean.is_finite()));
        assert!(r.integral_gap.iter().all(|g| g.gap.is_finite()));
    }
}
