//! Monte Carlo statistics for `I(n) = ∫⟨β,Vₙ⟩dWₙ − ∫⟨β,V⟩dW`: weak and strong
//! gaps along an `n`-ladder, the mollifier split `I = I₁ + I₂ + I₃`, and the two
//! counterexample families where the translation estimate fails.

use std::f64::consts::TAU;

use crate::ensemble::{Ensemble, Replica};
use crate::error::{Error, Result};
use crate::ito::{ito_integral, quadratic_variation};
use crate::mollify::MollifierKernel;
use crate::processes::{pair, AdaptedProcess, DualFunction, GapEstimate, Reads, Shape, TestFunction, TestVariable, TorusGrid};
use crate::stats::{loglog_slope, Estimate};
use crate::wiener::{Coupling, WienerPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `max_Y |Ê[Y·I(n)]|`.
    Weak,
    /// `Ê|I(n)|²`.
    Strong,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Weak => "weak_gap",
            Mode::Strong => "strong_second_moment",
        }
    }
}

/// An integrand sequence `Vₙ` with its limit `V`. Both must already be
/// paired with `β` when the underlying objects are fields.
pub trait IntegrandFamily: Sync {
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess>;
    /// `Vₙ`, given the replica and the coupled driver `Wₙ`.
    fn member(&self, rep: &Replica, n: u32, wn: &WienerPath) -> Result<AdaptedProcess>;
}

/// Adapter turning two closures into an [`IntegrandFamily`].
pub struct FnFamily<L, M> {
    pub limit: L,
    pub member: M,
}

impl<L, M> IntegrandFamily for FnFamily<L, M>
where
    L: Fn(&Replica) -> Result<AdaptedProcess> + Sync,
    M: Fn(&Replica, u32, &WienerPath) -> Result<AdaptedProcess> + Sync,
{
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess> {
        (self.limit)(rep)
    }

    fn member(&self, rep: &Replica, n: u32, wn: &WienerPath) -> Result<AdaptedProcess> {
        (self.member)(rep, n, wn)
    }
}

/// The constant sequence `Vₙ = V`.
pub struct Unperturbed<F>(pub F);

impl<F: IntegrandFamily> IntegrandFamily for Unperturbed<F> {
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess> {
        self.0.limit(rep)
    }

    fn member(&self, rep: &Replica, _n: u32, _wn: &WienerPath) -> Result<AdaptedProcess> {
        self.0.limit(rep)
    }
}

fn base_limit(rep: &Replica) -> Result<AdaptedProcess> {
    let w = &rep.w;
    AdaptedProcess::scalar(*rep.grid(), Reads::Current, |j, _| 1.0 + 0.5 * w.value(j, 0))
}

/// `Vₙ = V + sin(2πnω₀)·g(t)` with `V = 1 + W/2`, `g(t) = cos 2πt`: an
/// oscillation in `ω` only, uniformly translation-regular in `t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeakInOmega;

impl IntegrandFamily for WeakInOmega {
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess> {
        base_limit(rep)
    }

    fn member(&self, rep: &Replica, n: u32, _wn: &WienerPath) -> Result<AdaptedProcess> {
        let a = (TAU * n as f64 * rep.omega0).sin();
        let w = &rep.w;
        AdaptedProcess::scalar(*rep.grid(), Reads::Current, |j, t| 1.0 + 0.5 * w.value(j, 0) + a * (TAU * t).cos())
    }
}

/// `Vₙ = V + sin(2πnt)·Z` with `Z = √2 sin(2πω₀)`: oscillation in `t`, for
/// which the translation estimate fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemporalOscillation;

impl TemporalOscillation {
    pub fn z(rep: &Replica) -> f64 {
        std::f64::consts::SQRT_2 * (TAU * rep.omega0).sin()
    }
}

impl IntegrandFamily for TemporalOscillation {
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess> {
        base_limit(rep)
    }

    fn member(&self, rep: &Replica, n: u32, _wn: &WienerPath) -> Result<AdaptedProcess> {
        let g = rep.grid();
        let need = (SINE_NODES_PER_PERIOD as f64 * n as f64 * g.horizon()).ceil() as usize;
        if g.steps() < need {
            return Err(Error::InvalidArgument(format!(
                "grid of {} steps does not resolve sin(2π·{n}t); need at least {need}",
                g.steps()
            )));
        }
        let z = Self::z(rep);
        let w = &rep.w;
        AdaptedProcess::scalar(*rep.grid(), Reads::Current, |j, t| 1.0 + 0.5 * w.value(j, 0) + (TAU * n as f64 * t).sin() * z)
    }
}

/// `Vₙ = cos(Wₙ(t)) + sin(2πt)/n → V = cos(W(t))` almost surely and uniformly.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlmostSure;

impl IntegrandFamily for AlmostSure {
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess> {
        let w = &rep.w;
        AdaptedProcess::scalar(*rep.grid(), Reads::Current, |j, _| w.value(j, 0).cos())
    }

    fn member(&self, rep: &Replica, n: u32, wn: &WienerPath) -> Result<AdaptedProcess> {
        AdaptedProcess::scalar(*rep.grid(), Reads::Current, |j, t| wn.value(j, 0).cos() + (TAU * t).sin() / n as f64)
    }
}

/// Field family `Vₙ(t,x) = v(t,x)(1 + sin 2πnx)`, `v = 1 + ½cos(2π(x − W(t)))`,
/// paired with `β`. Bounded in `L¹_x` uniformly but only weakly convergent in `x`.
#[derive(Debug, Clone)]
pub struct SpatialOscillation {
    pub beta: TestFunction,
}

impl SpatialOscillation {
    /// `β = exp(sin 2πx)` on `cells` cells.
    pub fn standard(cells: usize) -> Result<Self> {
        let torus = TorusGrid::new(cells)?;
        let beta = TestFunction::from_analytic(
            torus,
            |x| (TAU * x).sin().exp(),
            |x| TAU * (TAU * x).cos() * (TAU * x).sin().exp(),
            |x| {
                let (s, c) = (TAU * x).sin_cos();
                TAU * TAU * (c * c - s) * s.exp()
            },
        )?;
        Ok(SpatialOscillation { beta })
    }

    pub fn with_beta(beta: TestFunction) -> Self {
        SpatialOscillation { beta }
    }

    fn torus(&self) -> &TorusGrid {
        self.beta.grid()
    }

    /// The field `Vₙ` (`n = 0` gives `v`).
    pub fn field(&self, rep: &Replica, n: u32) -> Result<AdaptedProcess> {
        let torus = *self.torus();
        let cells = torus.cells();
        let w = &rep.w;
        AdaptedProcess::build(*rep.grid(), Shape::Field { cells, cols: 1 }, Reads::Current, |j, _, out| {
            let shift = w.value(j, 0);
            for (i, o) in out.iter_mut().enumerate() {
                let x = torus.center(i);
                let v = 1.0 + 0.5 * (TAU * (x - shift)).cos();
                *o = if n == 0 { v } else { v * (1.0 + (TAU * n as f64 * x).sin()) };
            }
        })
    }
}

impl IntegrandFamily for SpatialOscillation {
    fn limit(&self, rep: &Replica) -> Result<AdaptedProcess> {
        pair(&self.beta, &self.field(rep, 0)?)
    }

    fn member(&self, rep: &Replica, n: u32, _wn: &WienerPath) -> Result<AdaptedProcess> {
        pair(&self.beta, &self.field(rep, n)?)
    }
}

/// One `n` of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStat {
    pub n: u32,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Test variable attaining a weak gap.
    pub argmax: Option<TestVariable>,
}

fn integral_difference<F: IntegrandFamily + ?Sized>(
    rep: &Replica,
    coupling: &Coupling,
    n: u32,
    family: &F,
) -> Result<Vec<f64>> {
    let steps = rep.grid().steps();
    let wn = rep.driver(coupling, n)?;
    let a = ito_integral(&family.member(rep, n, &wn)?, &wn, steps)?;
    let b = ito_integral(&family.limit(rep)?, &rep.w, steps)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
}

pub fn weak_columns(rep: &Replica, tests: &[TestVariable], diff: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(tests.len() * diff.len());
    for y in tests {
        let yv = y.eval_replica(rep);
        row.extend(diff.iter().map(|d| yv * d));
    }
    row
}

/// Weak or strong statistic of `I(n)` for a single `n`.
pub fn integral_gap<F: IntegrandFamily + ?Sized>(
    ensemble: &Ensemble,
    coupling: &Coupling,
    n: u32,
    mode: Mode,
    tests: &[TestVariable],
    family: &F,
) -> Result<GapStat> {
    match mode {
        Mode::Strong => {
            let sq = ensemble.map(|rep| {
                let d = integral_difference(rep, coupling, n, family)?;
                Ok(d.iter().map(|x| x * x).sum::<f64>())
            })?;
            let e = Estimate::from_samples(&sq);
            Ok(GapStat { n, value: e.mean, stderr: e.stderr, samples: e.samples, argmax: None })
        }
        Mode::Weak => {
            if tests.is_empty() {
                return Err(Error::InvalidArgument("weak gap needs at least one test variable".into()));
            }
            let rows = ensemble.map(|rep| {
                let d = integral_difference(rep, coupling, n, family)?;
                Ok(weak_columns(rep, tests, &d))
            })?;
            let width = rows[0].len();
            let m = width / tests.len();
            let g = GapEstimate::from_columns(&rows, width, |c| (c / m, c % m));
            Ok(GapStat {
                n,
                value: g.gap,
                stderr: g.stderr,
                samples: ensemble.samples,
                argmax: g.argmax.map(|(y, _)| tests[y]),
            })
        }
    }
}

/// Pass criteria for a decreasing sequence of statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Passing log-log slope against `n`.
    pub max_slope: f64,
    /// Passing value of `stat(n_max) / stat(n_min)`.
    pub max_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { max_slope: -0.3, max_ratio: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub mode: Mode,
    pub entries: Vec<GapStat>,
}

impl ConvergenceReport {
    pub fn first(&self) -> &GapStat {
        &self.entries[0]
    }

    pub fn last(&self) -> &GapStat {
        &self.entries[self.entries.len() - 1]
    }

    /// `stat(n_max) / stat(n_min)`.
    pub fn ratio(&self) -> f64 {
        self.last().value / self.first().value
    }

    /// Log-log slope of the statistic against `n`; NaN when any entry is zero.
    pub fn slope(&self) -> f64 {
        if self.entries.len() < 2 || self.entries.iter().any(|e| e.value <= 0.0) {
            return f64::NAN;
        }
        let ns: Vec<f64> = self.entries.iter().map(|e| e.n as f64).collect();
        let vs: Vec<f64> = self.entries.iter().map(|e| e.value).collect();
        loglog_slope(&ns, &vs)
    }

    pub fn is_decreasing(&self, th: &Thresholds) -> bool {
        self.slope() <= th.max_slope || self.ratio() <= th.max_ratio
    }

    /// Every entry nonincreasing in `n`, allowing `k` standard errors of slack.
    pub fn is_monotone(&self, k: f64) -> bool {
        self.entries.windows(2).all(|w| w[1].value <= w[0].value + k * (w[0].stderr + w[1].stderr))
    }
}

/// Runs [`integral_gap`] along an `n`-ladder on the same replicas.
pub fn convergence_sweep<F: IntegrandFamily + ?Sized>(
    ensemble: &Ensemble,
    coupling: &Coupling,
    ladder: &[u32],
    mode: Mode,
    tests: &[TestVariable],
    family: &F,
) -> Result<ConvergenceReport> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty n-ladder".into()));
    }
    let entries = ladder
        .iter()
        .map(|&n| integral_gap(ensemble, coupling, n, mode, tests, family))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { mode, entries })
}

/// `Ê∫₀ᵀ |Vₙ − V|² dt`: the strong pairing distance.
pub fn pairing_distance<F: IntegrandFamily + ?Sized>(
    ensemble: &Ensemble,
    coupling: &Coupling,
    n: u32,
    family: &F,
) -> Result<Estimate> {
    let qv = ensemble.map(|rep| {
        let wn = rep.driver(coupling, n)?;
        let d = family.member(rep, n, &wn)?.difference(&family.limit(rep)?)?;
        Ok(quadratic_variation(&d))
    })?;
    Ok(Estimate::from_samples(&qv))
}

/// The split `I(n) = I₁(ρ,n) + I₂(n,ρ) + I₃(ρ)` with
/// `I₁ = ∫(Vₙ − R_ρVₙ)dWₙ`, `I₂ = ∫R_ρVₙ dWₙ − ∫R_ρV dW`, `I₃ = ∫(R_ρV − V)dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub rho: f64,
    pub n: u32,
    pub samples: usize,
    /// `Ê∫|Vₙ − R_ρVₙ|²`, equal to `E I₁²` by the isometry.
    pub i1_sq: Estimate,
    /// `Ê∫|R_ρV − V|²`.
    pub i3_sq: Estimate,
    /// Direct `Ê I₁²`, `Ê I₃²`, `Ê|I₂|²`, `Ê|I|²`.
    pub i1_sq_direct: Estimate,
    pub i3_sq_direct: Estimate,
    pub i2_sq: Estimate,
    pub total_sq: Estimate,
    pub gap_i2: GapEstimate,
    pub gap_total: GapEstimate,
    /// `|Ê[Y I]| ≤ |Ê[Y I₂]| + ‖Y‖(√ÊI₁² + √ÊI₃²) + 3 stderr` for every `Y`.
    pub triangle_holds: bool,
    /// `Ê|I|² ≤ 3(ÊI₁² + ÊI₃² + Ê|I₂|²) + 9 stderr`.
    pub cauchy_schwarz_holds: bool,
}

struct SplitRow {
    qv1: f64,
    qv3: f64,
    i1: Vec<f64>,
    i2: Vec<f64>,
    i3: Vec<f64>,
    ys: Vec<f64>,
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn decompose<F: IntegrandFamily + ?Sized>(
    ensemble: &Ensemble,
    coupling: &Coupling,
    n: u32,
    rho: f64,
    tests: &[TestVariable],
    family: &F,
) -> Result<DecompositionReport> {
    if tests.is_empty() {
        return Err(Error::InvalidArgument("decomposition needs at least one test variable".into()));
    }
    let kernel = MollifierKernel::for_grid(rho, &ensemble.grid)?;
    let steps = ensemble.grid.steps();
    let rows = ensemble.map(|rep| {
        let wn = rep.driver(coupling, n)?;
        let vn = family.member(rep, n, &wn)?;
        let v = family.limit(rep)?;
        let rvn = kernel.mollify_process(&vn)?;
        let rv = kernel.mollify_process(&v)?;
        let d1 = vn.difference(&rvn)?;
        let d3 = rv.difference(&v)?;
        let i1 = ito_integral(&d1, &wn, steps)?;
        let i3 = ito_integral(&d3, &rep.w, steps)?;
        let a = ito_integral(&rvn, &wn, steps)?;
        let b = ito_integral(&rv, &rep.w, steps)?;
        let i2 = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(SplitRow {
            qv1: quadratic_variation(&d1),
            qv3: quadratic_variation(&d3),
            i1,
            i2,
            i3,
            ys: tests.iter().map(|y| y.eval_replica(rep)).collect(),
        })
    })?;
    let est = |f: &dyn Fn(&SplitRow) -> f64| Estimate::from_samples(&rows.iter().map(f).collect::<Vec<_>>());
    let total = |r: &SplitRow| -> Vec<f64> { (0..r.i1.len()).map(|c| r.i1[c] + r.i2[c] + r.i3[c]).collect() };
    let i1_sq = est(&|r| r.qv1);
    let i3_sq = est(&|r| r.qv3);
    let i1_sq_direct = est(&|r| sq(&r.i1));
    let i3_sq_direct = est(&|r| sq(&r.i3));
    let i2_sq = est(&|r| sq(&r.i2));
    let total_sq = est(&|r| sq(&total(r)));

    let m = rows[0].i1.len();
    let width = tests.len() * m;
    let cols_of = |f: &dyn Fn(&SplitRow) -> Vec<f64>| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let v = f(r);
                r.ys.iter().flat_map(|y| v.iter().map(move |x| y * x)).collect()
            })
            .collect()
    };
    let w2 = cols_of(&|r| r.i2.clone());
    let wt = cols_of(&|r| total(r));
    let label = |c: usize| (c / m, c % m);
    let gap_i2 = GapEstimate::from_columns(&w2, width, label);
    let gap_total = GapEstimate::from_columns(&wt, width, label);

    let root1 = i1_sq.mean.max(i1_sq_direct.mean).sqrt();
    let root3 = i3_sq.mean.max(i3_sq_direct.mean).sqrt();
    let mut triangle_holds = true;
    for c in 0..width {
        let y = c / m;
        let y_norm = Estimate::from_samples(&rows.iter().map(|r| r.ys[y] * r.ys[y]).collect::<Vec<_>>()).mean.sqrt();
        let t = Estimate::from_samples(&wt.iter().map(|r| r[c]).collect::<Vec<_>>());
        let two = Estimate::from_samples(&w2.iter().map(|r| r[c]).collect::<Vec<_>>());
        if t.mean.abs() > two.mean.abs() + y_norm * (root1 + root3) + 3.0 * t.stderr + 1e-12 {
            triangle_holds = false;
        }
    }
    let cs_rhs = 3.0 * (i1_sq_direct.mean + i3_sq_direct.mean + i2_sq.mean);
    let cauchy_schwarz_holds = total_sq.mean <= cs_rhs + 9.0 * total_sq.stderr + 1e-12;

    Ok(DecompositionReport {
        rho,
        n,
        samples: ensemble.samples,
        i1_sq,
        i3_sq,
        i1_sq_direct,
        i3_sq_direct,
        i2_sq,
        total_sq,
        gap_i2,
        gap_total,
        triangle_holds,
        cauchy_schwarz_holds,
    })
}

/// `Fₙ(ω,t) = sin(2πnω₀) sin(2πnt)` on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineCounterexample {
    pub n: u32,
    /// `Ê|∫₀¹ Fₙ dWₙ|²`.
    pub second_moment: Estimate,
    /// `Ê∫Fₙ·1 dt`.
    pub pairing_one: Estimate,
    /// `Ê∫Fₙ·sin(2πt) dt`.
    pub pairing_sine: Estimate,
}

/// Nodes per oscillation period below which the sine example is rejected.
pub const SINE_NODES_PER_PERIOD: usize = 4;

pub fn counterexample_sine(ensemble: &Ensemble, coupling: &Coupling, n: u32) -> Result<SineCounterexample> {
    let g = ensemble.grid;
    if n == 0 {
        return Err(Error::InvalidArgument("counterexample index n must be at least 1".into()));
    }
    if g.steps() < SINE_NODES_PER_PERIOD * n as usize {
        return Err(Error::InvalidArgument(format!(
            "grid of {} steps does not resolve sin(2π·{n}t); need at least {}",
            g.steps(),
            SINE_NODES_PER_PERIOD * n as usize
        )));
    }
    let one = DualFunction::scalar(g, |_| 1.0);
    let sine = DualFunction::scalar(g, |t| (TAU * t).sin());
    let rows = ensemble.map(|rep| {
        let a = (TAU * n as f64 * rep.omega0).sin();
        let f = AdaptedProcess::scalar(g, Reads::Initial, |_, t| a * (TAU * n as f64 * t).sin())?;
        let wn = rep.driver(coupling, n)?;
        let i = ito_integral(&f, &wn, g.steps())?[0];
        Ok([i * i, one.pair(&f)?, sine.pair(&f)?])
    })?;
    let col = |k: usize| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    Ok(SineCounterexample { n, second_moment: col(0), pairing_one: col(1), pairing_sine: col(2) })
}

/// `fₙ = √n·1_{[0,1/n]}` on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeCounterexample {
    pub n: u32,
    /// Distribution of `∫fₙ dWₙ`.
    pub integral: Estimate,
    pub variance: f64,
    pub variance_stderr: f64,
    /// `‖fₙ‖²_{L²}` on the grid.
    pub l2_norm_sq: f64,
    /// `∫fₙ(t)·t dt`.
    pub pairing_t: f64,
}

/// Steps per spike width below which the spike is rejected.
pub const SPIKE_STEPS_PER_WIDTH: usize = 8;

pub fn spike_process(grid: crate::wiener::TimeGrid, n: u32) -> Result<AdaptedProcess> {
    let steps = grid.steps();
    let nn = n as usize;
    if n == 0 || steps < SPIKE_STEPS_PER_WIDTH * nn || steps % nn != 0 {
        return Err(Error::InvalidArgument(format!(
            "spike 1/{n} unresolved on {steps} steps: need a multiple of {n} that is at least {}",
            SPIKE_STEPS_PER_WIDTH * nn
        )));
    }
    let width = steps / nn;
    let height = (n as f64).sqrt();
    AdaptedProcess::scalar(grid, Reads::Initial, |j, _| if j < width { height } else { 0.0 })
}

pub fn counterexample_spike(ensemble: &Ensemble, coupling: &Coupling, n: u32) -> Result<SpikeCounterexample> {
    let g = ensemble.grid;
    if (g.horizon() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("spike counterexample lives on [0, 1]".into()));
    }
    let f = spike_process(g, n)?;
    let vals = ensemble.map(|rep| {
        let wn = rep.driver(coupling, n)?;
        Ok(ito_integral(&f, &wn, g.steps())?[0])
    })?;
    let integral = Estimate::from_samples(&vals);
    let dev: Vec<f64> = vals.iter().map(|x| (x - integral.mean).powi(2)).collect();
    let dev = Estimate::from_samples(&dev);
    let k = vals.len() as f64;
    let t = DualFunction::scalar(g, |t| t);
    Ok(SpikeCounterexample {
        n,
        integral,
        variance: dev.mean * k / (k - 1.0),
        variance_stderr: dev.stderr,
        l2_norm_sq: quadratic_variation(&f),
        pairing_t: t.pair(&f)?,
    })
}

/// Per-`n` monitor of `E‖Vₙ‖^p_{L^p_t L¹_x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub ladder: Vec<u32>,
    pub norms: Vec<Estimate>,
    pub factor: f64,
    pub valid: bool,
}

/// Runs the field family on the `n`-ladder in the given mode, together with the
/// uniform `L^p_t L¹_x` bound. Growth of the bound beyond `factor` times its
/// first value marks the experiment invalid.
pub fn l1_torus_mode(
    ensemble: &Ensemble,
    coupling: &Coupling,
    ladder: &[u32],
    mode: Mode,
    tests: &[TestVariable],
    family: &SpatialOscillation,
    p: f64,
    factor: f64,
) -> Result<(ConvergenceReport, BoundCheck)> {
    let report = convergence_sweep(ensemble, coupling, ladder, mode, tests, family)?;
    let norms = ladder
        .iter()
        .map(|&n| {
            let s = ensemble.map(|rep| Ok(family.field(rep, n)?.time_norm(p).powf(p)))?;
            Ok(Estimate::from_samples(&s))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = norms[0].mean;
    let valid = norms.iter().all(|e| e.mean.is_finite() && e.mean <= factor * base);
    Ok((report, BoundCheck { ladder: ladder.to_vec(), norms, factor, valid }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::TimeGrid;

    fn ens(steps: usize, samples: usize, seed: u64) -> Ensemble {
        Ensemble::new(TimeGrid::new(1.0, steps).unwrap(), 1, seed, samples).unwrap()
    }

    fn family() -> Vec<TestVariable> {
        TestVariable::default_family()
    }

    #[test]
    fn identical_integrals_have_zero_gap() {
        let e = ens(64, 500, 1);
        for mode in [Mode::Weak, Mode::Strong] {
            let s = integral_gap(&e, &Coupling::Identity, 4, mode, &family(), &Unperturbed(WeakInOmega)).unwrap();
            assert_eq!(s.value, 0.0);
        }
    }

    #[test]
    fn weak_in_omega_gap_decays() {
        let e = ens(128, 10_000, 2);
        let r = convergence_sweep(&e, &Coupling::default(), &[1, 16], Mode::Weak, &family(), &WeakInOmega).unwrap();
        assert!(r.ratio() <= 1.0 / 3.0, "{r:?}");
        // leading term (1/√2 − 1)·E[W(T)²] at n = 1
        assert!((r.first().value - (1.0 - 0.5f64.sqrt())).abs() < 4.0 * r.first().stderr, "{r:?}");
    }

    #[test]
    fn strong_dominates_weak() {
        let e = ens(64, 4000, 3);
        let tests = family();
        for n in [1, 4] {
            let w = integral_gap(&e, &Coupling::default(), n, Mode::Weak, &tests, &WeakInOmega).unwrap();
            let s = integral_gap(&e, &Coupling::default(), n, Mode::Strong, &tests, &WeakInOmega).unwrap();
            let y = w.argmax.unwrap().second_moment(1.0);
            assert!(w.value * w.value / y <= s.value + 3.0 * s.stderr);
        }
    }

    #[test]
    fn temporal_oscillation_does_not_decay() {
        let e = ens(256, 4000, 4);
        let z2 = Estimate::from_samples(&e.map(|r| Ok(TemporalOscillation::z(r).powi(2))).unwrap()).mean;
        let r = convergence_sweep(&e, &Coupling::default(), &[1, 4, 16, 64], Mode::Strong, &[], &TemporalOscillation).unwrap();
        for s in &r.entries {
            assert!(s.value >= 0.5 * z2 - 3.0 * s.stderr, "{s:?}");
        }
    }

    #[test]
    fn isometry_consistency_under_identity_coupling() {
        let e = ens(128, 4000, 5);
        let fam = SpatialOscillation::standard(64).unwrap();
        for n in [2, 8] {
            let s = integral_gap(&e, &Coupling::Identity, n, Mode::Strong, &[], &fam).unwrap();
            let d = pairing_distance(&e, &Coupling::Identity, n, &fam).unwrap();
            let tol = 3.0 * (s.stderr * s.stderr + d.stderr * d.stderr).sqrt();
            assert!((s.value - d.mean).abs() <= tol, "{s:?} {d:?}");
        }
    }

    #[test]
    fn zero_beta_annihilates() {
        let e = ens(32, 200, 6);
        let torus = TorusGrid::new(32).unwrap();
        let fam = SpatialOscillation::with_beta(TestFunction::constant(torus, 0.0));
        let s = integral_gap(&e, &Coupling::default(), 4, Mode::Strong, &[], &fam).unwrap();
        assert_eq!(s.value, 0.0);
        let u = integral_gap(&e, &Coupling::Identity, 4, Mode::Strong, &[], &Unperturbed(SpatialOscillation::standard(32).unwrap())).unwrap();
        assert_eq!(u.value, 0.0);
    }

    #[test]
    fn spatial_oscillation_converges_strongly() {
        let e = ens(128, 2000, 7);
        let fam = SpatialOscillation::standard(256).unwrap();
        let (r, bound) = l1_torus_mode(&e, &Coupling::default(), &[2, 8, 32], Mode::Strong, &[], &fam, 3.0, 2.0).unwrap();
        assert!(bound.valid);
        assert!(r.last().value <= 0.25 * r.first().value, "{r:?}");
    }

    #[test]
    fn decomposition_sweep_in_rho() {
        let e = ens(256, 2000, 8);
        let tests = family();
        let mut last: Option<DecompositionReport> = None;
        for rho in [0.2, 0.1, 0.05] {
            let d = decompose(&e, &Coupling::default(), 4, rho, &tests, &WeakInOmega).unwrap();
            assert!(d.triangle_holds && d.cauchy_schwarz_holds, "{d:?}");
            assert!(d.i1_sq.mean >= 0.0 && d.i3_sq.mean >= 0.0);
            if let Some(prev) = &last {
                assert!(d.i1_sq.mean < prev.i1_sq.mean);
                assert!(d.i3_sq.mean < prev.i3_sq.mean);
            }
            last = Some(d);
        }
    }

    #[test]
    fn decomposition_of_identical_integrals_has_zero_middle_term() {
        let e = ens(64, 100, 9);
        let d = decompose(&e, &Coupling::Identity, 3, 0.1, &family(), &Unperturbed(WeakInOmega)).unwrap();
        assert_eq!(d.i2_sq.mean, 0.0);
        assert_eq!(d.gap_i2.gap, 0.0);
    }

    #[test]
    fn middle_term_gap_decreases_in_n() {
        let e = ens(128, 10_000, 10);
        let tests = family();
        let gaps: Vec<GapStat> = [1u32, 4, 16]
            .iter()
            .map(|&n| {
                let d = decompose(&e, &Coupling::default(), n, 0.1, &tests, &WeakInOmega).unwrap();
                GapStat { n, value: d.gap_i2.gap, stderr: d.gap_i2.stderr, samples: d.samples, argmax: None }
            })
            .collect();
        let r = ConvergenceReport { mode: Mode::Weak, entries: gaps };
        assert!(r.is_decreasing(&Thresholds::default()), "{r:?}");
    }

    #[test]
    fn sine_counterexample_keeps_quarter() {
        let e = ens(256, 20_000, 11);
        for n in [4, 16, 64] {
            let c = counterexample_sine(&e, &Coupling::default(), n).unwrap();
            assert!((c.second_moment.mean - 0.25).abs() < 0.03 * 0.25 + 3.0 * c.second_moment.stderr, "{c:?}");
            assert!(c.pairing_one.mean.abs() <= 3.0 * c.pairing_one.stderr + 1e-12);
            assert!(c.pairing_sine.mean.abs() <= 3.0 * c.pairing_sine.stderr + 1e-12);
        }
        assert!(counterexample_sine(&e, &Coupling::default(), 128).is_err());
    }

    #[test]
    fn spike_counterexample() {
        let e = ens(256, 20_000, 12);
        for n in [4u32, 16] {
            let c = counterexample_spike(&e, &Coupling::default(), n).unwrap();
            assert!((c.variance - 1.0).abs() < 0.05, "{c:?}");
            assert!(c.integral.mean.abs() <= 3.0 * c.integral.stderr);
            assert!((c.l2_norm_sq - 1.0).abs() < 1e-12);
            let nf = n as f64;
            assert!((c.pairing_t - 1.0 / (2.0 * nf.powf(1.5))).abs() < 1e-10);
        }
        assert!(counterexample_spike(&e, &Coupling::default(), 64).is_err());
        assert!(counterexample_spike(&ens(100, 10, 0), &Coupling::default(), 8).is_err());
    }

    #[test]
    fn almost_sure_family_converges_strongly() {
        let e = ens(128, 2000, 13);
        let r = convergence_sweep(&e, &Coupling::default(), &[1, 4, 16], Mode::Strong, &[], &AlmostSure).unwrap();
        assert!(r.is_decreasing(&Thresholds::default()));
        let d: Vec<f64> = [1u32, 4, 16].iter().map(|&n| pairing_distance(&e, &Coupling::default(), n, &AlmostSure).unwrap().mean).collect();
        assert!(d[0] > d[1] && d[1] > d[2]);
    }
}
