//! Predictable integrands, spatial test functions and the pairings and norms
//! the convergence statements are phrased in.
//!
//! An [`AdaptedProcess`] stores one value per left node `t_0..t_{N-1}` together
//! with an information tag: `info[j]` is the largest grid node whose Brownian
//! increments the value at node `j` may depend on. The process is predictable
//! exactly when `info[j] ≤ j` for every node, which is what the Itô sums check.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::ensemble::{Ensemble, Replica};
use crate::error::{Error, Result};
use crate::stats::{pairwise_sum, Estimate};
use crate::wiener::{TimeGrid, WienerPath};

/// Uniform cell-centred grid on the unit torus `𝕋¹ = [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    cells: usize,
}

impl TorusGrid {
    pub const MIN_CELLS: usize = 16;

    pub fn new(cells: usize) -> Result<Self> {
        if cells < Self::MIN_CELLS {
            return Err(Error::Config(format!(
                "torus grid needs at least {} cells, got {cells}",
                Self::MIN_CELLS
            )));
        }
        Ok(TorusGrid { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Centre of cell `i`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Right face of cell `i`.
    pub fn face(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    pub fn right(&self, i: usize) -> usize {
        if i + 1 == self.cells {
            0
        } else {
            i + 1
        }
    }

    pub fn left(&self, i: usize) -> usize {
        if i == 0 {
            self.cells - 1
        } else {
            i - 1
        }
    }

    /// Equal-weight torus rule `Σ v_i Δx`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        pairwise_sum(values) * self.dx()
    }
}

/// Derivative of a periodic sample on the unit torus by FFT.
pub fn spectral_derivative(values: &[f64], order: u32) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        if n % 2 == 0 && k == n / 2 && order % 2 == 1 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let wave = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let factor = Complex::new(0.0, 2.0 * std::f64::consts::PI * wave).powu(order);
        *c *= factor;
    }
    inverse.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// A smooth periodic function sampled on a [`TorusGrid`] with its first two
/// derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    grid: TorusGrid,
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl TestFunction {
    /// Samples `f` and differentiates spectrally.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.centers().into_iter().map(f).collect();
        let d1 = spectral_derivative(&values, 1);
        let d2 = spectral_derivative(&values, 2);
        TestFunction { grid, values, d1, d2 }
    }

    /// Samples `f` with analytic derivatives, rejecting derivative arrays that
    /// disagree with spectral differentiation beyond `1e-8` (relative to the
    /// derivative's magnitude).
    pub fn from_analytic(
        grid: TorusGrid,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
        d2f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let xs = grid.centers();
        let values: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let d1: Vec<f64> = xs.iter().map(|&x| df(x)).collect();
        let d2: Vec<f64> = xs.iter().map(|&x| d2f(x)).collect();
        for (order, given) in [(1u32, &d1), (2, &d2)] {
            let spectral = spectral_derivative(&values, order);
            let scale = given.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let err = spectral
                .iter()
                .zip(given.iter())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if err > 1e-8 * scale {
                return Err(Error::InvalidArgument(format!(
                    "derivative of order {order} inconsistent with samples (error {err:.3e})"
                )));
            }
        }
        if values.iter().chain(&d1).chain(&d2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("test function must be finite".into()));
        }
        Ok(TestFunction { grid, values, d1, d2 })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        let n = grid.cells();
        TestFunction { grid, values: vec![c; n], d1: vec![0.0; n], d2: vec![0.0; n] }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivative(&self) -> &[f64] {
        &self.d1
    }

    pub fn second_derivative(&self) -> &[f64] {
        &self.d2
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ φ v dx` by the torus rule.
    pub fn integrate_against(&self, v: &[f64]) -> f64 {
        let prods: Vec<f64> = self.values.iter().zip(v).map(|(a, b)| a * b).collect();
        self.grid.integrate(&prods)
    }
}

/// Integrability exponent `p > 2` and its conjugates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSet {
    p: f64,
}

impl ExponentSet {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 2.0 && p.is_finite()) {
            return Err(Error::Config(format!("exponent p must exceed 2, got {p}")));
        }
        Ok(ExponentSet { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `p' = p/(p-1)`.
    pub fn conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `p'' = p/(p-2)`, the conjugate of `p/2`.
    pub fn half_conjugate(&self) -> f64 {
        self.p / (self.p - 2.0)
    }
}

/// Value shape of an [`AdaptedProcess`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `rows × cols` matrix (scalars are `1 × 1`).
    Matrix { rows: usize, cols: usize },
    /// Spatial field with `cols` components per cell.
    Field { cells: usize, cols: usize },
}

impl Shape {
    pub const SCALAR: Shape = Shape::Matrix { rows: 1, cols: 1 };

    pub fn len(&self) -> usize {
        match *self {
            Shape::Matrix { rows, cols } => rows * cols,
            Shape::Field { cells, cols } => cells * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cols(&self) -> usize {
        match *self {
            Shape::Matrix { cols, .. } | Shape::Field { cols, .. } => cols,
        }
    }
}

/// What randomness a constructor's values read, relative to the node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reads {
    /// Deterministic or time-zero randomness only.
    Initial,
    /// Paths up to and including the current node.
    Current,
    /// Paths up to `k` nodes ahead of the current one (not predictable for `k > 0`).
    Lookahead(usize),
}

impl Reads {
    fn horizon(self, j: usize) -> usize {
        match self {
            Reads::Initial => 0,
            Reads::Current => j,
            Reads::Lookahead(k) => j + k,
        }
    }
}

/// A grid-sampled process with values at the left nodes `t_0..t_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    grid: TimeGrid,
    shape: Shape,
    values: Vec<f64>,
    info: Vec<usize>,
}

impl AdaptedProcess {
    pub fn new(grid: TimeGrid, shape: Shape, values: Vec<f64>, info: Vec<usize>) -> Result<Self> {
        let n = grid.steps();
        if values.len() != n * shape.len() || info.len() != n {
            return Err(Error::GridMismatch(format!(
                "process storage does not match {n} nodes of shape {shape:?}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("process values must be finite".into()));
        }
        Ok(AdaptedProcess { grid, shape, values, info })
    }

    pub fn zeros(grid: TimeGrid, shape: Shape) -> Self {
        AdaptedProcess {
            grid,
            shape,
            values: vec![0.0; grid.steps() * shape.len()],
            info: vec![0; grid.steps()],
        }
    }

    /// Scalar process `f(j, t_j)`.
    pub fn scalar(grid: TimeGrid, reads: Reads, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        let values = (0..grid.steps()).map(|j| f(j, grid.time(j))).collect();
        let info = (0..grid.steps()).map(|j| reads.horizon(j)).collect();
        Self::new(grid, Shape::SCALAR, values, info)
    }

    /// Process of the given shape filled node by node by `f(j, t_j, out)`.
    pub fn build(
        grid: TimeGrid,
        shape: Shape,
        reads: Reads,
        mut f: impl FnMut(usize, f64, &mut [f64]),
    ) -> Result<Self> {
        let len = shape.len();
        let mut values = vec![0.0; grid.steps() * len];
        for (j, chunk) in values.chunks_mut(len.max(1)).enumerate().take(grid.steps()) {
            f(j, grid.time(j), chunk);
        }
        let info = (0..grid.steps()).map(|j| reads.horizon(j)).collect();
        Self::new(grid, shape, values, info)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, j: usize) -> &[f64] {
        let len = self.shape.len();
        &self.values[j * len..(j + 1) * len]
    }

    pub fn info(&self, j: usize) -> usize {
        self.info[j]
    }

    /// Fails on the first node whose value reads randomness from its future.
    pub fn check_predictable(&self) -> Result<()> {
        match self.info.iter().enumerate().find(|(j, &r)| r > *j) {
            Some((node, &reads)) => Err(Error::Predictability { node, reads }),
            None => Ok(()),
        }
    }

    fn check_same_layout(&self, other: &AdaptedProcess) -> Result<()> {
        if !self.grid.same_as(&other.grid) || self.shape != other.shape {
            return Err(Error::GridMismatch(format!(
                "processes differ in grid or shape ({:?} vs {:?})",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// `a·self + b·other`; the information tag is the nodewise maximum.
    pub fn linear_combination(&self, a: f64, other: &AdaptedProcess, b: f64) -> Result<Self> {
        self.check_same_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        let info = self.info.iter().zip(&other.info).map(|(x, y)| *x.max(y)).collect();
        Ok(AdaptedProcess { grid: self.grid, shape: self.shape, values, info })
    }

    pub fn difference(&self, other: &AdaptedProcess) -> Result<Self> {
        self.linear_combination(1.0, other, -1.0)
    }

    /// Time series of storage entry `e`.
    pub fn entry_series(&self, e: usize) -> Vec<f64> {
        let len = self.shape.len();
        (0..self.grid.steps()).map(|j| self.values[j * len + e]).collect()
    }

    /// Applies a causal operator (output at node `j` reads inputs at nodes
    /// `≤ j` only) to every entry's time series. The tag becomes the running
    /// maximum of the input tag.
    pub fn causal_map(&self, op: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let len = self.shape.len();
        let n = self.grid.steps();
        let mut values = vec![0.0; n * len];
        for e in 0..len {
            let out = op(&self.entry_series(e));
            if out.len() != n {
                return Err(Error::GridMismatch("causal operator changed the series length".into()));
            }
            for (j, v) in out.into_iter().enumerate() {
                values[j * len + e] = v;
            }
        }
        let mut info = Vec::with_capacity(n);
        let mut running = 0;
        for &r in &self.info {
            running = running.max(r);
            info.push(running);
        }
        Self::new(self.grid, self.shape, values, info)
    }

    /// Pointwise norm: Frobenius for matrices, spatial `L¹` of the Euclidean
    /// component norm for fields.
    pub fn norm_at(&self, j: usize) -> f64 {
        let v = self.at(j);
        match self.shape {
            Shape::Matrix { .. } => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Shape::Field { cells, cols } => {
                let per_cell: Vec<f64> = (0..cells)
                    .map(|i| v[i * cols..(i + 1) * cols].iter().map(|x| x * x).sum::<f64>().sqrt())
                    .collect();
                pairwise_sum(&per_cell) / cells as f64
            }
        }
    }

    /// `(Σ_j |V(t_j)|^p Δt)^{1/p}`.
    pub fn time_norm(&self, p_t: f64) -> f64 {
        let terms: Vec<f64> = (0..self.grid.steps()).map(|j| self.norm_at(j).powf(p_t)).collect();
        (pairwise_sum(&terms) * self.grid.dt()).powf(1.0 / p_t)
    }
}

/// `⟨β, V⟩` at every node: a `1 × cols` matrix process.
pub fn pair(beta: &TestFunction, v: &AdaptedProcess) -> Result<AdaptedProcess> {
    let Shape::Field { cells, cols } = v.shape() else {
        return Err(Error::GridMismatch("pairing needs a field-valued process".into()));
    };
    if cells != beta.grid().cells() {
        return Err(Error::GridMismatch(format!(
            "test function has {} cells, process has {cells}",
            beta.grid().cells()
        )));
    }
    let n = v.grid().steps();
    let mut values = vec![0.0; n * cols];
    let mut prods = vec![0.0; cells];
    for j in 0..n {
        let field = v.at(j);
        for c in 0..cols {
            for i in 0..cells {
                prods[i] = beta.values()[i] * field[i * cols + c];
            }
            values[j * cols + c] = beta.grid().integrate(&prods);
        }
    }
    AdaptedProcess::new(*v.grid(), Shape::Matrix { rows: 1, cols }, values, v.info.clone())
}

/// Monte Carlo `(E ‖V‖_{L^{p_t}}^{p_ω})^{1/p_ω}`.
pub fn lp_norm(ensemble: &[AdaptedProcess], p_omega: f64, p_t: f64) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument("norm of an empty ensemble".into()));
    }
    if p_omega < 1.0 || p_t < 1.0 {
        return Err(Error::InvalidArgument(format!("exponents must be at least 1 (got {p_omega}, {p_t})")));
    }
    let terms: Vec<f64> = ensemble.iter().map(|v| v.time_norm(p_t).powf(p_omega)).collect();
    Ok(lp_norm_from_time_norms(&terms, p_omega))
}

/// Final step of [`lp_norm`] when the per-replica `‖V‖^{p_ω}` are already known.
pub fn lp_norm_from_time_norms(powered: &[f64], p_omega: f64) -> f64 {
    (pairwise_sum(powered) / powered.len() as f64).powf(1.0 / p_omega)
}

/// Test random variables `Y` used as a finite stand-in for `L²(Ω)` duals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestVariable {
    One,
    /// `W(T)`.
    Terminal,
    /// `W(T)² − T`.
    TerminalSquare,
    /// `sin(2πω₀)`.
    SinInitial,
    /// `cos(2πω₀)`.
    CosInitial,
    /// `W(T/2)`.
    Midpoint,
}

impl TestVariable {
    pub fn default_family() -> Vec<TestVariable> {
        use TestVariable::*;
        vec![One, Terminal, TerminalSquare, SinInitial, CosInitial, Midpoint]
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestVariable::One => "one",
            TestVariable::Terminal => "w_T",
            TestVariable::TerminalSquare => "w_T^2-T",
            TestVariable::SinInitial => "sin_omega0",
            TestVariable::CosInitial => "cos_omega0",
            TestVariable::Midpoint => "w_T/2",
        }
    }

    /// Evaluates on the limit path (first component) and `ω₀`.
    pub fn eval(&self, omega0: f64, w: &WienerPath) -> f64 {
        let tau = std::f64::consts::TAU;
        let g = w.grid();
        match self {
            TestVariable::One => 1.0,
            TestVariable::Terminal => w.terminal(0),
            TestVariable::TerminalSquare => w.terminal(0).powi(2) - g.horizon(),
            TestVariable::SinInitial => (tau * omega0).sin(),
            TestVariable::CosInitial => (tau * omega0).cos(),
            TestVariable::Midpoint => w.value(g.node_at_or_before(0.5 * g.horizon()), 0),
        }
    }

    /// `E[Y²]` on a horizon `T`.
    pub fn second_moment(&self, horizon: f64) -> f64 {
        match self {
            TestVariable::One => 1.0,
            TestVariable::Terminal => horizon,
            TestVariable::TerminalSquare => 2.0 * horizon * horizon,
            TestVariable::SinInitial | TestVariable::CosInitial => 0.5,
            TestVariable::Midpoint => 0.5 * horizon,
        }
    }

    pub fn eval_replica(&self, rep: &Replica) -> f64 {
        self.eval(rep.omega0, &rep.w)
    }
}

/// Deterministic matrix-valued function `ζ(t)` tabulated as exact-ish cell
/// integrals `∫_{t_j}^{t_{j+1}} ζ dt` (Simpson per cell), so that pairing with a
/// piecewise-constant predictable process is `Σ_j V(t_j) : Z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunction {
    grid: TimeGrid,
    len: usize,
    cell_integrals: Vec<f64>,
}

impl DualFunction {
    pub fn tabulate(grid: TimeGrid, len: usize, f: impl Fn(f64, &mut [f64])) -> Self {
        let mut cell_integrals = vec![0.0; grid.steps() * len];
        let mut a = vec![0.0; len];
        let mut m = vec![0.0; len];
        let mut b = vec![0.0; len];
        let h = grid.dt();
        for j in 0..grid.steps() {
            let (t0, t1) = (grid.time(j), grid.time(j + 1));
            f(t0, &mut a);
            f(0.5 * (t0 + t1), &mut m);
            f(t1, &mut b);
            for e in 0..len {
                cell_integrals[j * len + e] = h / 6.0 * (a[e] + 4.0 * m[e] + b[e]);
            }
        }
        DualFunction { grid, len, cell_integrals }
    }

    pub fn scalar(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::tabulate(grid, 1, |t, out| out[0] = f(t))
    }

    /// `∫₀ᵀ ζ : V dt`.
    pub fn pair(&self, v: &AdaptedProcess) -> Result<f64> {
        if !self.grid.same_as(v.grid()) || self.len != v.shape().len() {
            return Err(Error::GridMismatch("dual function does not match process layout".into()));
        }
        let prods: Vec<f64> = self.cell_integrals.iter().zip(v.values()).map(|(z, x)| z * x).collect();
        Ok(pairwise_sum(&prods))
    }
}

/// Result of a maximised weak-gap statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub gap: f64,
    pub stderr: f64,
    /// `(dual index, test-variable index)` attaining the maximum.
    pub argmax: Option<(usize, usize)>,
}

impl GapEstimate {
    pub const ZERO: GapEstimate = GapEstimate { gap: 0.0, stderr: 0.0, argmax: None };

    /// Maximum of `|mean|` over the columns of a per-replica feature table.
    pub fn from_columns(rows: &[Vec<f64>], width: usize, labels: impl Fn(usize) -> (usize, usize)) -> Self {
        let mut best = GapEstimate::ZERO;
        for c in 0..width {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let e = Estimate::from_samples(&col);
            if best.argmax.is_none() || e.mean.abs() > best.gap {
                best = GapEstimate { gap: e.mean.abs(), stderr: e.stderr, argmax: Some(labels(c)) };
            }
        }
        best
    }
}

/// `max_{ζ,Y} |Ê[Y ∫₀ᵀ ζ : (Vₙ − V) dt]|` over an ensemble. `sample` returns
/// the pair `(Vₙ, V)` for one replica.
pub fn weak_gap<F>(
    ensemble: &Ensemble,
    duals: &[DualFunction],
    tests: &[TestVariable],
    sample: F,
) -> Result<GapEstimate>
where
    F: Fn(&Replica) -> Result<(AdaptedProcess, AdaptedProcess)> + Sync,
{
    if duals.is_empty() || tests.is_empty() {
        return Ok(GapEstimate::ZERO);
    }
    let rows = ensemble.map(|rep| {
        let (vn, v) = sample(rep)?;
        let diff = vn.difference(&v)?;
        let ys: Vec<f64> = tests.iter().map(|y| y.eval_replica(rep)).collect();
        let mut row = Vec::with_capacity(duals.len() * tests.len());
        for d in duals {
            let z = d.pair(&diff)?;
            row.extend(ys.iter().map(|y| y * z));
        }
        Ok(row)
    })?;
    let nt = tests.len();
    Ok(GapEstimate::from_columns(&rows, duals.len() * nt, |c| (c / nt, c % nt)))
}
