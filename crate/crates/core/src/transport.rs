//! Explicit finite-volume solver for the stochastic continuity equation
//! `du + ∂ₓ(bu)dt = f dt + εΔu dt + σ dW` on the unit torus, with the stability
//! and translation experiments built on it.
//!
//! One step: upwind face fluxes for `∂ₓ(bu)`, centred second difference for
//! `εΔu`, forward Euler for `f`, and the Euler–Maruyama increment
//! `σ(u(t_j))·ΔW_j`. The flux form conserves `Σu` exactly when `f = σ = 0`.

use std::f64::consts::TAU;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::ito::ito_integral;
use crate::lab::weak_columns;
use crate::processes::{AdaptedProcess, GapEstimate, Reads, Shape, TestFunction, TestVariable, TorusGrid};
use crate::stats::{pairwise_sum, Estimate};
use crate::translation::{fit_translation_rate, RateFit};
use crate::wiener::{Coupling, TimeGrid, WienerPath};

/// Largest accepted `max|b|Δt/Δx + 2εΔt/Δx²`.
pub const CFL_LIMIT: f64 = 0.9;

/// One Fourier mode `amp·sin(2π·freq·x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amp: f64,
    pub freq: u32,
    pub phase: f64,
}

/// Trigonometric polynomial on the unit torus, with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profile {
    pub mean: f64,
    pub waves: Vec<Wave>,
}

impl Profile {
    pub fn zero() -> Self {
        Profile::default()
    }

    pub fn constant(c: f64) -> Self {
        Profile { mean: c, waves: Vec::new() }
    }

    pub fn wave(mean: f64, amp: f64, freq: u32, phase: f64) -> Self {
        Profile { mean, waves: vec![Wave { amp, freq, phase }] }
    }

    pub fn is_zero(&self) -> bool {
        self.mean == 0.0 && self.waves.iter().all(|w| w.amp == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.mean + self.waves.iter().map(|w| w.amp * (TAU * w.freq as f64 * x + w.phase).sin()).sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| {
                let k = TAU * w.freq as f64;
                w.amp * k * (k * x + w.phase).cos()
            })
            .sum()
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| {
                let k = TAU * w.freq as f64;
                -w.amp * k * k * (k * x + w.phase).sin()
            })
            .sum()
    }

    /// `|mean| + Σ|amp|`, an upper bound for the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.mean.abs() + self.waves.iter().map(|w| w.amp.abs()).sum::<f64>()
    }

    /// Upper bound for `sup|∂ₓ·|`.
    pub fn derivative_sup_bound(&self) -> f64 {
        self.waves.iter().map(|w| (w.amp * TAU * w.freq as f64).abs()).sum()
    }

    /// `self + s·other`.
    pub fn plus_scaled(&self, s: f64, other: &Profile) -> Profile {
        let mut waves = self.waves.clone();
        waves.extend(other.waves.iter().map(|w| Wave { amp: s * w.amp, ..*w }));
        Profile { mean: self.mean + s * other.mean, waves }
    }

    pub fn sample(&self, torus: &TorusGrid) -> Vec<f64> {
        torus.centers().into_iter().map(|x| self.eval(x)).collect()
    }

    /// `(∫ |·|² dx)^{1/2}` by the torus rule.
    pub fn l2_norm(&self, torus: &TorusGrid) -> f64 {
        let sq: Vec<f64> = self.sample(torus).iter().map(|v| v * v).collect();
        torus.integrate(&sq).sqrt()
    }

    /// As a test function; fails if the analytic and spectral derivatives disagree.
    pub fn test_function(&self, torus: TorusGrid) -> Result<TestFunction> {
        TestFunction::from_analytic(torus, |x| self.eval(x), |x| self.derivative(x), |x| self.second_derivative(x))
    }
}

/// One component `σ_k` of the noise coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// `σ(v) = offset + amp·sin v`.
    Multiplicative { offset: f64, amp: f64 },
    /// `σ(x)` independent of the solution.
    Additive(Profile),
}

impl Noise {
    pub fn eval(&self, v: f64, x: f64) -> f64 {
        match self {
            Noise::Multiplicative { offset, amp } => offset + amp * v.sin(),
            Noise::Additive(p) => p.eval(x),
        }
    }

    /// Lipschitz constant in the state variable.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Noise::Multiplicative { amp, .. } => amp.abs(),
            Noise::Additive(_) => 0.0,
        }
    }

    /// `∫ σ(0, x)² dx`.
    pub fn zero_level_sq(&self, torus: &TorusGrid) -> f64 {
        match self {
            Noise::Multiplicative { offset, .. } => offset * offset,
            Noise::Additive(p) => p.l2_norm(torus).powi(2),
        }
    }

    fn perturbed(&self, s: f64, pert: &Profile) -> Noise {
        match self {
            Noise::Additive(p) => Noise::Additive(p.plus_scaled(s, pert)),
            Noise::Multiplicative { offset, amp } => Noise::Multiplicative { offset: offset + s * pert.mean, amp: *amp },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub velocity: Profile,
    pub source: Profile,
    /// One entry per Wiener component.
    pub noise: Vec<Noise>,
    pub viscosity: f64,
    pub initial: Profile,
}

impl TransportProblem {
    pub fn noise_dim(&self) -> usize {
        self.noise.len().max(1)
    }

    pub fn cfl_number(&self, torus: &TorusGrid, dt: f64) -> f64 {
        let dx = torus.dx();
        self.velocity.sup_bound() * dt / dx + 2.0 * self.viscosity * dt / (dx * dx)
    }

    pub fn lipschitz_sq(&self) -> f64 {
        self.noise.iter().map(|s| s.lipschitz().powi(2)).sum()
    }

    /// Constant of the discrete energy bound
    /// `E sup‖u‖² ≤ 2(‖u₀‖² + T‖f‖ + 19c_σT)·exp(T(2‖∂ₓb‖ + 2‖f‖ + 76L²))`,
    /// `c_σ = 2Σ‖σ_k(0)‖²`, from Itô's formula, BDG and Gronwall.
    pub fn gronwall_constant(&self, torus: &TorusGrid, horizon: f64) -> f64 {
        let u0 = self.initial.l2_norm(torus).powi(2);
        let f = self.source.l2_norm(torus);
        let c_sigma = 2.0 * self.noise.iter().map(|s| s.zero_level_sq(torus)).sum::<f64>();
        let rate = 2.0 * self.velocity.derivative_sup_bound() + 2.0 * f + 76.0 * self.lipschitz_sq();
        2.0 * (u0 + horizon * f + 19.0 * c_sigma * horizon) * (horizon * rate).exp()
    }
}

/// Solution `u(t_j, x_i)` at every node, with the energy `∫u²/2 dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    grid: TimeGrid,
    torus: TorusGrid,
    values: Vec<f64>,
    energy: Vec<f64>,
}

fn energy_of(torus: &TorusGrid, u: &[f64]) -> f64 {
    let e: Vec<f64> = u.iter().map(|v| 0.5 * v * v).collect();
    torus.integrate(&e)
}

impl FieldPath {
    pub fn from_values(grid: TimeGrid, torus: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != (grid.steps() + 1) * torus.cells() {
            return Err(Error::GridMismatch("field values do not fill the grid".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k / torus.cells() });
        }
        let energy = values.chunks(torus.cells()).map(|u| energy_of(&torus, u)).collect();
        Ok(FieldPath { grid, torus, values, energy })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn torus(&self) -> &TorusGrid {
        &self.torus
    }

    pub fn at(&self, j: usize) -> &[f64] {
        let n = self.torus.cells();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.torus.integrate(self.at(j))
    }

    /// Largest deviation between stored and recomputed energies.
    pub fn energy_consistency(&self) -> f64 {
        energy_trace(self).iter().zip(&self.energy).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Runs the scheme and hands every node `(j, u(t_j))` to `observe`.
pub fn solve_transport_with(
    problem: &TransportProblem,
    torus: &TorusGrid,
    w: &WienerPath,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let grid = w.grid();
    let dt = grid.dt();
    let dx = torus.dx();
    let cfl = problem.cfl_number(torus, dt);
    if cfl > CFL_LIMIT {
        return Err(Error::Cfl { number: cfl, limit: CFL_LIMIT });
    }
    if !problem.noise.is_empty() && w.dim() != problem.noise.len() {
        return Err(Error::GridMismatch(format!(
            "{} noise components but a {}-dimensional driver",
            problem.noise.len(),
            w.dim()
        )));
    }
    let n = torus.cells();
    let lambda = dt / dx;
    let mu = problem.viscosity * dt / (dx * dx);
    let xs = torus.centers();
    let faces: Vec<f64> = (0..n).map(|i| problem.velocity.eval(torus.face(i))).collect();
    let source: Vec<f64> = xs.iter().map(|&x| dt * problem.source.eval(x)).collect();
    let additive: Vec<Option<Vec<f64>>> = problem
        .noise
        .iter()
        .map(|s| match s {
            Noise::Additive(p) => Some(p.sample(torus)),
            Noise::Multiplicative { .. } => None,
        })
        .collect();

    let mut u = problem.initial.sample(torus);
    let mut next = vec![0.0; n];
    let mut flux = vec![0.0; n];
    observe(0, &u);
    for j in 0..grid.steps() {
        for i in 0..n {
            let b = faces[i];
            let r = torus.right(i);
            flux[i] = b.max(0.0) * u[i] + b.min(0.0) * u[r];
        }
        for i in 0..n {
            let (l, r) = (torus.left(i), torus.right(i));
            let mut v = u[i] - lambda * (flux[i] - flux[l]) + source[i] + mu * (u[r] - 2.0 * u[i] + u[l]);
            for (k, s) in problem.noise.iter().enumerate() {
                let sig = match &additive[k] {
                    Some(a) => a[i],
                    None => s.eval(u[i], xs[i]),
                };
                v += sig * w.increment(j, k);
            }
            next[i] = v;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: j });
        }
        std::mem::swap(&mut u, &mut next);
        observe(j + 1, &u);
    }
    Ok(())
}

pub fn solve_transport(problem: &TransportProblem, torus: &TorusGrid, w: &WienerPath) -> Result<FieldPath> {
    let n = torus.cells();
    let mut values = Vec::with_capacity((w.grid().steps() + 1) * n);
    solve_transport_with(problem, torus, w, |_, u| values.extend_from_slice(u))?;
    FieldPath::from_values(*w.grid(), *torus, values)
}

/// Discrete weak-form residual at node `upto`:
/// `[∫uφ]₀ᵗ − Σ_j Δt∫(φ'bu + φf + εφ''u) − Σ_j ∫φσ(u) ΔW_j`.
/// Time sums are left-point, so the residual is pure spatial consistency error.
pub fn weak_residual(
    u: &FieldPath,
    problem: &TransportProblem,
    w: &WienerPath,
    phi: &TestFunction,
    upto: usize,
) -> Result<f64> {
    if phi.grid() != u.torus() || !w.grid().same_as(u.grid()) {
        return Err(Error::GridMismatch("residual inputs live on different grids".into()));
    }
    if upto > u.grid().steps() {
        return Err(Error::InvalidArgument(format!("node {upto} beyond the path")));
    }
    let torus = u.torus();
    let dt = u.grid().dt();
    let xs = torus.centers();
    let b: Vec<f64> = xs.iter().map(|&x| problem.velocity.eval(x)).collect();
    let f: Vec<f64> = xs.iter().map(|&x| problem.source.eval(x)).collect();
    let (p, p1, p2) = (phi.values(), phi.derivative(), phi.second_derivative());
    let mut terms = Vec::with_capacity(upto + 2);
    terms.push(phi.integrate_against(u.at(upto)));
    terms.push(-phi.integrate_against(u.at(0)));
    for j in 0..upto {
        let uj = u.at(j);
        let drift: Vec<f64> = (0..xs.len())
            .map(|i| p1[i] * b[i] * uj[i] + p[i] * f[i] + problem.viscosity * p2[i] * uj[i])
            .collect();
        let mut step = -dt * torus.integrate(&drift);
        for (k, s) in problem.noise.iter().enumerate() {
            let sig: Vec<f64> = (0..xs.len()).map(|i| p[i] * s.eval(uj[i], xs[i])).collect();
            step -= torus.integrate(&sig) * w.increment(j, k);
        }
        terms.push(step);
    }
    Ok(pairwise_sum(&terms))
}

/// `∫ η(u(t_j)) dx` with `η(v) = v²/2`, recomputed from the field.
pub fn energy_trace(u: &FieldPath) -> Vec<f64> {
    (0..=u.grid().steps()).map(|j| energy_of(u.torus(), u.at(j))).collect()
}

/// `∫ ψ ϑ(u(t_j, x), x) dx` at every node.
pub fn renormalized_pairing(u: &FieldPath, psi: &TestFunction, theta: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    if psi.grid() != u.torus() {
        return Err(Error::GridMismatch("ψ and field on different tori".into()));
    }
    let xs = u.torus().centers();
    Ok((0..=u.grid().steps())
        .map(|j| {
            let vals: Vec<f64> = u.at(j).iter().zip(&xs).map(|(&v, &x)| theta(v, x)).collect();
            psi.integrate_against(&vals)
        })
        .collect())
}

/// `ϑ = η'σ_k`, i.e. `v·σ_k(v, x)`.
pub fn entropy_flux(noise: &Noise) -> impl Fn(f64, f64) -> f64 + '_ {
    move |v, x| v * noise.eval(v, x)
}

/// `(Ê|σ(u) − Êσ(u)|², Ê|σ(u) − σ(Êu)|², L²·V̂ar(u))` at one `(t, x)` across paths.
pub fn variance_inequality(samples: &[f64], noise: &Noise, x: f64) -> (f64, f64, f64) {
    let m = samples.len() as f64;
    let mean_u = samples.iter().sum::<f64>() / m;
    let sig: Vec<f64> = samples.iter().map(|&v| noise.eval(v, x)).collect();
    let mean_s = sig.iter().sum::<f64>() / m;
    let var_s = sig.iter().map(|s| (s - mean_s).powi(2)).sum::<f64>() / m;
    let around = sig.iter().map(|s| (s - noise.eval(mean_u, x)).powi(2)).sum::<f64>() / m;
    let var_u = samples.iter().map(|v| (v - mean_u).powi(2)).sum::<f64>() / m;
    (var_s, around, noise.lipschitz().powi(2) * var_u)
}

/// `n`-dependent parts of a problem sequence: the data of member `n` are
/// `limit + perturbation/n`, with viscosity `viscosity_scale/n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Perturbation {
    pub velocity: Profile,
    pub source: Profile,
    pub initial: Profile,
    /// Added to each noise component (additive ones fully, multiplicative ones through the offset).
    pub noise: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySetup {
    /// The limit problem; its viscosity is ignored.
    pub limit: TransportProblem,
    pub perturbation: Perturbation,
    pub viscosity_scale: f64,
    pub cells: usize,
    pub steps: usize,
    pub horizon: f64,
    /// Space and time refinement of the reference solve.
    pub refine: usize,
    pub ladder: Vec<u32>,
    pub p: f64,
    pub psi: Profile,
    pub coupling: Coupling,
    pub tests: Vec<TestVariable>,
}

impl StabilitySetup {
    /// Multiplicative noise `σ(v) = ½ sin v`, velocity `0.5 + 0.1 sin 2πx`,
    /// datum `1 + 0.3 sin 2πx`, and `1/n` perturbations of all data.
    pub fn standard() -> Self {
        StabilitySetup {
            limit: TransportProblem {
                velocity: Profile::wave(0.5, 0.1, 1, 0.0),
                source: Profile::zero(),
                noise: vec![Noise::Multiplicative { offset: 0.0, amp: 0.5 }],
                viscosity: 0.0,
                initial: Profile::wave(1.0, 0.3, 1, 0.0),
            },
            perturbation: Perturbation {
                velocity: Profile::wave(0.0, 0.1, 3, 0.0),
                source: Profile::wave(0.0, 0.2, 2, 0.0),
                initial: Profile::wave(0.0, 0.1, 2, 0.5),
                noise: Profile::zero(),
            },
            viscosity_scale: 1.0,
            cells: 128,
            steps: 5120,
            horizon: 0.25,
            refine: 4,
            ladder: vec![2, 8, 32],
            p: 3.0,
            psi: Profile::wave(1.0, 0.5, 1, 0.3),
            coupling: Coupling::default(),
            tests: TestVariable::default_family(),
        }
    }

    pub fn member(&self, n: u32) -> TransportProblem {
        let s = 1.0 / n as f64;
        let l = &self.limit;
        let d = &self.perturbation;
        TransportProblem {
            velocity: l.velocity.plus_scaled(s, &d.velocity),
            source: l.source.plus_scaled(s, &d.source),
            noise: l.noise.iter().map(|z| z.perturbed(s, &d.noise)).collect(),
            viscosity: self.viscosity_scale * s,
            initial: l.initial.plus_scaled(s, &d.initial),
        }
    }

    pub fn limit_problem(&self) -> TransportProblem {
        TransportProblem { viscosity: 0.0, ..self.limit.clone() }
    }

    pub fn coarse_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn torus(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.cells)
    }

    /// Distances of member data from the limit data, per `n`:
    /// `‖bₙ−b‖∞, ‖∂ₓbₙ−∂ₓb‖∞, ‖fₙ−f‖∞, ‖u₀ₙ−u₀‖∞, ‖σₙ−σ‖∞`.
    pub fn hypothesis_monitors(&self) -> Vec<(&'static str, Vec<f64>)> {
        let d = &self.perturbation;
        let at = |bound: f64| self.ladder.iter().map(|&n| bound / n as f64).collect::<Vec<_>>();
        vec![
            ("velocity_distance", at(d.velocity.sup_bound())),
            ("divergence_distance", at(d.velocity.derivative_sup_bound())),
            ("source_distance", at(d.source.sup_bound())),
            ("initial_distance", at(d.initial.sup_bound())),
            ("noise_distance", at(d.noise.sup_bound())),
        ]
    }
}

fn monitors_green(monitors: &[(&'static str, Vec<f64>)]) -> bool {
    monitors.iter().all(|(_, v)| v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] <= w[0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub ladder: Vec<u32>,
    pub samples: usize,
    /// `Ê‖uₙ − u_ref‖ᵖ` over `[0,T]×𝕋` and its `p`-th root.
    pub distance_p: Vec<Estimate>,
    pub distance: Vec<f64>,
    /// `Ê sup_t ‖uₙ(t)‖²`.
    pub energy_sup: Vec<Estimate>,
    pub gronwall: Vec<f64>,
    /// Weak gaps of `∫∫ψσ(uₙ)dx dWₙ` and `∫∫ψ uₙσ(uₙ)dx dWₙ` against the reference.
    pub sigma_gap: Vec<GapEstimate>,
    pub entropy_gap: Vec<GapEstimate>,
    pub monitors: Vec<(&'static str, Vec<f64>)>,
    pub valid: bool,
    /// Sign-definite statistics kept their sign.
    pub sign_ok: bool,
}

impl StabilityReport {
    pub fn energy_within_bound(&self) -> bool {
        self.energy_sup.iter().zip(&self.gronwall).all(|(e, g)| e.mean <= *g)
    }

    pub fn distance_nonincreasing(&self) -> bool {
        self.distance.windows(2).all(|w| w[1] <= w[0])
    }
}

struct MemberRow {
    dist_p: f64,
    energy_sup: f64,
    sigma: Vec<f64>,
    entropy: Vec<f64>,
    sign: f64,
}

fn pairing_process(grid: TimeGrid, k: usize, rows: Vec<f64>) -> Result<AdaptedProcess> {
    let mut values = rows;
    values.truncate(grid.steps() * k);
    let info = (0..grid.steps()).collect();
    AdaptedProcess::new(grid, Shape::Matrix { rows: 1, cols: k }, values, info)
}

fn paired_noise(problem: &TransportProblem, psi: &[f64], xs: &[f64], dx: f64, u: &[f64], out: &mut Vec<f64>, out_entropy: &mut Vec<f64>) {
    for s in &problem.noise {
        let mut a = Vec::with_capacity(u.len());
        let mut b = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let sig = s.eval(u[i], xs[i]);
            a.push(psi[i] * sig);
            b.push(psi[i] * u[i] * sig);
        }
        out.push(pairwise_sum(&a) * dx);
        out_entropy.push(pairwise_sum(&b) * dx);
    }
}

/// Solves every member of the sequence on the coarse mesh and the limit problem
/// on the refined mesh with the same Brownian realisation, and compares.
pub fn stability_experiment(setup: &StabilitySetup, seed: u64, samples: usize) -> Result<StabilityReport> {
    let torus = setup.torus()?;
    let fine_torus = TorusGrid::new(setup.cells * setup.refine)?;
    let coarse = setup.coarse_grid()?;
    let fine = coarse.refined(setup.refine)?;
    let k = setup.limit.noise_dim();
    let ens = Ensemble::new(fine, k, seed, samples)?;
    let limit = setup.limit_problem();
    let members: Vec<TransportProblem> = setup.ladder.iter().map(|&n| setup.member(n)).collect();
    for m in &members {
        let c = m.cfl_number(&torus, coarse.dt());
        if c > CFL_LIMIT {
            return Err(Error::Cfl { number: c, limit: CFL_LIMIT });
        }
    }
    let psi_c = setup.psi.sample(&torus);
    let psi_f = setup.psi.sample(&fine_torus);
    let xs_c = torus.centers();
    let xs_f = fine_torus.centers();
    let r = setup.refine;
    let cells = setup.cells;

    let rows = ens.map(|rep| {
        // reference: refined in space and time, restricted to the coarse mesh
        let mut restricted = Vec::with_capacity((coarse.steps() + 1) * cells);
        let mut lim_sigma = Vec::with_capacity((fine.steps() + 1) * k);
        let mut lim_entropy = Vec::with_capacity((fine.steps() + 1) * k);
        solve_transport_with(&limit, &fine_torus, &rep.w, |j, u| {
            paired_noise(&limit, &psi_f, &xs_f, fine_torus.dx(), u, &mut lim_sigma, &mut lim_entropy);
            if j % r == 0 {
                restricted.extend(u.chunks(r).map(|c| c.iter().sum::<f64>() / r as f64));
            }
        })?;
        let ref_sigma = ito_integral(&pairing_process(fine, k, lim_sigma)?, &rep.w, fine.steps())?;
        let ref_entropy = ito_integral(&pairing_process(fine, k, lim_entropy)?, &rep.w, fine.steps())?;

        let mut out = Vec::with_capacity(members.len());
        for (m, &n) in members.iter().zip(&setup.ladder) {
            let wn = setup.coupling.apply(&rep.w, &rep.b, n)?.coarsen(r)?;
            let mut sig = Vec::with_capacity((coarse.steps() + 1) * k);
            let mut ent = Vec::with_capacity((coarse.steps() + 1) * k);
            let mut dist = Vec::with_capacity(coarse.steps() + 1);
            let mut sq = Vec::with_capacity(coarse.steps() + 1);
            let mut esup = 0.0f64;
            solve_transport_with(m, &torus, &wn, |j, u| {
                paired_noise(m, &psi_c, &xs_c, torus.dx(), u, &mut sig, &mut ent);
                let refj = &restricted[j * cells..(j + 1) * cells];
                let wgt = if j == 0 || j == coarse.steps() { 0.5 } else { 1.0 };
                let d: Vec<f64> = u.iter().zip(refj).map(|(a, b)| (a - b).abs().powf(setup.p)).collect();
                let d2: Vec<f64> = u.iter().zip(refj).map(|(a, b)| (a - b).powi(2)).collect();
                dist.push(wgt * torus.integrate(&d));
                sq.push(wgt * torus.integrate(&d2));
                esup = esup.max(2.0 * energy_of(&torus, u));
            })?;
            let isig = ito_integral(&pairing_process(coarse, k, sig)?, &wn, coarse.steps())?;
            let ient = ito_integral(&pairing_process(coarse, k, ent)?, &wn, coarse.steps())?;
            let dsig: Vec<f64> = isig.iter().zip(&ref_sigma).map(|(a, b)| a - b).collect();
            let dent: Vec<f64> = ient.iter().zip(&ref_entropy).map(|(a, b)| a - b).collect();
            let y2 = setup.tests.first().map(|y| y.eval_replica(rep).powi(2)).unwrap_or(1.0);
            out.push(MemberRow {
                dist_p: pairwise_sum(&dist) * coarse.dt(),
                energy_sup: esup,
                sigma: weak_columns(rep, &setup.tests, &dsig),
                entropy: weak_columns(rep, &setup.tests, &dent),
                sign: y2 * pairwise_sum(&sq) * coarse.dt(),
            });
        }
        Ok(out)
    })?;

    let nl = setup.ladder.len();
    let est = |f: &dyn Fn(&MemberRow) -> f64, m: usize| Estimate::from_samples(&rows.iter().map(|r| f(&r[m])).collect::<Vec<_>>());
    let gap = |f: &dyn Fn(&MemberRow) -> &Vec<f64>, m: usize| {
        let table: Vec<Vec<f64>> = rows.iter().map(|r| f(&r[m]).clone()).collect();
        let width = table.first().map_or(0, |t| t.len());
        let per = (width / setup.tests.len().max(1)).max(1);
        GapEstimate::from_columns(&table, width, |c| (c / per, c % per))
    };
    let distance_p: Vec<Estimate> = (0..nl).map(|m| est(&|r| r.dist_p, m)).collect();
    let distance = distance_p.iter().map(|e| e.mean.powf(1.0 / setup.p)).collect();
    let energy_sup = (0..nl).map(|m| est(&|r| r.energy_sup, m)).collect();
    let sign_ok = (0..nl).all(|m| {
        let e = est(&|r| r.sign, m);
        e.mean >= -3.0 * e.stderr
    });
    let monitors = setup.hypothesis_monitors();
    Ok(StabilityReport {
        ladder: setup.ladder.clone(),
        samples,
        distance_p,
        distance,
        energy_sup,
        gronwall: members.iter().map(|m| m.gronwall_constant(&torus, setup.horizon)).collect(),
        sigma_gap: (0..nl).map(|m| gap(&|r| &r.sigma, m)).collect(),
        entropy_gap: (0..nl).map(|m| gap(&|r| &r.entropy, m)).collect(),
        valid: monitors_green(&monitors),
        monitors,
        sign_ok,
    })
}

/// Translation-rate fit for the pairings `∫ψ uₙσ(uₙ) dx` (first noise
/// component) of every member of the sequence, on the coarse grid.
pub fn transport_translation(setup: &StabilitySetup, seed: u64, samples: usize, lags: &[f64]) -> Result<RateFit> {
    let torus = setup.torus()?;
    let grid = setup.coarse_grid()?;
    let k = setup.limit.noise_dim();
    let ens = Ensemble::new(grid, k, seed, samples)?;
    let psi = setup.psi.test_function(torus)?;
    let families = setup
        .ladder
        .iter()
        .map(|&n| {
            let m = setup.member(n);
            let noise = m.noise.first().cloned().unwrap_or(Noise::Additive(Profile::zero()));
            let theta = entropy_flux(&noise);
            let xs = torus.centers();
            let paths = ens.map(|rep| {
                let wn = rep.driver(&setup.coupling, n)?;
                let mut path = Vec::with_capacity(grid.steps() + 1);
                solve_transport_with(&m, &torus, &wn, |_, u| {
                    let vals: Vec<f64> = u.iter().zip(&xs).map(|(&v, &x)| theta(v, x)).collect();
                    path.push(psi.integrate_against(&vals));
                })?;
                Ok(path)
            })?;
            Ok((n, paths))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_translation_rate(&families, &grid, lags)
}

/// Checks that an integrand built from a field path passes the predictability check.
pub fn noise_integrand(u: &FieldPath, problem: &TransportProblem, psi: &TestFunction) -> Result<AdaptedProcess> {
    let k = problem.noise_dim();
    let xs = u.torus().centers();
    AdaptedProcess::build(*u.grid(), Shape::Matrix { rows: 1, cols: k }, Reads::Current, |j, _, out| {
        for (c, s) in problem.noise.iter().enumerate() {
            let vals: Vec<f64> = u.at(j).iter().zip(&xs).map(|(&v, &x)| s.eval(v, x)).collect();
            out[c] = psi.integrate_against(&vals);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ito::ito_integral;
    use crate::wiener::{sample_wiener, TimeGrid};

    fn quiet(initial: Profile) -> TransportProblem {
        TransportProblem {
            velocity: Profile::zero(),
            source: Profile::zero(),
            noise: Vec::new(),
            viscosity: 0.0,
            initial,
        }
    }

    fn driver(steps: usize, dim: usize, seed: u64) -> WienerPath {
        sample_wiener(TimeGrid::new(1.0, steps).unwrap(), dim, seed, 0).unwrap()
    }

    #[test]
    fn profile_derivatives_match_spectral() {
        let p = Profile::wave(0.5, 0.1, 1, 0.0).plus_scaled(0.25, &Profile::wave(0.0, 0.1, 3, 0.4));
        let torus = TorusGrid::new(64).unwrap();
        assert!(p.test_function(torus).is_ok());
        let bad = Profile { mean: 0.0, waves: vec![Wave { amp: 1.0, freq: 40, phase: 0.0 }] };
        assert!(bad.test_function(torus).is_err());
    }

    #[test]
    fn quiet_problem_is_static() {
        let torus = TorusGrid::new(32).unwrap();
        let p = quiet(Profile::wave(1.0, 0.3, 2, 0.1));
        let u = solve_transport(&p, &torus, &driver(50, 1, 1)).unwrap();
        for j in 0..=50 {
            assert_eq!(u.at(j), u.at(0));
        }
        assert!(u.energy_consistency() <= 1e-12);
    }

    #[test]
    fn cfl_violation_rejected() {
        let torus = TorusGrid::new(64).unwrap();
        let mut p = quiet(Profile::constant(1.0));
        p.viscosity = 1.0;
        assert!(matches!(solve_transport(&p, &torus, &driver(100, 1, 1)), Err(Error::Cfl { .. })));
        p.viscosity = 0.0;
        p.velocity = Profile::constant(200.0);
        assert!(matches!(solve_transport(&p, &torus, &driver(100, 1, 1)), Err(Error::Cfl { .. })));
    }

    #[test]
    fn blow_up_reports_step() {
        let torus = TorusGrid::new(16).unwrap();
        let mut p = quiet(Profile::constant(1.0));
        p.noise = vec![Noise::Additive(Profile::constant(1e308))];
        let r = solve_transport(&p, &torus, &driver(20, 1, 4));
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn additive_noise_solution_is_exact() {
        let torus = TorusGrid::new(32).unwrap();
        let mut p = quiet(Profile::wave(1.0, 0.3, 1, 0.0));
        p.noise = vec![Noise::Additive(Profile::constant(0.7)), Noise::Additive(Profile::constant(-0.2))];
        let w = driver(200, 2, 5);
        let u = solve_transport(&p, &torus, &w).unwrap();
        let u0 = p.initial.sample(&torus);
        let phi = Profile::wave(0.2, 1.0, 2, 0.3).test_function(torus).unwrap();
        for j in [0, 1, 77, 200] {
            let shift = 0.7 * w.value(j, 0) - 0.2 * w.value(j, 1);
            for (a, b) in u.at(j).iter().zip(&u0) {
                assert!((a - (b + shift)).abs() < 1e-12);
            }
            assert!(weak_residual(&u, &p, &w, &phi, j).unwrap().abs() <= 1e-10);
            let closed: Vec<f64> = u0.iter().map(|v| 0.5 * (v + shift).powi(2)).collect();
            assert!((u.energy()[j] - torus.integrate(&closed)).abs() <= 1e-10);
        }
    }

    #[test]
    fn mass_is_conserved_without_sources() {
        let torus = TorusGrid::new(64).unwrap();
        let p = TransportProblem {
            velocity: Profile::wave(0.3, 0.5, 1, 0.2),
            source: Profile::zero(),
            noise: Vec::new(),
            viscosity: 0.01,
            initial: Profile::wave(1.0, 0.4, 3, 0.0),
        };
        let u = solve_transport(&p, &torus, &driver(400, 1, 2)).unwrap();
        let m0 = u.mass(0);
        for j in 0..=400 {
            assert!((u.mass(j) - m0).abs() <= 1e-12);
        }
        let one = TestFunction::constant(torus, 1.0);
        let q = TransportProblem { velocity: Profile::zero(), ..p };
        let v = solve_transport(&q, &torus, &driver(400, 1, 2)).unwrap();
        assert!(weak_residual(&v, &q, &driver(400, 1, 2), &one, 400).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn constant_velocity_matches_characteristics() {
        let c = 0.5;
        let u0 = Profile::wave(1.0, 0.5, 1, 0.0);
        let p = TransportProblem { velocity: Profile::constant(c), ..quiet(u0.clone()) };
        let mut errs = Vec::new();
        for cells in [64usize, 128, 256] {
            let torus = TorusGrid::new(cells).unwrap();
            // fixed ratio cΔt/Δx = 0.5
            let steps = cells;
            let u = solve_transport(&p, &torus, &driver(steps, 1, 0)).unwrap();
            let exact: Vec<f64> = torus.centers().iter().map(|&x| u0.eval(x - c)).collect();
            let e: Vec<f64> = u.at(steps).iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
            errs.push(torus.integrate(&e));
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn weak_residual_first_order() {
        let p = TransportProblem {
            velocity: Profile::wave(0.4, 0.2, 1, 0.0),
            source: Profile::wave(0.0, 0.3, 1, 1.0),
            noise: vec![Noise::Multiplicative { offset: 0.1, amp: 0.3 }],
            viscosity: 0.002,
            initial: Profile::wave(1.0, 0.5, 1, 0.0),
        };
        let phi_p = Profile::wave(0.0, 1.0, 1, 0.7);
        for seed in 0..4 {
            let fine = driver(512, 1, seed);
            let coarse = fine.coarsen(2).unwrap();
            let mut res = Vec::new();
            for (cells, w) in [(64usize, &coarse), (128, &fine)] {
                let torus = TorusGrid::new(cells).unwrap();
                let u = solve_transport(&p, &torus, w).unwrap();
                let phi = phi_p.test_function(torus).unwrap();
                res.push(weak_residual(&u, &p, w, &phi, w.grid().steps()).unwrap().abs());
            }
            assert!(res[0] / res[1] >= 1.5, "seed {seed}: {res:?}");
        }
    }

    #[test]
    fn renormalized_pairing_of_constant_state() {
        let torus = TorusGrid::new(32).unwrap();
        let u = solve_transport(&quiet(Profile::constant(2.5)), &torus, &driver(10, 1, 0)).unwrap();
        let one = TestFunction::constant(torus, 1.0);
        let trace = renormalized_pairing(&u, &one, |v, _| v).unwrap();
        assert!(trace.iter().all(|t| (t - 2.5).abs() < 1e-14));
    }

    #[test]
    fn noise_integrand_is_predictable() {
        let torus = TorusGrid::new(32).unwrap();
        let p = TransportProblem {
            noise: vec![Noise::Multiplicative { offset: 0.0, amp: 0.5 }],
            ..quiet(Profile::wave(1.0, 0.3, 1, 0.0))
        };
        let w = driver(64, 1, 3);
        let u = solve_transport(&p, &torus, &w).unwrap();
        let v = noise_integrand(&u, &p, &TestFunction::constant(torus, 1.0)).unwrap();
        assert!(ito_integral(&v, &w, 64).is_ok());
    }

    #[test]
    fn variance_inequality_on_ensemble() {
        let torus = TorusGrid::new(32).unwrap();
        let noise = Noise::Multiplicative { offset: 0.2, amp: 0.6 };
        let p = TransportProblem {
            velocity: Profile::constant(0.3),
            noise: vec![noise.clone()],
            ..quiet(Profile::wave(1.0, 0.5, 1, 0.0))
        };
        let paths: Vec<FieldPath> =
            (0..200).map(|s| solve_transport(&p, &torus, &driver(128, 1, s)).unwrap()).collect();
        let xs = torus.centers();
        for j in [16, 64, 128] {
            for i in [0, 9, 31] {
                let vals: Vec<f64> = paths.iter().map(|u| u.at(j)[i]).collect();
                let (var_s, around, bound) = variance_inequality(&vals, &noise, xs[i]);
                assert!(var_s <= around + 1e-15);
                assert!(var_s <= bound + 1e-15);
            }
        }
    }

    #[test]
    fn stability_small() {
        let mut s = StabilitySetup::standard();
        s.cells = 32;
        s.steps = 400;
        s.horizon = 0.25;
        s.refine = 2;
        let r = stability_experiment(&s, 1, 40).unwrap();
        assert!(r.valid && r.sign_ok);
        assert!(r.distance_nonincreasing(), "{:?}", r.distance);
        assert!(r.energy_within_bound());
    }
}
