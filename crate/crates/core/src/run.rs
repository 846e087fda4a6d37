//! Experiment runner: turns configuration sections into CSV rows.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::claw::{
    front_position, kinetic_function, kinetic_residual, kinetic_stability_experiment, kinetic_translation, solve_claw,
    ClawInitial, Flux, KineticPairing, KineticProblem, KineticSetup, KineticTest, NoiseCoef, XiWindow,
};
use crate::config::{Plan, Section, EXPERIMENTS};
use crate::ensemble::{Ensemble, Replica};
use crate::error::{Error, Result};
use crate::ito::{discrete_ito_identity_residual, isometry_residual, ito_path};
use crate::lab::{
    convergence_sweep, counterexample_sine, counterexample_spike, decompose, l1_torus_mode, AlmostSure, ConvergenceReport,
    IntegrandFamily, Mode, SpatialOscillation, TemporalOscillation, Thresholds, WeakInOmega,
};
use crate::mollify::{inner, lr_norm, MollifierKernel};
use crate::processes::{AdaptedProcess, Reads, TestVariable, TorusGrid};
use crate::report::{failures, write_csv, Row, Verdict};
use crate::rng::{stream, Channel};
use crate::stats::Estimate;
use crate::translation::{dyadic_lags, RateFit, RateSlope};
use crate::transport::{
    solve_transport, stability_experiment, transport_translation, Noise, Profile, StabilitySetup, TransportProblem,
};
use crate::wiener::{sample_wiener, TimeGrid, WienerPath};

/// Runs one experiment section.
pub fn run_section(section: &Section) -> Result<Vec<Row>> {
    match section.name.as_str() {
        "isometry" => isometry(section),
        "mollifier" => mollifier(section),
        "translate" => translate(section),
        "counterexample" => counterexample(section),
        "theorem21" => theorem21(section),
        "l1mode" => l1mode(section),
        "corollary42" => corollary42(section),
        "transport" => transport(section),
        "claw" => claw(section),
        other => Err(Error::Config(format!("no experiment named `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub rows: Vec<Row>,
}

impl RunSummary {
    pub fn failures(&self) -> Vec<&Row> {
        failures(&self.rows)
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Runs `subcommand` (an experiment name or `all`) and writes one CSV per
/// experiment into `out`. Experiments without a section get a header-only file.
/// `workers` caps the rayon pool.
pub fn run(plan: &Plan, subcommand: &str, out: &Path, workers: Option<usize>) -> Result<RunSummary> {
    let names: Vec<&str> = match subcommand {
        "all" => EXPERIMENTS.to_vec(),
        s if EXPERIMENTS.contains(&s) => vec![s],
        s => {
            return Err(Error::Config(format!("unknown subcommand `{s}`; accepted: all, {}", EXPERIMENTS.join(", "))));
        }
    };
    std::fs::create_dir_all(out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut summary = RunSummary { files: Vec::new(), rows: Vec::new() };
    for name in names {
        let rows = match plan.section(name) {
            Some(s) => pool.install(|| run_section(s))?,
            None => Vec::new(),
        };
        let path = out.join(format!("{name}.csv"));
        write_csv(&path, &rows)?;
        summary.files.push(path);
        summary.rows.extend(rows);
    }
    Ok(summary)
}

fn family_mode(s: &Section) -> Result<Mode> {
    match s.raw("mode")? {
        "weak" => Ok(Mode::Weak),
        "strong" => Ok(Mode::Strong),
        other => Err(Error::Config(format!("key `mode` in [{}] must be `weak` or `strong`, got `{other}`", s.name))),
    }
}

fn thresholds(s: &Section) -> Result<Thresholds> {
    Ok(Thresholds { max_slope: s.f64("max_slope")?, max_ratio: s.f64("max_ratio")? })
}

fn sweep_rows(exp: &str, r: &ConvergenceReport, seed: u64, th: &Thresholds, verdict: Option<Verdict>) -> Vec<Row> {
    let stat = r.mode.name();
    let mut rows: Vec<Row> = r
        .entries
        .iter()
        .map(|e| Row::new(exp, stat, e.value, e.samples, seed).n(e.n).stderr(e.stderr))
        .collect();
    let samples = r.first().samples;
    let slope = r.slope();
    rows.push(Row::new(exp, "trend_slope", slope, samples, seed));
    let v = verdict.unwrap_or(Verdict::of(r.is_decreasing(th)));
    rows.push(Row::new(exp, "trend_ratio", r.ratio(), samples, seed).verdict(v));
    rows
}

// ---------------------------------------------------------------- isometry

type Integrand = fn(&Replica, &WienerPath) -> Result<AdaptedProcess>;

fn suite() -> Vec<(&'static str, Integrand)> {
    fn constant(r: &Replica, _: &WienerPath) -> Result<AdaptedProcess> {
        AdaptedProcess::scalar(*r.grid(), Reads::Initial, |_, _| 1.0)
    }
    fn wiener(_: &Replica, w: &WienerPath) -> Result<AdaptedProcess> {
        AdaptedProcess::scalar(*w.grid(), Reads::Current, |j, _| w.value(j, 0))
    }
    fn cos_wiener(_: &Replica, w: &WienerPath) -> Result<AdaptedProcess> {
        AdaptedProcess::scalar(*w.grid(), Reads::Current, |j, _| w.value(j, 0).cos())
    }
    fn indicator(_: &Replica, w: &WienerPath) -> Result<AdaptedProcess> {
        AdaptedProcess::scalar(*w.grid(), Reads::Current, |j, _| if w.value(j, 0) > 0.0 { 1.0 } else { 0.0 })
    }
    fn oscillating(_: &Replica, w: &WienerPath) -> Result<AdaptedProcess> {
        AdaptedProcess::scalar(*w.grid(), Reads::Current, |j, t| (TAU * 8.0 * t).sin() * (1.0 + w.value(j, 0)))
    }
    fn initial(r: &Replica, w: &WienerPath) -> Result<AdaptedProcess> {
        let a = (TAU * r.omega0).sin();
        AdaptedProcess::scalar(*w.grid(), Reads::Initial, |_, t| a * (1.0 + t))
    }
    vec![
        ("constant", constant as Integrand),
        ("wiener", wiener),
        ("cos_wiener", cos_wiener),
        ("indicator", indicator),
        ("oscillating", oscillating),
        ("initial", initial),
    ]
}

fn isometry(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let grid = TimeGrid::new(s.f64("horizon")?, s.usize("steps")?)?;
    let ens = Ensemble::new(grid, 1, seed, samples)?;
    let coupling = s.coupling()?;
    let z_limit = s.f64("z_limit")?;
    let mut rows = Vec::new();
    let mut push = |name: String, n: Option<u32>, c: crate::ito::IsometryCheck| {
        let mut r = Row::new("isometry", format!("isometry_z_{name}"), c.z, samples, seed).judged(c.z.abs() <= z_limit);
        if let Some(n) = n {
            r = r.n(n);
        }
        rows.push(r);
    };
    for (name, f) in suite() {
        let c = isometry_residual(&ens, |rep| Ok(rep.w.clone()), f)?;
        push(name.to_string(), None, c);
        for &n in &s.u32_list("ladder")? {
            let c = isometry_residual(&ens, |rep| rep.driver(&coupling, n), f)?;
            push(format!("{name}_coupled"), Some(n), c);
        }
    }
    let paths = s.usize("paths")?;
    let tol = s.f64("identity_tolerance")?;
    let worst = Ensemble::new(grid, 1, seed, paths)?
        .map_indices(|i| Ok(discrete_ito_identity_residual(&sample_wiener(grid, 1, seed, i)?)))?
        .into_iter()
        .fold(0.0, f64::max);
    rows.push(Row::new("isometry", "discrete_identity_residual", worst, paths, seed).judged(worst <= tol));
    Ok(rows)
}

// ---------------------------------------------------------------- mollifier

/// Random smooth function `c₀ + Σₖ aₖ sin(2πk t/T + φₖ)` on the nodes.
fn smooth_sample(seed: u64, index: u64, grid: &TimeGrid) -> Vec<f64> {
    let mut rng = stream(seed, Channel::Extra(0), index);
    let c0: f64 = rng.random_range(-1.0..1.0);
    let waves: Vec<(f64, f64)> = (1..=4).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..TAU))).collect();
    grid.times()
        .iter()
        .map(|&t| {
            c0 + waves
                .iter()
                .enumerate()
                .map(|(k, (a, p))| a * (TAU * (k + 1) as f64 * t / grid.horizon() + p).sin())
                .sum::<f64>()
        })
        .collect()
}

fn mollifier(s: &Section) -> Result<Vec<Row>> {
    let (seed, pairs) = (s.seed()?, s.samples()?);
    let grid = TimeGrid::new(s.f64("horizon")?, s.usize("steps")?)?;
    let dt = grid.dt();
    let tol = s.f64("tolerance")?;
    let mass_tol = s.f64("mass_tolerance")?;
    let corpus: Vec<(Vec<f64>, Vec<f64>)> =
        (0..pairs as u64).map(|i| (smooth_sample(seed, 2 * i, &grid), smooth_sample(seed, 2 * i + 1, &grid))).collect();
    let mut rows = Vec::new();
    let mut approx = Vec::new();
    let rhos: Vec<f64> = s.f64_list("rho")?.iter().map(|r| r * grid.horizon()).collect();
    for &rho in &rhos {
        let k = MollifierKernel::for_grid(rho, &grid)?;
        let (mut adj, mut dadj, mut contraction, mut err) = (0.0f64, 0.0f64, 0.0f64, Vec::new());
        for (f, g) in &corpus {
            adj = adj.max((inner(&k.mollify(f), g, dt) - inner(f, &k.adjoint_mollify(g), dt)).abs());
            dadj = dadj.max((inner(&k.mollify_derivative(f), g, dt) + inner(f, &k.adjoint_mollify_derivative(g), dt)).abs());
            let rf = k.mollify(f);
            for r in [1.0, 2.0, 3.0] {
                contraction = contraction.max(lr_norm(&rf, dt, r) / lr_norm(f, dt, r));
            }
            let d: Vec<f64> = f.iter().zip(&rf).map(|(a, b)| a - b).collect();
            err.push(lr_norm(&d, dt, 2.0));
        }
        let mass = (k.mass_up_to(rho) - 1.0).abs();
        let e = Estimate::from_samples(&err);
        approx.push(e.mean);
        rows.push(Row::new("mollifier", "adjoint_residual", adj, pairs, seed).rho(rho).judged(adj <= tol));
        rows.push(Row::new("mollifier", "derivative_adjoint_residual", dadj, pairs, seed).rho(rho).judged(dadj <= tol));
        rows.push(Row::new("mollifier", "kernel_mass_error", mass, pairs, seed).rho(rho).judged(mass <= mass_tol));
        rows.push(Row::new("mollifier", "contraction_ratio", contraction, pairs, seed).rho(rho).judged(contraction <= 1.0 + 1e-9));
        rows.push(Row::new("mollifier", "approximation_error", e.mean, pairs, seed).rho(rho).stderr(e.stderr));
    }
    let decreasing = approx.windows(2).all(|w| w[1] < w[0]);
    let last = approx.last().copied().unwrap_or(0.0);
    rows.push(Row::new("mollifier", "approximation_monotone", last, pairs, seed).judged(decreasing));
    Ok(rows)
}

// ---------------------------------------------------------------- translate

fn rate_rows(rows: &mut Vec<Row>, source: &str, fit: &RateFit, samples: usize, seed: u64, min_slope: f64, uniformity: f64) {
    let exp = "translate";
    for fam in &fit.families {
        for e in &fam.estimates {
            rows.push(
                Row::new(exp, format!("{source}_modulus"), e.modulus.mean, samples, seed)
                    .n(fam.n)
                    .h(e.h)
                    .stderr(e.modulus.stderr),
            );
        }
        let (v, ok) = match fam.slope {
            RateSlope::Fitted(v) => (v, v >= min_slope),
            RateSlope::Exact => (f64::INFINITY, true),
        };
        rows.push(Row::new(exp, format!("{source}_slope"), v, samples, seed).n(fam.n).judged(ok));
    }
    for (h, snapped) in fit.families[0].estimates.iter().map(|e| (e.h, e.snapped)) {
        rows.push(Row::new(exp, format!("{source}_lag_snapped"), f64::from(u8::from(snapped)), samples, seed).h(h));
    }
    let u = fit.uniformity_ratio();
    rows.push(Row::new(exp, format!("{source}_uniformity"), u, samples, seed).judged(u <= uniformity));
}

fn translate(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let horizon = s.f64("horizon")?;
    let (cells, steps) = (s.usize("cells")?, s.usize("steps")?);
    let lags = match s.raw("h_ladder")? {
        "dyadic" => dyadic_lags(horizon, 8, 3),
        _ => s.f64_list("h_ladder")?.iter().map(|h| h * horizon).collect(),
    };
    let (min_slope, uniformity) = (s.f64("min_slope")?, s.f64("uniformity")?);
    let coupling = s.coupling()?;
    let mut rows = Vec::new();
    for source in s.list("sources")? {
        let fit = match source.as_str() {
            "transport" => {
                let setup = StabilitySetup {
                    cells,
                    steps,
                    horizon,
                    ladder: s.u32_list("transport_ladder")?,
                    coupling,
                    ..StabilitySetup::standard()
                };
                transport_translation(&setup, seed, samples, &lags)?
            }
            "claw" | "claw_noise" => {
                let setup =
                    KineticSetup { cells, steps, horizon, ladder: s.u32_list("claw_ladder")?, coupling, ..KineticSetup::standard() };
                let pairing = if source == "claw" { KineticPairing::Chi } else { KineticPairing::Noise };
                kinetic_translation(&setup, pairing, seed, samples, &lags)?
            }
            "ito" => {
                let grid = TimeGrid::new(horizon, steps)?;
                let ens = Ensemble::new(grid, 1, seed, samples)?;
                let families = s
                    .u32_list("ito_ladder")?
                    .iter()
                    .map(|&n| {
                        let paths = ens.map(|rep| {
                            let wn = rep.driver(&coupling, n)?;
                            ito_path(&WeakInOmega.member(rep, n, &wn)?, &wn)
                        })?;
                        Ok((n, paths))
                    })
                    .collect::<Result<Vec<_>>>()?;
                crate::translation::fit_translation_rate(&families, &grid, &lags)?
            }
            other => {
                return Err(Error::Config(format!(
                    "key `sources` in [translate] accepts transport, claw, claw_noise, ito; got `{other}`"
                )))
            }
        };
        rate_rows(&mut rows, &source, &fit, samples, seed, min_slope, uniformity);
    }
    Ok(rows)
}

// ---------------------------------------------------------------- counterexample

fn counterexample(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let grid = TimeGrid::new(1.0, s.usize("steps")?)?;
    let ens = Ensemble::new(grid, 1, seed, samples)?;
    let coupling = s.coupling()?;
    let tol = s.f64("tolerance")?;
    let exp = "counterexample";
    let mut rows = Vec::new();
    for which in s.list("which")? {
        for &n in &s.u32_list("ladder")? {
            match which.as_str() {
                "sine" => {
                    let c = counterexample_sine(&ens, &coupling, n)?;
                    let m = c.second_moment;
                    rows.push(
                        Row::new(exp, "sine_second_moment", m.mean, samples, seed)
                            .n(n)
                            .stderr(m.stderr)
                            .judged((m.mean - 0.25).abs() <= tol * 0.25),
                    );
                    rows.push(Row::new(exp, "sine_pairing_one", c.pairing_one.mean, samples, seed).n(n).stderr(c.pairing_one.stderr));
                    rows.push(
                        Row::new(exp, "sine_pairing_sine", c.pairing_sine.mean, samples, seed).n(n).stderr(c.pairing_sine.stderr),
                    );
                }
                "spike" => {
                    let c = counterexample_spike(&ens, &coupling, n)?;
                    rows.push(
                        Row::new(exp, "spike_variance", c.variance, samples, seed)
                            .n(n)
                            .stderr(c.variance_stderr)
                            .judged((c.variance - 1.0).abs() <= tol),
                    );
                    rows.push(
                        Row::new(exp, "spike_mean", c.integral.mean, samples, seed)
                            .n(n)
                            .stderr(c.integral.stderr)
                            .judged(c.integral.mean.abs() <= 3.0 * c.integral.stderr),
                    );
                    rows.push(Row::new(exp, "spike_l2_norm_sq", c.l2_norm_sq, samples, seed).n(n));
                    rows.push(Row::new(exp, "spike_pairing_t", c.pairing_t, samples, seed).n(n));
                }
                other => {
                    return Err(Error::Config(format!("key `which` in [counterexample] accepts sine, spike; got `{other}`")))
                }
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------- theorem21

fn theorem21(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let grid = TimeGrid::new(s.f64("horizon")?, s.usize("steps")?)?;
    let ens = Ensemble::new(grid, 1, seed, samples)?;
    let coupling = s.coupling()?;
    let mode = family_mode(s)?;
    let tests = TestVariable::default_family();
    let ladder = s.u32_list("ladder")?;
    let family: Box<dyn IntegrandFamily> = match s.raw("family")? {
        "weak_in_omega" => Box::new(WeakInOmega),
        "almost_sure" => Box::new(AlmostSure),
        "temporal" => Box::new(TemporalOscillation),
        other => {
            return Err(Error::Config(format!(
                "key `family` in [theorem21] accepts weak_in_omega, almost_sure, temporal; got `{other}`"
            )))
        }
    };
    let th = thresholds(s)?;
    let exp = "theorem21";
    let report = convergence_sweep(&ens, &coupling, &ladder, mode, &tests, family.as_ref())?;
    let mut rows = sweep_rows(exp, &report, seed, &th, None);
    let n = s.u32_list("decomposition_n")?[0];
    let (mut i1, mut i3) = (Vec::new(), Vec::new());
    for r in s.f64_list("rho")? {
        let rho = r * grid.horizon();
        let d = decompose(&ens, &coupling, n, rho, &tests, family.as_ref())?;
        rows.push(Row::new(exp, "i1_sq", d.i1_sq.mean, samples, seed).n(n).rho(rho).stderr(d.i1_sq.stderr));
        rows.push(Row::new(exp, "i3_sq", d.i3_sq.mean, samples, seed).n(n).rho(rho).stderr(d.i3_sq.stderr));
        rows.push(Row::new(exp, "i2_sq", d.i2_sq.mean, samples, seed).n(n).rho(rho).stderr(d.i2_sq.stderr));
        rows.push(Row::new(exp, "i2_gap", d.gap_i2.gap, samples, seed).n(n).rho(rho).stderr(d.gap_i2.stderr));
        rows.push(Row::new(exp, "total_gap", d.gap_total.gap, samples, seed).n(n).rho(rho).stderr(d.gap_total.stderr));
        rows.push(Row::new(exp, "triangle_bound", f64::from(u8::from(d.triangle_holds)), samples, seed).n(n).rho(rho).judged(d.triangle_holds));
        rows.push(
            Row::new(exp, "cauchy_schwarz_bound", f64::from(u8::from(d.cauchy_schwarz_holds)), samples, seed)
                .n(n)
                .rho(rho)
                .judged(d.cauchy_schwarz_holds),
        );
        i1.push(d.i1_sq.mean);
        i3.push(d.i3_sq.mean);
    }
    let strict = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    rows.push(Row::new(exp, "i1_sq_decreasing", last(&i1), samples, seed).n(n).judged(strict(&i1)));
    rows.push(Row::new(exp, "i3_sq_decreasing", last(&i3), samples, seed).n(n).judged(strict(&i3)));
    Ok(rows)
}

// ---------------------------------------------------------------- l1mode

fn l1mode(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let grid = TimeGrid::new(1.0, s.usize("steps")?)?;
    let ens = Ensemble::new(grid, 1, seed, samples)?;
    let family = SpatialOscillation::standard(s.usize("cells")?)?;
    let ladder = s.u32_list("ladder")?;
    let th = thresholds(s)?;
    let p = s.f64("p")?;
    let (report, bound) = l1_torus_mode(
        &ens,
        &s.coupling()?,
        &ladder,
        family_mode(s)?,
        &TestVariable::default_family(),
        &family,
        p,
        s.f64("factor")?,
    )?;
    let verdict = if bound.valid { None } else { Some(Verdict::Invalid) };
    let mut rows = sweep_rows("l1mode", &report, seed, &th, verdict);
    for (n, e) in bound.ladder.iter().zip(&bound.norms) {
        rows.push(Row::new("l1mode", "time_norm_p", e.mean, samples, seed).n(*n).stderr(e.stderr));
    }
    let v = if bound.valid { Verdict::Pass } else { Verdict::Invalid };
    rows.push(Row::new("l1mode", "bound_monitor", bound.factor, samples, seed).verdict(v));
    Ok(rows)
}

// ---------------------------------------------------------------- corollary42

fn corollary42(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let grid = TimeGrid::new(1.0, s.usize("steps")?)?;
    let ens = Ensemble::new(grid, 1, seed, samples)?;
    let coupling = s.coupling()?;
    let ladder = s.u32_list("ladder")?;
    let tests = TestVariable::default_family();
    let exp = "corollary42";
    let mut rows = Vec::new();
    for fam in s.list("families")? {
        match fam.as_str() {
            "spatial" => {
                let family = SpatialOscillation::standard(s.usize("cells")?)?;
                let r = convergence_sweep(&ens, &coupling, &ladder, Mode::Strong, &tests, &family)?;
                for e in &r.entries {
                    rows.push(Row::new(exp, "spatial_strong", e.value, e.samples, seed).n(e.n).stderr(e.stderr));
                }
                let ok = r.ratio() <= s.f64("max_ratio")?;
                rows.push(Row::new(exp, "spatial_ratio", r.ratio(), samples, seed).judged(ok));
            }
            "temporal" => {
                let r = convergence_sweep(&ens, &coupling, &ladder, Mode::Strong, &tests, &TemporalOscillation)?;
                let z2 = Estimate::from_samples(&ens.map(|rep| Ok(TemporalOscillation::z(rep).powi(2)))?);
                let floor = 0.5 * grid.horizon() * z2.mean;
                rows.push(Row::new(exp, "temporal_floor", floor, samples, seed).stderr(0.5 * grid.horizon() * z2.stderr));
                for e in &r.entries {
                    rows.push(
                        Row::new(exp, "temporal_strong", e.value, e.samples, seed)
                            .n(e.n)
                            .stderr(e.stderr)
                            .judged(e.value >= floor - 3.0 * e.stderr),
                    );
                }
            }
            other => {
                return Err(Error::Config(format!("key `families` in [corollary42] accepts spatial, temporal; got `{other}`")))
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------- transport

/// Largest deviation of the spatial mean from its initial value over
/// `paths` source-free, noise-free runs with random initial phases.
pub fn transport_conservation(setup: &StabilitySetup, seed: u64, paths: usize) -> Result<f64> {
    let torus = setup.torus()?;
    let grid = setup.coarse_grid()?;
    let ens = Ensemble::new(grid, 1, seed, paths)?;
    let worst = ens.map(|rep| {
        let problem = TransportProblem {
            source: Profile::zero(),
            noise: vec![Noise::Additive(Profile::zero())],
            initial: Profile::wave(1.0, 0.4, 2, TAU * rep.omega0),
            ..setup.member(setup.ladder[0])
        };
        let u = solve_transport(&problem, &torus, &rep.w)?;
        let m0 = u.mass(0);
        Ok((0..=grid.steps()).map(|j| (u.mass(j) - m0).abs()).fold(0.0, f64::max))
    })?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

fn transport(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let setup = StabilitySetup {
        cells: s.usize("cells")?,
        steps: s.usize("steps")?,
        horizon: s.f64("horizon")?,
        refine: s.usize("refine")?,
        ladder: s.u32_list("ladder")?,
        p: s.f64("p")?,
        coupling: s.coupling()?,
        ..StabilitySetup::standard()
    };
    let exp = "transport";
    let r = stability_experiment(&setup, seed, samples)?;
    let mut rows = Vec::new();
    for (k, &n) in r.ladder.iter().enumerate() {
        rows.push(Row::new(exp, "lp_distance", r.distance[k], samples, seed).n(n));
        rows.push(Row::new(exp, "energy_sup", r.energy_sup[k].mean, samples, seed).n(n).stderr(r.energy_sup[k].stderr));
        rows.push(Row::new(exp, "gronwall_bound", r.gronwall[k], samples, seed).n(n));
        rows.push(Row::new(exp, "sigma_gap", r.sigma_gap[k].gap, samples, seed).n(n).stderr(r.sigma_gap[k].stderr));
        rows.push(Row::new(exp, "entropy_gap", r.entropy_gap[k].gap, samples, seed).n(n).stderr(r.entropy_gap[k].stderr));
    }
    for (name, vals) in &r.monitors {
        for (&n, &v) in r.ladder.iter().zip(vals) {
            rows.push(Row::new(exp, format!("monitor_{name}"), v, samples, seed).n(n));
        }
    }
    let gate = |ok: bool| if r.valid { Verdict::of(ok) } else { Verdict::Invalid };
    let ratio = r.distance[r.distance.len() - 1] / r.distance[0];
    rows.push(Row::new(exp, "hypothesis_monitors", f64::from(u8::from(r.valid)), samples, seed).verdict(gate(true)));
    rows.push(Row::new(exp, "distance_nonincreasing", ratio, samples, seed).verdict(gate(r.distance_nonincreasing())));
    rows.push(Row::new(exp, "distance_ratio", ratio, samples, seed).verdict(gate(ratio <= s.f64("max_ratio")?)));
    rows.push(Row::new(exp, "energy_within_gronwall", 1.0, samples, seed).verdict(gate(r.energy_within_bound())));
    rows.push(Row::new(exp, "sign_monitor", f64::from(u8::from(r.sign_ok)), samples, seed).judged(r.sign_ok));
    let paths = s.usize("conservation_paths")?;
    let drift = transport_conservation(&setup, seed, paths)?;
    rows.push(Row::new(exp, "mass_drift", drift, paths, seed).judged(drift <= s.f64("conservation_tolerance")?));
    Ok(rows)
}

// ---------------------------------------------------------------- claw

/// Deterministic Burgers Riemann run `1 | 0` on `cells` cells up to `horizon`.
pub struct ShockRun {
    pub speed: f64,
    pub dx: f64,
    pub overshoot: f64,
}

fn burgers(cells: usize, bins: usize) -> Result<KineticProblem> {
    Ok(KineticProblem {
        flux: Flux::burgers(),
        noise: NoiseCoef::default(),
        viscosity: 0.0,
        initial: ClawInitial::Riemann { left: 1.0, right: 0.0, split: 0.5 },
        window: XiWindow::new(-0.5, 1.5, bins.max(cells / 2))?,
    })
}

fn burgers_steps(cells: usize, horizon: f64) -> usize {
    // λ = Δt/Δx = 1/4
    (4.0 * cells as f64 * horizon).ceil() as usize
}

pub fn burgers_shock(cells: usize, horizon: f64) -> Result<ShockRun> {
    let torus = TorusGrid::new(cells)?;
    let steps = burgers_steps(cells, horizon);
    let w = sample_wiener(TimeGrid::new(horizon, steps)?, 1, 0, 0)?;
    let sol = solve_claw(&burgers(cells, 16)?, &torus, &w, None)?;
    let u = sol.path.at(steps);
    let x = front_position(u, &torus, 0.5, 0.5 + 0.1 * horizon)
        .ok_or_else(|| Error::InvalidArgument("no shock front found".into()))?;
    let overshoot = (0..=steps)
        .flat_map(|j| sol.path.at(j).iter().map(|&v| (v - 1.0).max(-v).max(0.0)).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    Ok(ShockRun { speed: (x - 0.5) / horizon, dx: torus.dx(), overshoot })
}

/// Kinetic residual at `T` and measure mass inside the rarefaction fan
/// (`0.2t < x < 0.8t`, `t ≥ T/4`) for the Burgers Riemann run on `cells` cells.
pub fn burgers_refinement(cells: usize, horizon: f64) -> Result<(f64, f64)> {
    let torus = TorusGrid::new(cells)?;
    let steps = burgers_steps(cells, horizon);
    let steps = steps.div_ceil(8) * 8;
    let problem = burgers(cells, cells / 2)?;
    let w = sample_wiener(TimeGrid::new(horizon, steps)?, 1, 0, 0)?;
    let stride = steps / 8;
    let sol = solve_claw(&problem, &torus, &w, Some(stride))?;
    let m = sol.measure.as_ref().expect("measure requested");
    let dt = horizon / steps as f64;
    let fan = m.mass_where(|tb, i| {
        let t = (tb as f64 + 0.5) * stride as f64 * dt;
        let x = torus.center(i);
        tb >= 2 && x > 0.2 * t && x < 0.8 * t
    });
    let phi = KineticTest::new(Profile::wave(1.0, 0.5, 1, 0.3), -0.4, 1.4, &problem.flux)?;
    let res = kinetic_residual(&sol, &problem, &w, &phi, steps)?.abs();
    Ok((res, fan))
}

/// Counts violations of the indicator invariants (values in {0,1}, monotone
/// in ξ, 1 at the bottom and 0 at the top of the window, layer cake within a
/// bin) over every node of a noisy run of the first member.
pub fn chi_invariant_violations(setup: &KineticSetup, seed: u64) -> Result<usize> {
    let torus = TorusGrid::new(setup.cells)?;
    let problem = setup.member(setup.ladder[0])?;
    let w = sample_wiener(TimeGrid::new(setup.horizon, setup.steps)?, 1, seed, 0)?;
    let sol = solve_claw(&problem, &torus, &w, None)?;
    let window = XiWindow { bins: 4 * problem.window.bins, ..problem.window };
    let k = kinetic_function(&sol.path, window)?;
    let mut bad = 0;
    for j in (0..=setup.steps).step_by((setup.steps / 64).max(1)) {
        for i in 0..setup.cells {
            let u = sol.path.at(j)[i];
            let mut prev = 1;
            for l in 0..window.bins {
                let c = k.chi(j, i, l);
                if c > 1 || c > prev {
                    bad += 1;
                }
                prev = c;
            }
            if k.chi(j, i, 0) != 1 || k.chi(j, i, window.bins - 1) != 0 {
                bad += 1;
            }
            if (k.layer_cake(j, i) - u.max(0.0)).abs() > window.width() {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

fn claw(s: &Section) -> Result<Vec<Row>> {
    let (seed, samples) = (s.seed()?, s.samples()?);
    let setup = KineticSetup {
        cells: s.usize("cells")?,
        steps: s.usize("steps")?,
        horizon: s.f64("horizon")?,
        refine: s.usize("refine")?,
        ladder: s.u32_list("ladder")?,
        bins: s.usize("bins")?,
        measure_replicas: s.usize("measure_replicas")?,
        coupling: s.coupling()?,
        ..KineticSetup::standard()
    };
    let exp = "claw";
    let r = kinetic_stability_experiment(&setup, seed, samples)?;
    let mut rows = Vec::new();
    let mr = setup.measure_replicas.min(samples);
    for (k, &n) in r.ladder.iter().enumerate() {
        let g = &r.integral_gap[k];
        rows.push(Row::new(exp, "integral_gap", g.gap, samples, seed).n(n).stderr(g.stderr));
        rows.push(Row::new(exp, "chi_gap", r.chi_gap[k].mean.abs(), samples, seed).n(n).stderr(r.chi_gap[k].stderr));
        rows.push(Row::new(exp, "measure_mass", r.measure_mass[k].mean, mr, seed).n(n).stderr(r.measure_mass[k].stderr));
    }
    for (name, vals) in &r.monitors {
        for (&n, &v) in r.ladder.iter().zip(vals) {
            rows.push(Row::new(exp, format!("monitor_{name}"), v, samples, seed).n(n));
        }
    }
    let gate = |ok: bool| if r.valid { Verdict::of(ok) } else { Verdict::Invalid };
    rows.push(Row::new(exp, "hypothesis_monitors", f64::from(u8::from(r.valid)), samples, seed).verdict(gate(true)));
    rows.push(Row::new(exp, "integral_gap_ratio", r.gap_ratio(), samples, seed).verdict(gate(r.gap_ratio() <= s.f64("max_ratio")?)));
    if mr > 0 {
        rows.push(Row::new(exp, "measure_min_bin", r.min_bin, mr, seed).judged(r.min_bin >= 0.0));
        rows.push(Row::new(exp, "measure_mass_spread", r.mass_spread(), mr, seed).judged(r.mass_spread() <= s.f64("mass_spread")?));
    }
    let bad = chi_invariant_violations(&setup, seed)?;
    rows.push(Row::new(exp, "chi_invariant_violations", bad as f64, 1, seed).judged(bad == 0));

    let shock_horizon = s.f64("shock_horizon")?;
    let shock = burgers_shock(s.usize("shock_cells")?, shock_horizon)?;
    rows.push(
        Row::new(exp, "shock_speed", shock.speed, 1, seed)
            .h(shock.dx)
            .judged((shock.speed - 0.5).abs() <= 2.0 * shock.dx / shock_horizon),
    );
    rows.push(Row::new(exp, "max_principle_overshoot", shock.overshoot, 1, seed).judged(shock.overshoot <= 1e-10));
    let ratio = s.f64("refinement_ratio")?;
    let mut prev: Option<(f64, f64)> = None;
    for cells in s.usize_list("refinement_cells")? {
        let (res, fan) = burgers_refinement(cells, shock_horizon)?;
        let dx = 1.0 / cells as f64;
        let judge = |a: f64, b: f64| a >= ratio * b;
        let (rv, fv) = match prev {
            Some((pr, pf)) => (Verdict::of(judge(pr, res)), Verdict::of(judge(pf, fan))),
            None => (Verdict::Info, Verdict::Info),
        };
        rows.push(Row::new(exp, "kinetic_residual", res, 1, seed).h(dx).verdict(rv));
        rows.push(Row::new(exp, "fan_measure_mass", fan, 1, seed).h(dx).verdict(fv));
        prev = Some((res, fan));
    }
    Ok(rows)
}
