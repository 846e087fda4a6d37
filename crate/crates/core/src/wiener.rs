//! Brownian paths on uniform time grids and the mixture coupling `Wₙ → W`.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Channel};

/// Uniform grid `t_j = j T / N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("time horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node time `t_j`; the last node is exactly `T`.
    pub fn time(&self, j: usize) -> f64 {
        if j == self.steps {
            self.horizon
        } else {
            self.horizon * j as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.time(j)).collect()
    }

    /// The grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        TimeGrid::new(self.horizon, self.steps * factor)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && self.horizon == other.horizon
    }

    /// Snaps `t` down to the nearest node index.
    pub fn node_at_or_before(&self, t: f64) -> usize {
        let j = (t / self.dt() + 1e-9).floor();
        (j.max(0.0) as usize).min(self.steps)
    }
}

/// Where a path came from; `None` for paths assembled from explicit values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathOrigin {
    pub seed: u64,
    pub replica: u64,
    pub channel: Channel,
}

/// A `k`-dimensional Brownian path sampled at the nodes of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    dim: usize,
    // node-major: values[j * dim + c]
    values: Vec<f64>,
    origin: Option<PathOrigin>,
}

impl WienerPath {
    /// Builds a path from node values; rejects `W(0) ≠ 0` and non-finite entries.
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("Wiener dimension must be at least 1".into()));
        }
        if values.len() != (grid.steps() + 1) * dim {
            return Err(Error::GridMismatch(format!(
                "expected {} values for {} nodes x {} components, got {}",
                (grid.steps() + 1) * dim,
                grid.steps() + 1,
                dim,
                values.len()
            )));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("Wiener path must start at the origin".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("Wiener path values must be finite".into()));
        }
        Ok(WienerPath { grid, dim, values, origin: None })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> Option<PathOrigin> {
        self.origin
    }

    /// `W(t_j)` as a slice of length `k`.
    pub fn at(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Component `c` of `W(t_j)`.
    pub fn value(&self, j: usize, c: usize) -> f64 {
        self.values[j * self.dim + c]
    }

    /// Component `c` of `W(t_{j+1}) - W(t_j)`.
    pub fn increment(&self, j: usize, c: usize) -> f64 {
        self.values[(j + 1) * self.dim + c] - self.values[j * self.dim + c]
    }

    /// All increments of component `c`.
    pub fn increments(&self, c: usize) -> Vec<f64> {
        (0..self.grid.steps()).map(|j| self.increment(j, c)).collect()
    }

    /// Node values of component `c`.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..=self.grid.steps()).map(|j| self.value(j, c)).collect()
    }

    pub fn terminal(&self, c: usize) -> f64 {
        self.value(self.grid.steps(), c)
    }

    /// Restriction to every `factor`-th node. Increments of the coarse path are
    /// sums of fine increments, so the result is again an exact Brownian sample.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.grid.steps() % factor != 0 {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps by factor {factor}",
                self.grid.steps()
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.steps() / factor)?;
        let mut values = Vec::with_capacity((grid.steps() + 1) * self.dim);
        for j in 0..=grid.steps() {
            values.extend_from_slice(self.at(j * factor));
        }
        Ok(WienerPath { grid, dim: self.dim, values, origin: self.origin })
    }

    fn check_compatible(&self, other: &WienerPath) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "paths live on different grids ({} vs {} steps, T = {} vs {})",
                self.grid.steps(),
                other.grid.steps(),
                self.grid.horizon(),
                other.grid.horizon()
            )));
        }
        if self.dim != other.dim {
            return Err(Error::GridMismatch(format!(
                "paths have different dimensions ({} vs {})",
                self.dim, other.dim
            )));
        }
        Ok(())
    }
}

/// Samples the path addressed by `(seed, channel, replica)`.
pub fn sample_wiener_on(
    grid: TimeGrid,
    dim: usize,
    seed: u64,
    channel: Channel,
    replica: u64,
) -> Result<WienerPath> {
    if dim == 0 {
        return Err(Error::Config("Wiener dimension must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, channel, replica);
    let sd = grid.dt().sqrt();
    let mut values = vec![0.0; (grid.steps() + 1) * dim];
    for j in 0..grid.steps() {
        for c in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[(j + 1) * dim + c] = values[j * dim + c] + sd * z;
        }
    }
    Ok(WienerPath {
        grid,
        dim,
        values,
        origin: Some(PathOrigin { seed, replica, channel }),
    })
}

/// Samples the limit path `W` of replica `replica`.
pub fn sample_wiener(grid: TimeGrid, dim: usize, seed: u64, replica: u64) -> Result<WienerPath> {
    sample_wiener_on(grid, dim, seed, Channel::Limit, replica)
}

/// Mixture coupling `(W + aB) / √(1 + a²)`.
///
/// For independent `W`, `B` the output is again a standard Wiener process and
/// converges to `W` uniformly on the grid as `a → 0`.
pub fn couple(w: &WienerPath, b: &WienerPath, a: f64) -> Result<WienerPath> {
    w.check_compatible(b)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("mixing coefficient must be nonnegative, got {a}")));
    }
    if a == 0.0 {
        return Ok(w.clone());
    }
    let scale = 1.0 / (1.0 + a * a).sqrt();
    let values = w
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x + a * y) * scale)
        .collect();
    Ok(WienerPath { grid: w.grid, dim: w.dim, values, origin: None })
}

/// `max_j |W1(t_j) - W2(t_j)|` with the Euclidean norm on `ℝᵏ`.
pub fn sup_distance(w1: &WienerPath, w2: &WienerPath) -> Result<f64> {
    w1.check_compatible(w2)?;
    let mut best = 0.0f64;
    for j in 0..=w1.grid.steps() {
        let d2: f64 = w1.at(j).iter().zip(w2.at(j)).map(|(x, y)| (x - y) * (x - y)).sum();
        best = best.max(d2.sqrt());
    }
    Ok(best)
}

/// `max_j |W(t_j)|`.
pub fn sup_norm(w: &WienerPath) -> f64 {
    (0..=w.grid.steps())
        .map(|j| w.at(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// How the sequence `Wₙ` is built from the limit `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// `Wₙ = W` for every `n`.
    Identity,
    /// `Wₙ = (W + aₙB)/√(1+aₙ²)` with `aₙ = scale · n^(-power)`.
    Mixture { scale: f64, power: f64 },
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling::Mixture { scale: 1.0, power: 1.0 }
    }
}

impl Coupling {
    /// Mixing coefficient for index `n` (zero for the identity coupling).
    pub fn coefficient(&self, n: u32) -> f64 {
        match *self {
            Coupling::Identity => 0.0,
            Coupling::Mixture { scale, power } => scale * (n.max(1) as f64).powf(-power),
        }
    }

    pub fn apply(&self, w: &WienerPath, b: &WienerPath, n: u32) -> Result<WienerPath> {
        couple(w, b, self.coefficient(n))
    }

    /// Pathwise bound `|1 - c| sup|W| + a c sup|B|` with `c = (1+a²)^{-1/2}`.
    pub fn distance_bound(&self, n: u32, sup_w: f64, sup_b: f64) -> f64 {
        let a = self.coefficient(n);
        let c = 1.0 / (1.0 + a * a).sqrt();
        (1.0 - c).abs() * sup_w + a * c * sup_b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{lag1_autocorrelation, mean, Estimate};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn rejects_degenerate_configuration() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(sample_wiener(grid(4), 0, 1, 0).is_err());
    }

    #[test]
    fn grid_nodes_are_exact_at_the_ends() {
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(7), 0.3);
        let ts = g.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn single_step_path_starts_at_zero() {
        let w = sample_wiener(grid(1), 1, 11, 0).unwrap();
        assert_eq!(w.value(0, 0), 0.0);
        assert_ne!(w.value(1, 0), 0.0);
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = sample_wiener(grid(64), 3, 5, 17).unwrap();
        let b = sample_wiener(grid(64), 3, 5, 17).unwrap();
        assert_eq!(a, b);
        let c = sample_wiener(grid(64), 3, 5, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn terminal_variance_is_horizon() {
        let g = grid(16);
        let xs: Vec<f64> = (0..10_000)
            .map(|r| sample_wiener(g, 1, 2024, r).unwrap().terminal(0))
            .collect();
        let var = Estimate::sample_variance(&xs);
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn increments_are_uncorrelated() {
        let g = grid(8);
        let mut acs = Vec::new();
        for r in 0..10_000 {
            let w = sample_wiener(g, 1, 99, r).unwrap();
            acs.push(w.increments(0));
        }
        // lag-1 products pooled over replicas
        let prods: Vec<f64> = acs.iter().flat_map(|inc| inc.windows(2).map(|p| p[0] * p[1]).collect::<Vec<_>>()).collect();
        let sq: Vec<f64> = acs.iter().flat_map(|inc| inc.iter().map(|x| x * x).collect::<Vec<_>>()).collect();
        let rho = mean(&prods) / mean(&sq);
        assert!(rho.abs() < 0.03, "rho = {rho}");
        let single = lag1_autocorrelation(&acs.concat());
        assert!(single.abs() < 0.03);
    }

    #[test]
    fn rejects_paths_not_starting_at_origin() {
        let w = sample_wiener(grid(4), 2, 1, 0).unwrap();
        let shifted: Vec<f64> = w.values.iter().map(|v| v + 0.5).collect();
        assert!(WienerPath::from_values(grid(4), 2, shifted).is_err());
    }

    #[test]
    fn zero_mixing_is_identity_and_distance_zero() {
        let w = sample_wiener(grid(32), 2, 3, 0).unwrap();
        let b = sample_wiener_on(grid(32), 2, 3, Channel::Auxiliary, 0).unwrap();
        let c = couple(&w, &b, 0.0).unwrap();
        assert_eq!(c.values, w.values);
        assert_eq!(sup_distance(&w, &w).unwrap(), 0.0);
    }

    #[test]
    fn coupling_rejects_mismatched_inputs() {
        let w = sample_wiener(grid(32), 1, 3, 0).unwrap();
        let b = sample_wiener_on(grid(16), 1, 3, Channel::Auxiliary, 0).unwrap();
        assert!(couple(&w, &b, 1.0).is_err());
        let b2 = sample_wiener_on(grid(32), 2, 3, Channel::Auxiliary, 0).unwrap();
        assert!(couple(&w, &b2, 1.0).is_err());
        assert!(sup_distance(&w, &b2).is_err());
    }

    #[test]
    fn coupled_path_keeps_unit_variance() {
        let g = grid(8);
        for a in [1.0, 0.25] {
            let xs: Vec<f64> = (0..10_000)
                .map(|r| {
                    let w = sample_wiener(g, 1, 41, r).unwrap();
                    let b = sample_wiener_on(g, 1, 41, Channel::Auxiliary, r).unwrap();
                    couple(&w, &b, a).unwrap().terminal(0)
                })
                .collect();
            let var = Estimate::sample_variance(&xs);
            assert!((var - 1.0).abs() < 0.05, "a = {a}: var = {var}");
        }
    }

    #[test]
    fn pathwise_distance_shrinks_below_bound() {
        let g = grid(256);
        let w = sample_wiener(g, 1, 8, 1).unwrap();
        let b = sample_wiener_on(g, 1, 8, Channel::Auxiliary, 1).unwrap();
        let scale = sup_norm(&w) + sup_norm(&b);
        let mut last = f64::INFINITY;
        for a in [1.0, 0.25, 1.0 / 16.0] {
            let d = sup_distance(&couple(&w, &b, a).unwrap(), &w).unwrap();
            let c = 1.0 / (1.0 + a * a).sqrt();
            let bound = (1.0 - c) * sup_norm(&w) + a * c * sup_norm(&b);
            assert!(d <= bound + 1e-12);
            assert!(d < last);
            last = d;
        }
        assert!(last < 0.2 * scale);
    }

    #[test]
    fn mean_square_distance_decreases_along_schedule() {
        let g = grid(64);
        let coupling = Coupling::default();
        let ladder = [1u32, 2, 4, 8, 16];
        let mut ms = Vec::new();
        for &n in &ladder {
            let d2: Vec<f64> = (0..1000)
                .map(|r| {
                    let w = sample_wiener(g, 1, 12, r).unwrap();
                    let b = sample_wiener_on(g, 1, 12, Channel::Auxiliary, r).unwrap();
                    let d = sup_distance(&coupling.apply(&w, &b, n).unwrap(), &w).unwrap();
                    d * d
                })
                .collect();
            ms.push(mean(&d2));
        }
        assert!(ms.windows(2).all(|p| p[1] <= p[0]), "{ms:?}");
        // O(1/n²): quadrupling n cuts the mean square by roughly 16
        assert!(ms[4] < ms[2] / 8.0);
    }

    #[test]
    fn coarsening_keeps_nodes() {
        let w = sample_wiener(grid(16), 1, 4, 2).unwrap();
        let c = w.coarsen(4).unwrap();
        assert_eq!(c.grid().steps(), 4);
        for j in 0..=4 {
            assert_eq!(c.value(j, 0), w.value(4 * j, 0));
        }
        assert!(w.coarsen(3).is_err());
    }
}
