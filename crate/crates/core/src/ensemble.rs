//! Replica sets: the randomness `(ω₀, W, B)` of one sample and deterministic
//! parallel maps over many of them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Channel};
use crate::wiener::{sample_wiener_on, Coupling, TimeGrid, WienerPath};

/// The randomness carried by one replica.
#[derive(Debug, Clone)]
pub struct Replica {
    pub index: u64,
    /// Time-zero randomness, uniform on `[0, 1)`.
    pub omega0: f64,
    /// Limit Wiener path.
    pub w: WienerPath,
    /// Auxiliary path, independent of `w`.
    pub b: WienerPath,
}

impl Replica {
    pub fn generate(grid: TimeGrid, dim: usize, seed: u64, index: u64) -> Result<Self> {
        let w = sample_wiener_on(grid, dim, seed, Channel::Limit, index)?;
        let b = sample_wiener_on(grid, dim, seed, Channel::Auxiliary, index)?;
        let omega0 = rng::stream(seed, Channel::Initial, index).random::<f64>();
        Ok(Replica { index, omega0, w, b })
    }

    /// `Wₙ` under the given coupling.
    pub fn driver(&self, coupling: &Coupling, n: u32) -> Result<WienerPath> {
        coupling.apply(&self.w, &self.b, n)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.w.grid()
    }
}

/// A reproducible set of replicas `0..samples` drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ensemble {
    pub grid: TimeGrid,
    pub dim: usize,
    pub seed: u64,
    pub samples: usize,
}

impl Ensemble {
    pub fn new(grid: TimeGrid, dim: usize, seed: u64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("ensemble must contain at least one replica".into()));
        }
        if dim == 0 {
            return Err(Error::Config("Wiener dimension must be at least 1".into()));
        }
        Ok(Ensemble { grid, dim, seed, samples })
    }

    pub fn replica(&self, index: u64) -> Result<Replica> {
        Replica::generate(self.grid, self.dim, self.seed, index)
    }

    /// Evaluates `f` on every replica. Results come back in replica order
    /// regardless of how rayon schedules the work.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Replica) -> Result<T> + Sync,
    {
        (0..self.samples as u64)
            .into_par_iter()
            .map(|i| {
                let rep = self.replica(i)?;
                f(&rep)
            })
            .collect()
    }

    /// Like [`Ensemble::map`] but without generating the replica paths, for
    /// experiments that build their own randomness from the index.
    pub fn map_indices<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        (0..self.samples as u64).into_par_iter().map(&f).collect()
    }
}

/// Column `c` of a row-major table of per-replica feature vectors.
pub fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}
