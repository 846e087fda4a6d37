//! One-sided mollifier on a grid: adjoints, kernel mass and the
//! approximation error as the width shrinks.

use std::f64::consts::TAU;

use itolab::mollify::{inner, lr_norm, MollifierKernel};
use itolab::wiener::TimeGrid;

fn main() -> itolab::Result<()> {
    let grid = TimeGrid::new(1.0, 1024)?;
    let dt = grid.dt();
    let f: Vec<f64> = grid.times().iter().map(|t| (TAU * t).sin() + 0.3 * (3.0 * TAU * t).cos()).collect();
    let g: Vec<f64> = grid.times().iter().map(|t| t * t - 0.5).collect();

    println!("{:>6} {:>11} {:>11} {:>11} {:>11}", "rho", "adjoint", "d-adjoint", "mass-1", "|f-Rf|₂");
    for rho in [0.2, 0.1, 0.05, 0.025] {
        let k = MollifierKernel::for_grid(rho, &grid)?;
        let adj = inner(&k.mollify(&f), &g, dt) - inner(&f, &k.adjoint_mollify(&g), dt);
        let dadj = inner(&k.mollify_derivative(&f), &g, dt) + inner(&f, &k.adjoint_mollify_derivative(&g), dt);
        let diff: Vec<f64> = f.iter().zip(k.mollify(&f)).map(|(a, b)| a - b).collect();
        println!(
            "{rho:>6} {adj:>11.2e} {dadj:>11.2e} {:>11.2e} {:>11.5}",
            k.mass_up_to(rho) - 1.0,
            lr_norm(&diff, dt, 2.0)
        );
    }
    Ok(())
}
