//! The two integrands whose stochastic integrals do not converge weakly to
//! the integral of the weak limit.
//!
//! `cargo run --release --example counterexamples`

use itolab::ensemble::Ensemble;
use itolab::lab::{counterexample_sine, counterexample_spike};
use itolab::wiener::{Coupling, TimeGrid};

fn main() -> itolab::Result<()> {
    let grid = TimeGrid::new(1.0, 512)?;
    let ens = Ensemble::new(grid, 1, 2024, 20_000)?;
    let coupling = Coupling::default();

    println!("sin(2πnω₀)sin(2πnt): weakly null, second moment stays at 1/4");
    println!("{:>4} {:>12} {:>10} {:>12}", "n", "E|I|²", "stderr", "E∫F·sin");
    for n in [4, 16, 64] {
        let c = counterexample_sine(&ens, &coupling, n)?;
        println!(
            "{n:>4} {:>12.5} {:>10.5} {:>12.2e}",
            c.second_moment.mean, c.second_moment.stderr, c.pairing_sine.mean
        );
    }

    println!("\n√n·1[0,1/n]: weakly null in L², integral stays N(0,1)");
    println!("{:>4} {:>10} {:>10} {:>12}", "n", "mean", "variance", "∫f·t dt");
    for n in [4, 16, 64] {
        let c = counterexample_spike(&ens, &coupling, n)?;
        println!("{n:>4} {:>10.4} {:>10.4} {:>12.5}", c.integral.mean, c.variance, c.pairing_t);
    }
    Ok(())
}
