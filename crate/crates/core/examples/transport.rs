//! Stability of the stochastic transport equation under perturbed data and
//! drivers: distance to the reference, energy against the Gronwall bound,
//! and weak gaps of the noise terms.

use itolab::transport::{stability_experiment, StabilitySetup};

fn main() -> itolab::Result<()> {
    let setup = StabilitySetup { cells: 64, steps: 1280, refine: 2, ..StabilitySetup::standard() };
    let r = stability_experiment(&setup, 3, 24)?;
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "n", "L^p dist", "energy", "gronwall", "σ gap");
    for (k, n) in r.ladder.iter().enumerate() {
        println!(
            "{n:>4} {:>10.4} {:>10.4} {:>10.1} {:>10.2e}",
            r.distance[k], r.energy_sup[k].mean, r.gronwall[k], r.sigma_gap[k].gap
        );
    }
    for (name, vals) in &r.monitors {
        println!("monitor {name}: {vals:.3?}");
    }
    println!("valid {} sign {} nonincreasing {}", r.valid, r.sign_ok, r.distance_nonincreasing());
    Ok(())
}
