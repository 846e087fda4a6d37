//! Kinetic formulation of a stochastic scalar conservation law with vanishing
//! viscosity: a deterministic Burgers shock, then the weak gap of the noise
//! integral along the perturbation ladder.

use itolab::claw::{kinetic_stability_experiment, KineticSetup};
use itolab::run::{burgers_refinement, burgers_shock};

fn main() -> itolab::Result<()> {
    let shock = burgers_shock(128, 0.5)?;
    println!("Burgers 1|0: shock speed {:.4} (exact 0.5), overshoot {:.1e}", shock.speed, shock.overshoot);
    for cells in [64, 128, 256] {
        let (res, fan) = burgers_refinement(cells, 0.5)?;
        println!("  {cells:>4} cells: kinetic residual {res:.3e}, measure in fan {fan:.3e}");
    }

    let setup = KineticSetup { cells: 32, steps: 1024, ..KineticSetup::standard() };
    let r = kinetic_stability_experiment(&setup, 11, 60)?;
    println!("\n{:>4} {:>12} {:>10} {:>12}", "n", "noise gap", "stderr", "m mass");
    for (k, n) in r.ladder.iter().enumerate() {
        println!(
            "{n:>4} {:>12.3e} {:>10.1e} {:>12.4e}",
            r.integral_gap[k].gap, r.integral_gap[k].stderr, r.measure_mass[k].mean
        );
    }
    println!("gap ratio {:.3}, min bin {:.1e}, monitors valid {}", r.gap_ratio(), r.min_bin, r.valid);
    Ok(())
}
