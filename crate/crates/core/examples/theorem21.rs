//! Weak gap of `∫Vₙ dWₙ − ∫V dW` for the weak-in-ω family, and the mollifier
//! split of the integral at a fixed n.

use itolab::ensemble::Ensemble;
use itolab::lab::{convergence_sweep, decompose, Mode, WeakInOmega};
use itolab::processes::TestVariable;
use itolab::wiener::{Coupling, TimeGrid};

fn main() -> itolab::Result<()> {
    let grid = TimeGrid::new(1.0, 128)?;
    let ens = Ensemble::new(grid, 1, 21, 5000)?;
    let coupling = Coupling::default();
    let tests = TestVariable::default_family();

    let sweep = convergence_sweep(&ens, &coupling, &[1, 2, 4, 8, 16], Mode::Weak, &tests, &WeakInOmega)?;
    for e in &sweep.entries {
        println!("n={:<3} weak gap {:.4} ± {:.4}", e.n, e.value, e.stderr);
    }
    println!("slope {:.2}, last/first {:.3}\n", sweep.slope(), sweep.ratio());

    for rho in [0.2, 0.1, 0.05] {
        let d = decompose(&ens, &coupling, 4, rho, &tests, &WeakInOmega)?;
        println!(
            "rho={rho:<5} EI₁²={:.4} EI₃²={:.4} E|I₂|²={:.4} triangle={} cs={}",
            d.i1_sq.mean, d.i3_sq.mean, d.i2_sq.mean, d.triangle_holds, d.cauchy_schwarz_holds
        );
    }
    Ok(())
}
