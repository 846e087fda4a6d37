//! Mean L¹ time-translation modulus of the stochastic-integral paths
//! driven by the transport family, fitted against `h^{1/2}`.

use itolab::translation::dyadic_lags;
use itolab::transport::{transport_translation, StabilitySetup};

fn main() -> itolab::Result<()> {
    let horizon = 1.0 / 16.0;
    let setup = StabilitySetup { cells: 64, steps: 1024, horizon, ladder: vec![2, 8, 32], ..StabilitySetup::standard() };
    let lags = dyadic_lags(horizon, 8, 3);
    let fit = transport_translation(&setup, 5, 200, &lags)?;

    print!("{:>10}", "h/T");
    for fam in &fit.families {
        print!("{:>12}", format!("n={}", fam.n));
    }
    println!();
    for (k, h) in fit.lags.iter().enumerate() {
        print!("{:>10.5}", h / horizon);
        for fam in &fit.families {
            print!("{:>12.3e}", fam.estimates[k].modulus.mean);
        }
        println!();
    }
    for fam in &fit.families {
        println!("n={:<3} slope {:.3}", fam.n, fam.slope.value());
    }
    println!("max/min over n: {:.3}", fit.uniformity_ratio());
    Ok(())
}
