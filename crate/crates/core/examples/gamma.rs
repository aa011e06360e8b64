//! Rate constant of the predefined-time decrease condition.
//!
//! cargo run --example gamma

use ptgame::{gamma_constant, PredefinedTimeParams};

fn main() -> ptgame::Result<()> {
    // Exponents induced by the strategy exponents gamma1 = 0.5, gamma2 = 1.5.
    let ptp = PredefinedTimeParams::from_strategy_exponents(0.5, 1.5)?;
    println!(
        "alpha {:.6} beta {} p {} q {} r {} -> gamma {:.10}",
        ptp.alpha(),
        ptp.beta(),
        ptp.p(),
        ptp.q(),
        ptp.r(),
        ptp.gamma()
    );

    // alpha = beta, p + q = 2: the integral collapses to pi / alpha.
    let g = gamma_constant(2.0, 2.0, 0.5, 1.5, 1.0)?;
    println!("symmetric case: {g:.12} vs pi/2 = {:.12}", std::f64::consts::PI / 2.0);

    match gamma_constant(1.0, 1.0, 1.1, 1.5, 1.0) {
        Err(e) => println!("p*r >= 1 rejected: {e}"),
        Ok(g) => println!("unexpected: {g}"),
    }

    // Decay profile (gamma/T_p)(alpha V^p + beta V^q)^r at a few levels.
    for v in [1e-4, 1e-2, 1.0, 10.0] {
        println!("V = {v:>7}: required decrease {:.6e}", ptp.decay(v));
    }
    Ok(())
}
