//! Analytic oracle suite on both built-in examples: HJI residual, saddle
//! inequalities, decrease condition and closed-form agreement.
//!
//! cargo run --release --example verify_exact

use ptgame::verify::{verify_exact, SuiteConfig};
use ptgame::{ExampleKind, PredefinedTimeParams, StrategyParams};

fn main() -> ptgame::Result<()> {
    let params = StrategyParams::new(0.5, 1.5)?;
    let ptp = PredefinedTimeParams::from_strategy_exponents(0.5, 1.5)?;
    let suite = SuiteConfig { samples: 10_000, saddle_samples: 20_000, margin: 0.01, seed: 1 };
    let mut all = true;
    for kind in [ExampleKind::Bounded, ExampleKind::Unbounded] {
        let model = kind.model(params)?;
        let report = verify_exact(&model, kind, params, &ptp, &suite)?;
        print!("{}", report.to_text());
        all &= report.passed();
    }
    println!("{}", if all { "all checks passed" } else { "some checks failed" });
    Ok(())
}
