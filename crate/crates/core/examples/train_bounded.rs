//! Trains the 3x32 tanh surrogate on the bounded example and compares it with
//! the exact solution.
//!
//! cargo run --release --example train_bounded -- [outer_iterations] [seed]

use ptgame::cli::train_experiment;
use ptgame::simulator::{evaluate_surrogate, interior_grid};
use ptgame::{ExampleKind, ExperimentConfig};

fn main() -> ptgame::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::desk_scale(ExampleKind::Bounded, 7);
    if let Some(k) = args.next() {
        cfg.trainer.outer_iterations = k.parse().expect("outer iterations");
    }
    if let Some(s) = args.next() {
        cfg.seed = s.parse().expect("seed");
    }

    let start = std::time::Instant::now();
    let trained = train_experiment(&cfg, |k, _, _, rec| {
        if let Some(r) = rec {
            println!(
                "outer {k:2}  E {:.4e}  max l {:+.3e}  violated {:5.2}%  inner {:4} {}",
                r.hji_loss,
                r.max_constraint,
                100.0 * r.violated_fraction,
                r.inner_iterations,
                r.inner_termination.name()
            );
        }
        Ok(())
    })?;
    println!("trained in {:.1} s", start.elapsed().as_secs_f64());

    let model = cfg.model()?;
    let exact = cfg.exact_value()?;
    let grid = interior_grid(&model, 61, 0.01);
    let approx = trained.surrogate.bind(&trained.params);
    let table = evaluate_surrogate(&model, &approx, &exact, &grid)?;
    println!("{}", table.summary_csv());
    Ok(())
}
