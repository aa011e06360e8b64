//! SAE metrics of a checkpoint (or of the exact value, as a zero baseline)
//! on an interior grid.
//!
//! cargo run --release --example evaluate -- configs/bounded.toml [checkpoint]

use std::path::Path;

use ptgame::cli::{load_value_source, ValueSource};
use ptgame::simulator::{evaluate_surrogate, interior_grid};
use ptgame::ExperimentConfig;

fn main() -> ptgame::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "configs/bounded.toml".into());
    let checkpoint = args.next().unwrap_or_else(|| "exact".into());
    let cfg = ExperimentConfig::load(Path::new(&config))?;
    let model = cfg.model()?;
    let exact = cfg.exact_value()?;
    let grid = interior_grid(&model, 51, 0.01);
    let table = match load_value_source(&cfg, &checkpoint)? {
        ValueSource::Exact => evaluate_surrogate(&model, &exact, &exact, &grid)?,
        ValueSource::Trained(s, w) => evaluate_surrogate(&model, &s.bind(&w), &exact, &grid)?,
    };
    println!("{} grid points", grid.len());
    print!("{}", table.summary_csv());
    let worst = table
        .rows
        .iter()
        .max_by(|a, b| a.value_sae.total_cmp(&b.value_sae))
        .expect("nonempty grid");
    println!("worst value SAE {:.3e} at {:?}", worst.value_sae, worst.x.as_slice());
    Ok(())
}
