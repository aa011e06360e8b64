//! Closed-form Nash strategies in closed loop: safety, settling before T_p,
//! and the accumulated cost against the game value.
//!
//! cargo run --release --example closed_loop [-- out.csv]

use ptgame::simulator::{accumulate_cost, settling_time};
use ptgame::{closed_form_pair, integrate, ExampleKind, ExactValue, SimConfig, StateVec, StrategyParams, ValueFunction};

fn main() -> ptgame::Result<()> {
    let t_p = 3.4259;
    let cfg = SimConfig::with_horizon(t_p);
    let cases = [
        (ExampleKind::Bounded, [0.9, 0.9]),
        (ExampleKind::Bounded, [0.5, 0.0]),
        (ExampleKind::Bounded, [-0.95, 0.3]),
        (ExampleKind::Unbounded, [2.0, 0.9]),
        (ExampleKind::Unbounded, [-1.5, -0.5]),
    ];
    println!("example    x0               settled   min s     J          V(x0)");
    let mut first_csv = None;
    for (kind, x0) in cases {
        let model = kind.model(StrategyParams::new(0.5, 1.5)?)?;
        let pair = closed_form_pair(kind, 0.5, 1.5)?;
        let x0 = StateVec::from_column_slice(&x0);
        let traj = integrate(&model, &pair, &x0, &cfg)?;
        let j = accumulate_cost(&traj, t_p)?;
        let v = ExactValue::new(kind).value(&x0)?;
        println!(
            "{:<10} ({:+.2}, {:+.2})   {:>6.3} s  {:.2e}  {:.6}  {:.6}",
            kind.name(),
            x0[0],
            x0[1],
            settling_time(&traj, 1e-3).unwrap_or(f64::NAN),
            traj.min_safety_level,
            j,
            v
        );
        first_csv.get_or_insert_with(|| traj.to_csv());
    }
    if let (Some(path), Some(csv)) = (std::env::args().nth(1), first_csv) {
        std::fs::write(&path, csv).expect("write trajectory");
        println!("first trajectory written to {path}");
    }
    Ok(())
}
