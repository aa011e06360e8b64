//! Command-line verbs. The binary only forwards `std::env::args_os` here.
//!
//! Exit codes: 0 success, 1 validation error, 2 numeric or training failure,
//! 3 verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::StateVec;
use crate::net::SurrogateValue;
use crate::ptp::{gamma_constant, PredefinedTimeParams};
use crate::simulator::{
    accumulate_cost, evaluate_surrogate, fmt17, integrate_batch, interior_grid, settling_time, TrajectoryStatus,
};
use crate::strategies::{closed_form_pair, NashFeedback, StrategyPair};
use crate::trainer::{train, CollocationSet, IterationRecord, Problem, TrainingReport};
use crate::verify::{verify_exact, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ptgame", about = "Safe predefined-time stabilization games: oracles, training, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the rate constant gamma of the decrease condition.
    Gamma {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        p: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        q: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        r: Option<f64>,
    },
    /// Run the analytic oracle suite on a built-in example.
    VerifyExact {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Interior samples for the pointwise checks.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Samples for the saddle-point checks.
        #[arg(long, default_value_t = 100_000)]
        saddle_samples: usize,
    },
    /// Train the value surrogate; writes a checkpoint per outer iteration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate the closed loop from a file of initial states.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path, or `exact` for the closed-form strategies.
        #[arg(long)]
        checkpoint: String,
        /// One state per line, comma separated; `#` starts a comment.
        #[arg(long)]
        initial: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// SAE metrics of a checkpoint against the exact solution.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path, or `exact`.
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Minimum level value of grid points.
        #[arg(long, default_value_t = 0.01)]
        margin: f64,
    },
}

/// Parses `args` and runs the verb; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Config(_) | Error::Domain(_) | Error::Unsupported(_) | Error::Io { .. } => EXIT_VALIDATION,
    }
}

pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::Gamma { config, alpha, beta, p, q, r } => cmd_gamma(config.as_deref(), [alpha, beta, p, q, r]),
        Command::VerifyExact { config, out, seed, samples, saddle_samples } => {
            let cfg = load_config(&config, seed)?;
            cmd_verify_exact(&cfg, out, samples, saddle_samples)
        }
        Command::Train { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            cmd_train(&cfg, out)
        }
        Command::Simulate { config, checkpoint, initial, out, seed } => {
            let cfg = load_config(&config, seed)?;
            cmd_simulate(&cfg, &checkpoint, &initial, out)
        }
        Command::Evaluate { config, checkpoint, out, seed, grid, margin } => {
            let cfg = load_config(&config, seed)?;
            cmd_evaluate(&cfg, &checkpoint, out, grid, margin)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Collects output files under one directory and writes `manifest.txt`
/// (deterministic) and `metadata.txt` (timestamps) at the end.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(path)
    }

    pub fn finish(mut self, verb: &str) -> Result<()> {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = format!("verb {verb}\nfinished_unix {secs}\nversion {}\n", env!("CARGO_PKG_VERSION"));
        self.write("metadata.txt", &meta)?;
        let mut manifest = String::new();
        for f in self.files.iter().chain(std::iter::once(&"manifest.txt".to_string())) {
            manifest.push_str(f);
            manifest.push('\n');
        }
        let path = self.root.join("manifest.txt");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        self.files.clear();
        Ok(())
    }
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<OutputDir> {
    OutputDir::create(out.unwrap_or_else(|| cfg.output_dir.clone()))
}

/// Four-digit settling times quoted for the default exponents; the second has
/// transposed digits and does not match the formula.
pub const QUOTED_SETTLING_TIMES: [f64; 2] = [3.4259, 3.4295];

pub fn cmd_gamma(config: Option<&Path>, explicit: [Option<f64>; 5]) -> Result<i32> {
    let base = match config {
        Some(path) => {
            let s = ExperimentConfig::load(path)?.predefined_time;
            [s.alpha, s.beta, s.p, s.q, s.r]
        }
        None => {
            let d = PredefinedTimeParams::from_strategy_exponents(0.5, 1.5)?;
            [d.alpha(), d.beta(), d.p(), d.q(), d.r()]
        }
    };
    let v: Vec<f64> = base.iter().zip(explicit).map(|(b, e)| e.unwrap_or(*b)).collect();
    let g = gamma_constant(v[0], v[1], v[2], v[3], v[4]).map_err(|e| match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    })?;
    println!("alpha {} beta {} p {} q {} r {}", v[0], v[1], v[2], v[3], v[4]);
    println!("gamma {g:.10}");
    println!("T_p (rate gamma/T_p = 1) {g:.10}");
    // Two four-digit values of T_p circulate for the default exponents.
    for quoted in QUOTED_SETTLING_TIMES {
        println!("|gamma - {quoted}| = {:.3e}", (g - quoted).abs());
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify_exact(
    cfg: &ExperimentConfig,
    out: Option<PathBuf>,
    samples: usize,
    saddle_samples: usize,
) -> Result<i32> {
    cfg.exact_value()?;
    let model = cfg.model()?;
    let suite = SuiteConfig { samples, saddle_samples, margin: 0.01, seed: cfg.seed };
    let report = verify_exact(
        &model,
        cfg.base_kind(),
        cfg.strategy_params()?,
        &cfg.predefined_time()?,
        &suite,
    )?;
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = out {
        let mut dir = OutputDir::create(dir)?;
        dir.write("verify.txt", &text)?;
        dir.finish("verify-exact")?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFICATION })
}

/// Result of [`train_experiment`].
pub struct TrainedSurrogate {
    pub surrogate: SurrogateValue,
    pub params: Vec<f64>,
    pub report: TrainingReport,
}

/// Builds the problem from a config and runs the trainer.
/// `on_iteration(k, w_k, record)` sees every outer iteration, `k = 0` being the
/// initialization (with no record).
pub fn train_experiment<F>(cfg: &ExperimentConfig, mut on_iteration: F) -> Result<TrainedSurrogate>
where
    F: FnMut(usize, &SurrogateValue, &[f64], Option<&IterationRecord>) -> Result<()>,
{
    let model = cfg.model()?;
    let ptp = cfg.predefined_time()?;
    let surrogate = cfg.surrogate()?;
    let tcfg = cfg.train_config()?;
    let colset = CollocationSet::sample(&model, tcfg.collocation_points, tcfg.margin, tcfg.seed)?;
    let w0 = surrogate.init_params().0;
    on_iteration(0, &surrogate, &w0, None)?;
    let problem = Problem { model: &model, surrogate: &surrogate, ptp: &ptp, colset: &colset };
    let (params, report) = train(problem, &tcfg, w0, |k, w, rec| on_iteration(k, &surrogate, w, Some(rec)))?;
    Ok(TrainedSurrogate { surrogate, params, report })
}

pub fn cmd_train(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<i32> {
    let mut dir = out_dir(cfg, out)?;
    dir.write("config.toml", &cfg.to_toml())?;
    let result = {
        let dir = &mut dir;
        train_experiment(cfg, |k, s, w, rec| {
            let ck = Checkpoint::new(s, k, w.to_vec())?;
            dir.write(&format!("checkpoint_{k:03}.txt"), &ck.to_text())?;
            if let Some(r) = rec {
                eprintln!(
                    "outer {k}: E = {:.6e}, max l = {:.3e}, violated {:.2}%, {} inner iterations ({})",
                    r.hji_loss,
                    r.max_constraint,
                    100.0 * r.violated_fraction,
                    r.inner_iterations,
                    r.inner_termination.name()
                );
            }
            Ok(())
        })
    };
    let trained = match result {
        Ok(t) => t,
        Err(e) => {
            dir.finish("train")?;
            return Err(e);
        }
    };
    dir.write("report.csv", &trained.report.to_csv())?;
    dir.write("timing.csv", &trained.report.timing_csv())?;
    let code = match &trained.report.failure {
        Some(msg) => {
            eprintln!("training stopped early: {msg}");
            dir.write("failure.txt", &format!("{msg}\n"))?;
            EXIT_NUMERIC
        }
        None => EXIT_OK,
    };
    dir.finish("train")?;
    Ok(code)
}

/// Parses initial states: one per line, comma or whitespace separated.
pub fn parse_initial_states(text: &str, dim: usize) -> Result<Vec<StateVec>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        match vals {
            Ok(v) if v.len() == dim => out.push(StateVec::from_vec(v)),
            // A header line such as `x1,x2` is skipped.
            Err(_) if out.is_empty() && line.chars().any(|c| c.is_alphabetic()) => continue,
            _ => {
                return Err(Error::config(format!(
                    "initial-state line {}: expected {dim} numbers, got `{line}`",
                    lineno + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::config("initial-state file holds no states"));
    }
    Ok(out)
}

/// Checkpoint argument: a file path or the literal `exact`.
pub enum ValueSource {
    Exact,
    Trained(SurrogateValue, Vec<f64>),
}

pub fn load_value_source(cfg: &ExperimentConfig, arg: &str) -> Result<ValueSource> {
    if arg == "exact" {
        cfg.exact_value()?;
        return Ok(ValueSource::Exact);
    }
    let ck = Checkpoint::load(Path::new(arg))?;
    ck.check_compatible(&cfg.surrogate()?)?;
    Ok(ValueSource::Trained(ck.surrogate()?, ck.params))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, checkpoint: &str, initial: &Path, out: Option<PathBuf>) -> Result<i32> {
    let model = cfg.model()?;
    let sim = cfg.sim_config();
    sim.validate()?;
    let text = fs::read_to_string(initial).map_err(|e| Error::io(initial, e))?;
    let states = parse_initial_states(&text, model.state_dim())?;
    let source = load_value_source(cfg, checkpoint)?;
    let bound_value;
    let nash;
    let closed;
    let pair: &dyn StrategyPair = match &source {
        ValueSource::Exact => {
            closed = closed_form_pair(cfg.base_kind(), cfg.gamma1, cfg.gamma2)?;
            &closed
        }
        ValueSource::Trained(s, w) => {
            bound_value = s.bind(w);
            nash = NashFeedback::new(&model, &bound_value);
            &nash
        }
    };
    let results = integrate_batch(&model, pair, &states, &sim);
    let mut dir = out_dir(cfg, out)?;
    let n = model.state_dim();
    let mut summary = String::from("index");
    for i in 1..=n {
        summary.push_str(&format!(",x{i}_0"));
    }
    summary.push_str(",status,settled_at,settling_time_1e-3,min_safety_level,final_norm,cost\n");
    let mut all_ok = true;
    for (idx, (x0, res)) in states.iter().zip(results).enumerate() {
        summary.push_str(&idx.to_string());
        for v in x0.iter() {
            summary.push(',');
            summary.push_str(&fmt17(*v));
        }
        match res {
            Ok(traj) => {
                dir.write(&format!("trajectory_{idx:03}.csv"), &traj.to_csv())?;
                let status = match traj.status {
                    TrajectoryStatus::Completed => "completed",
                    TrajectoryStatus::SafetyViolation { .. } => "safety_violation",
                };
                all_ok &= traj.is_safe();
                let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
                let cost = accumulate_cost(&traj, sim.horizon).ok();
                summary.push_str(&format!(
                    ",{status},{},{},{},{},{}\n",
                    opt(traj.settled_at),
                    opt(settling_time(&traj, 1e-3)),
                    fmt17(traj.min_safety_level),
                    fmt17(traj.final_state().norm()),
                    opt(cost)
                ));
            }
            Err(Error::Numeric(m)) => {
                eprintln!("trajectory {idx}: numeric error: {m}");
                dir.write("summary.csv", &summary)?;
                dir.finish("simulate")?;
                return Err(Error::Numeric(format!("trajectory {idx}: {m}")));
            }
            Err(e) => {
                eprintln!("trajectory {idx}: {e}");
                all_ok = false;
                summary.push_str(",domain_error,,,,,\n");
            }
        }
    }
    dir.write("summary.csv", &summary)?;
    dir.finish("simulate")?;
    Ok(if all_ok { EXIT_OK } else { EXIT_VERIFICATION })
}

pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    checkpoint: &str,
    out: Option<PathBuf>,
    per_axis: usize,
    margin: f64,
) -> Result<i32> {
    let exact = cfg.exact_value()?;
    let model = cfg.model()?;
    if per_axis < 2 {
        return Err(Error::config("grid needs at least 2 points per axis"));
    }
    let grid = interior_grid(&model, per_axis, margin);
    let table = match load_value_source(cfg, checkpoint)? {
        ValueSource::Exact => evaluate_surrogate(&model, &exact, &exact, &grid)?,
        ValueSource::Trained(s, w) => evaluate_surrogate(&model, &s.bind(&w), &exact, &grid)?,
    };
    let summary = table.summary_csv();
    print!("{summary}");
    let mut dir = out_dir(cfg, out)?;
    dir.write("metrics.csv", &table.to_csv())?;
    dir.write("metrics_summary.csv", &summary)?;
    dir.finish("evaluate")?;
    Ok(EXIT_OK)
}
