//! `initcap`: run sweeps, re-check their certificates, estimate Rademacher
//! complexities, fit power laws and plot results.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 I/O or format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use initcap_core::capacity::linear_rademacher_bound;
use initcap_core::concentration::default_suite;
use initcap_core::experiment::{
    fit_csv, plot, run_sweep, verify_bounds, ExperimentProfile, PlotSpec, SweepConfig,
};
use initcap_core::network::checkpoint::load_checkpoint;
use initcap_core::network::xavier_init;
use initcap_core::rademacher::{estimate, AscentConfig};
use initcap_core::{Activation, Error, InitSnapshot, NetShape, Rng};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "initcap", version, about = "Distance from initialization: sweeps and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every grid point from a fresh initialization and write sweep.csv
    /// plus checkpoints into the output directory.
    Sweep(Box<SweepArgs>),
    /// Re-check every certificate of a sweep directory from its checkpoints.
    VerifyBounds {
        dir: PathBuf,
    },
    /// Monte-Carlo estimate of the Rademacher complexity of a distance ball.
    EstimateRademacher(RadArgs),
    /// Simulation checks of the Gaussian concentration facts.
    VerifyConcentration {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Log-log least-squares fit of column y against column x (per-x means).
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// SVG line plot of column y against x, one line per group value.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
    },
}

/// Flags override config-file keys, which override profile defaults. A flag
/// given twice keeps its last value.
#[derive(Args)]
#[command(args_override_self = true)]
struct SweepArgs {
    /// Flat `key = value` file using the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A, B, C, noise-full or noise-partial (default C).
    #[arg(long)]
    profile: Option<String>,
    /// Dataset directory, or `synthetic`.
    #[arg(long)]
    dataset: Option<String>,
    /// Widths, e.g. `32,64` or `32..512` (powers of two).
    #[arg(long = "H")]
    widths: Option<String>,
    /// Training-set sizes, same syntax as --H.
    #[arg(long = "m")]
    sample_sizes: Option<String>,
    /// Label-noise levels in [0, 1], comma-separated.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    /// `loss<0.001`, `loss<=0.1*initial`, `margin>=1@0.99` or `epochs`.
    #[arg(long)]
    stop: Option<String>,
    /// `squared` or `cross_entropy`.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    test_size: Option<String>,
    #[arg(long)]
    probes: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Synthetic data: input dimension.
    #[arg(long)]
    input_dim: Option<String>,
    /// Synthetic data: number of classes.
    #[arg(long)]
    classes: Option<String>,
    /// Synthetic data: norm of the class means.
    #[arg(long)]
    separation: Option<String>,
}

impl SweepArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v: Vec<(&'static str, String)> = Vec::new();
        let mut push = |k: &'static str, val: &Option<String>| {
            if let Some(val) = val {
                v.push((k, val.clone()));
            }
        };
        push("experiment", &self.experiment);
        push("dataset", &self.dataset);
        push("input_dim", &self.input_dim);
        push("classes", &self.classes);
        push("separation", &self.separation);
        push("H", &self.widths);
        push("m", &self.sample_sizes);
        push("noise", &self.noise);
        push("seeds", &self.seeds);
        push("depth", &self.depth);
        push("activation", &self.activation);
        push("lr", &self.lr);
        push("momentum", &self.momentum);
        push("batch_size", &self.batch_size);
        push("max_epochs", &self.max_epochs);
        push("stop", &self.stop);
        push("loss", &self.loss);
        push("test_size", &self.test_size);
        push("probes", &self.probes);
        push("threads", &self.threads);
        if let Some(out) = &self.out {
            v.push(("out", out.display().to_string()));
        }
        v
    }
}

#[derive(Args)]
struct RadArgs {
    /// Radius of the ball around the initialization.
    #[arg(long)]
    r: f64,
    #[arg(long, default_value = "relu")]
    activation: String,
    /// Initialization checkpoint; a fresh Xavier network otherwise.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    input_dim: usize,
    #[arg(long = "H", default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Number of random inputs in [0, 1]^n.
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Outcome of a subcommand that ran to completion.
enum Outcome {
    Ok,
    VerificationFailed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
        Error::Format { .. } | Error::Io { .. } | Error::Csv(_) => EXIT_IO,
        Error::Estimation(_) => EXIT_VERIFY,
    }
}

fn sweep_config(args: &SweepArgs) -> Result<SweepConfig, Error> {
    let file_text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?),
        None => None,
    };
    let file_profile = file_text.as_deref().and_then(|t| {
        t.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "profile")
            .map(|(_, v)| v.trim().to_string())
    });
    let profile: ExperimentProfile = args
        .profile
        .clone()
        .or(file_profile)
        .unwrap_or_else(|| "C".into())
        .parse()?;
    let mut cfg = SweepConfig::from_profile(profile);
    if let Some(text) = file_text {
        let rest: String = text
            .lines()
            .filter(|l| l.split_once('=').map_or(true, |(k, _)| k.trim() != "profile"))
            .map(|l| format!("{l}\n"))
            .collect();
        cfg.apply_text(&rest)?;
    }
    for (k, v) in args.overrides() {
        cfg.set(k, &v)?;
    }
    Ok(cfg)
}

fn cmd_sweep(args: &SweepArgs) -> Result<Outcome, Error> {
    let cfg = sweep_config(args)?;
    let recs = run_sweep(&cfg)?;
    let failed = recs.iter().filter(|r| !r.succeeded()).count();
    let violations = recs.iter().filter(|r| r.succeeded() && !r.certificates_ok).count();
    for r in recs.iter().filter(|r| !r.succeeded()) {
        eprintln!("warning: {}: {}", r.key, r.status);
    }
    println!(
        "{} grid points, {} failed, {} with certificate violations; wrote {}",
        recs.len(),
        failed,
        violations,
        cfg.out_dir.join(initcap_core::experiment::SWEEP_CSV).display()
    );
    Ok(if violations == 0 {
        Outcome::Ok
    } else {
        Outcome::VerificationFailed
    })
}

fn cmd_verify_bounds(dir: &Path) -> Result<Outcome, Error> {
    let report = verify_bounds(dir)?;
    print!("{}", report.summary());
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::VerificationFailed
    })
}

fn cmd_estimate(args: &RadArgs) -> Result<Outcome, Error> {
    let activation: Activation = args.activation.parse()?;
    let z = match &args.init {
        Some(path) => {
            let p = load_checkpoint(path)?;
            if p.shape().activation != activation {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint uses {} but --activation is {}",
                    p.shape().activation.name(),
                    activation.name()
                )));
            }
            InitSnapshot::new(p)
        }
        None => {
            let shape = NetShape::new(args.input_dim, args.width, args.depth, 1, activation)?;
            InitSnapshot::new(xavier_init(&mut Rng::new(args.seed), shape)?)
        }
    };
    let n = z.shape().input_dim;
    let mut rng = Rng::new(args.seed).fork(1);
    let xs: Vec<Vec<f64>> = (0..args.m)
        .map(|_| (0..n).map(|_| rng.uniform()).collect())
        .collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let cfg = AscentConfig {
        restarts: args.restarts,
        steps: args.steps,
        step_size: args.step_size,
    };
    let est = estimate(&z, args.r, &refs, args.trials, &cfg, &Rng::new(args.seed).fork(2))?;
    println!("mean {:.6e}", est.mean);
    println!("std_error {:.6e}", est.std_error);
    println!("trials {} (discarded {})", est.trials, est.discarded);
    if activation == Activation::Linear {
        let bound = linear_rademacher_bound(&z, args.r, &refs)?;
        let lower = est.mean - 3.0 * est.std_error;
        let pass = lower <= bound * (1.0 + initcap_core::capacity::ROUNDING_SLACK);
        println!("linear_bound {bound:.6e}");
        println!("{} mean - 3 se = {lower:.6e} <= bound", if pass { "PASS" } else { "FAIL" });
        if !pass {
            return Ok(Outcome::VerificationFailed);
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_concentration(seed: u64, csv: Option<&Path>) -> Result<Outcome, Error> {
    let report = default_suite(&Rng::new(seed))?;
    print!("{}", report.table());
    if let Some(path) = csv {
        report.write_csv(path)?;
    }
    Ok(if report.all_pass() {
        Outcome::Ok
    } else {
        Outcome::VerificationFailed
    })
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Sweep(args) => cmd_sweep(&args),
        Command::VerifyBounds { dir } => cmd_verify_bounds(&dir),
        Command::EstimateRademacher(args) => cmd_estimate(&args),
        Command::VerifyConcentration { seed, csv } => cmd_concentration(seed, csv.as_deref()),
        Command::Fit { csv, x, y } => {
            let f = fit_csv(&csv, &x, &y)?;
            println!("exponent {:.6}", f.exponent);
            println!("intercept {:.6}", f.intercept);
            println!("r2 {:.6}", f.r2);
            println!("points {}", f.points);
            Ok(Outcome::Ok)
        }
        Command::Plot {
            csv,
            x,
            y,
            group,
            out,
            log_x,
            log_y,
        } => {
            let spec = PlotSpec {
                x,
                y,
                group,
                log_x,
                log_y,
            };
            plot(&csv, &spec, &out)?;
            println!("wrote {}", out.display());
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
