use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrh_cli::density::{density_records, write_records};
use mrh_cli::report::{bm_loglik, parse_fixed, run_fit, FitReport, FitRequest, ModelKind, Settings};
use mrh_cli::track_io::{parse_track, write_simulated, ParseOptions, TimeUnit};
use mrh_cli::{CliError, Result};
use mrh_core::inference::NelderMeadOptions;
use mrh_core::{loglik_forward, simulate_mrh, FitOptions, ModelParams, StartSpec, StateId};
use serde_json::json;

/// Moving-resting-handling model: simulate tracks, export occupation
/// densities, evaluate likelihoods and fit parameters.
#[derive(Parser, Debug)]
#[command(name = "mrh", version, about)]
struct Cli {
    /// Seed for every random choice (simulation, optimizer restarts).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a track on a time grid and write it as CSV.
    Simulate(SimulateArgs),
    /// Write occupation-density curves p_ij(s, t) and atoms as CSV.
    Density(DensityArgs),
    /// Evaluate the log-likelihood of a track.
    Loglik(LoglikArgs),
    /// Fit a model to a track and write a JSON report.
    Fit(FitArgs),
}

#[derive(Args, Debug, Clone)]
struct ParamArgs {
    /// Exit rate of the moving state.
    #[arg(long)]
    lambda0: f64,
    /// Exit rate of the resting state.
    #[arg(long)]
    lambda1: f64,
    /// Exit rate of the handling state.
    #[arg(long)]
    lambda2: f64,
    /// Probability that a stop is a rest rather than handling.
    #[arg(long)]
    p1: f64,
    /// Mobility while moving (per coordinate, per square-root time unit).
    #[arg(long)]
    sigma: Option<f64>,
}

impl ParamArgs {
    fn params(&self, sigma_default: Option<f64>) -> Result<ModelParams> {
        let sigma = self
            .sigma
            .or(sigma_default)
            .ok_or_else(|| CliError::Usage("--sigma is required".into()))?;
        Ok(ModelParams::new(
            self.lambda0,
            self.lambda1,
            self.lambda2,
            self.p1,
            sigma,
        )?)
    }
}

#[derive(Args, Debug, Clone)]
struct TrackArgs {
    /// Track CSV with a `time` column and coordinate columns.
    track: PathBuf,
    /// Unit of numeric times; timestamps always become hours.
    #[arg(long, value_enum, default_value_t = TimeUnit::Hours)]
    time_unit: TimeUnit,
    /// Expected number of coordinate columns.
    #[arg(long)]
    dim: Option<usize>,
    /// Round coordinates to the nearest multiple of this (0 = off).
    #[arg(long, default_value_t = 0.0)]
    round_grid: f64,
}

impl TrackArgs {
    fn options(&self) -> ParseOptions {
        ParseOptions {
            time_unit: self.time_unit,
            dim: self.dim,
            round_grid: self.round_grid,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StartArg {
    Stationary,
    Moving,
    Resting,
    Handling,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Last observation time of a regular grid starting at 0.
    #[arg(long, requires = "step", conflicts_with = "times")]
    t_end: Option<f64>,
    /// Spacing of the regular grid.
    #[arg(long, requires = "t_end")]
    step: Option<f64>,
    /// Explicit observation times, comma separated.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Initial state of the chain.
    #[arg(long, value_enum, default_value_t = StartArg::Stationary)]
    start: StartArg,
    /// Output file (default: standard output).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Time horizon t.
    #[arg(long)]
    t: f64,
    /// Start state (0, 1, 2 or a state name); all three if omitted.
    #[arg(long)]
    start: Option<StateId>,
    /// Number of grid points on [0, t].
    #[arg(long, default_value_t = 201)]
    grid_size: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LoglikArgs {
    #[command(flatten)]
    track: TrackArgs,
    /// Take the model and parameters from a fit report.
    #[arg(long, conflicts_with_all = ["lambda0", "lambda1", "lambda2", "p1", "sigma"])]
    report: Option<PathBuf>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    track: TrackArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::Mrh)]
    model: ModelKind,
    /// Starting point `lambda0,lambda1,lambda2,p1,sigma` (default: from the data).
    #[arg(long, value_delimiter = ',', num_args = 5)]
    init: Option<Vec<f64>>,
    /// Parameters held at their starting value, comma separated.
    #[arg(long, value_delimiter = ',')]
    fix: Vec<String>,
    /// Randomized restarts after the first optimizer run.
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    /// Function evaluations allowed per optimizer run.
    #[arg(long, default_value_t = 2000)]
    max_evals: usize,
    /// Report approximate standard errors from a numerical Hessian.
    #[arg(long)]
    standard_errors: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(format!("cannot create {}", p.display()), e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Json {
        context: "cannot write report".into(),
        source: e,
    })?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io("cannot write report", e))
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.ok_or_else(|| CliError::Usage("simulate requires --seed".into()))?;
    let params = args.params.params(None)?;
    let times = match (&args.times, args.t_end, args.step) {
        (Some(t), _, _) => t.clone(),
        (None, Some(end), Some(step)) => {
            if !(step > 0.0 && end >= 0.0 && (end / step).is_finite()) {
                return Err(CliError::Usage("--t-end must be >= 0 and --step > 0".into()));
            }
            let n = (end / step + 1e-9).floor() as usize;
            (0..=n).map(|k| k as f64 * step).collect()
        }
        _ => return Err(CliError::Usage("give either --times or both --t-end and --step".into())),
    };
    let start = match args.start {
        StartArg::Stationary => StartSpec::Stationary,
        StartArg::Moving => StartSpec::State(StateId::Moving),
        StartArg::Resting => StartSpec::State(StateId::Resting),
        StartArg::Handling => StartSpec::State(StateId::Handling),
    };
    let sim = simulate_mrh(&params, &times, args.dim, start, seed)?;
    write_simulated(output(args.out.as_deref())?, &sim)
}

fn density(args: &DensityArgs) -> Result<()> {
    let params = args.params.params(Some(1.0))?;
    let records = density_records(&params, args.t, args.start, args.grid_size)?;
    write_records(output(args.out.as_deref())?, &records)
}

fn read_report(path: &Path) -> Result<FitReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        context: format!("invalid fit report {}", path.display()),
        source: e,
    })
}

fn loglik(args: &LoglikArgs) -> Result<()> {
    let track = parse_track(&args.track.track, &args.track.options())?;
    let (model, value) = match &args.report {
        Some(path) => {
            let report = read_report(path)?;
            let value = match report.params()? {
                Some(p) => Some(loglik_forward(&track, &p)?),
                None => bm_loglik(&track, report.estimates.sigma.unwrap_or(0.0))?,
            };
            (report.model, value)
        }
        None => {
            let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("--{flag} is required")));
            let p = ModelParams::new(
                need(args.lambda0, "lambda0")?,
                need(args.lambda1, "lambda1")?,
                need(args.lambda2, "lambda2")?,
                need(args.p1, "p1")?,
                need(args.sigma, "sigma")?,
            )?;
            (ModelKind::Mrh, Some(loglik_forward(&track, &p)?))
        }
    };
    write_json(
        None,
        &json!({ "model": model, "loglik": value, "n_increments": track.n_increments() }),
    )
}

fn fit(args: &FitArgs, seed: Option<u64>) -> Result<()> {
    let opts = args.track.options();
    let track = parse_track(&args.track.track, &opts)?;
    let init = match &args.init {
        Some(v) => Some(ModelParams::new(v[0], v[1], v[2], v[3], v[4])?),
        None => None,
    };
    let req = FitRequest {
        model: args.model,
        init,
        fixed: parse_fixed(&args.fix)?,
        options: FitOptions {
            restarts: args.restarts,
            seed: seed.unwrap_or(0),
            standard_errors: args.standard_errors,
            simplex: NelderMeadOptions {
                max_evals: args.max_evals,
                ..NelderMeadOptions::default()
            },
            ..FitOptions::default()
        },
    };
    let settings = Settings {
        track: args.track.track.display().to_string(),
        n_increments: track.n_increments(),
        dim: track.dim(),
        time_unit: format!("{:?}", opts.time_unit).to_lowercase(),
        round_grid: opts.round_grid,
        init: String::new(),
        fixed: Vec::new(),
        restarts: 0,
        max_evals: 0,
        standard_errors: false,
    };
    let report = run_fit(&track, &req, settings)?;
    write_json(args.out.as_deref(), &report)?;
    if report.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Density(a) => density(a),
        Command::Loglik(a) => loglik(a),
        Command::Fit(a) => fit(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
