//! `essreg` command-line front end.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn, LevelFilter};
use nalgebra::DVector;

use essreg::cv::{cv_select_delta, DeltaGrid};
use essreg::inference::report_all;
use essreg::io;
use essreg::pipeline::{fit, restore, DeltaMode, FitConfig};
use essreg::simulation::{
    run_experiment, DeltaChoice, DgpConfig, ExperimentConfig, ExperimentResult, GammaKind,
    SigmaZKind,
};
use essreg::{center, delta_default, sample_covariance, standardize, Dataset, EssRegError, Execution, VarianceFormula};

const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("ESSREG_BUILD"), ")");

#[derive(Parser)]
#[command(name = "essreg", version = BUILD_ID, about = "Latent factor regression with inference on the factor coefficients")]
struct Cli {
    /// More log output (repeat for debug level).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only warnings and errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the model from a CSV file and write it as JSON.
    Fit(FitArgs),
    /// Confidence intervals for every coefficient of a saved model.
    Infer(InferArgs),
    /// Monte Carlo experiments on synthetic data.
    Simulate(SimulateArgs),
    /// Cross-validation scores over the delta grid.
    CvDelta(CvArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column; every other column is a feature.
    #[arg(long)]
    response_col: String,
    /// Scale features to unit variance after centering.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output path for the model JSON.
    #[arg(long)]
    out: PathBuf,
    /// `cv`, a fixed value, or `rate:C` for C * sqrt(log(max(p, n)) / n).
    #[arg(long, default_value = "cv")]
    delta: DeltaArg,
    /// Seed for the cross-validation split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the competitor estimators.
    #[arg(long)]
    no_competitors: bool,
}

#[derive(Args)]
struct InferArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Input CSV with a header row (the data the model was fit on).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    response_col: String,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// general, simplified, large-signal or i-based.
    #[arg(long, default_value = "general")]
    formula: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Run a named group of settings: `table-main` sweeps n over 200, 400, 600, 800
    /// at p = 400, K = 10, m = 5.
    #[arg(long, conflicts_with_all = ["n", "p", "k", "m"])]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// paper-ar, identity or ar:RHO.
    #[arg(long, default_value = "paper-ar")]
    sigma_z: String,
    /// Multiplier applied to the factor covariance.
    #[arg(long, default_value_t = 1.0)]
    sigma_z_scale: f64,
    /// unif (Uniform(1, 3) noise variances) or scalar:V.
    #[arg(long, default_value = "unif")]
    gamma: String,
    /// Shrink the last n-a loading columns by this factor.
    #[arg(long)]
    theta: Option<f64>,
    /// Number of shrunk columns when --theta is given.
    #[arg(long, default_value_t = 1)]
    n_a: usize,
    /// `cv`, a fixed value, or `rate:C`.
    #[arg(long, default_value = "cv")]
    delta: DeltaArg,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Summary table CSV.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Optional CSV of standardized first-coordinate statistics.
    #[arg(long)]
    hist_out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output CSV of grid scores.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug)]
enum DeltaArg {
    Cv,
    Fixed(f64),
    Rate(f64),
}

impl FromStr for DeltaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|d| *d >= 0.0 && d.is_finite())
                .ok_or_else(|| format!("invalid delta '{s}'"))
        };
        match s {
            "cv" => Ok(DeltaArg::Cv),
            _ => match s.strip_prefix("rate:") {
                Some(c) => num(c).map(DeltaArg::Rate),
                None => num(s).map(DeltaArg::Fixed),
            },
        }
    }
}

/// A failure with a stable code and the process exit status.
struct Failure {
    code: &'static str,
    message: String,
    exit: u8,
}

impl Failure {
    fn usage(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            exit: 2,
        }
    }
}

impl From<EssRegError> for Failure {
    fn from(e: EssRegError) -> Self {
        let exit = match e {
            EssRegError::InvalidInput(_)
            | EssRegError::MissingColumn(_)
            | EssRegError::Io(_)
            | EssRegError::Parse(_) => 2,
            _ => 1,
        };
        Self {
            code: e.code(),
            message: e.to_string(),
            exit,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        EssRegError::from(e).into()
    }
}

type CliResult = Result<(), Failure>;

fn check_input(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage("ER_IO", format!("input file {} does not exist", path.display())))
    }
}

fn check_output(path: &Path) -> CliResult {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(Failure::usage(
            "ER_IO",
            format!("output directory {} does not exist", dir.display()),
        )),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load(data: &DataArgs) -> Result<Dataset, Failure> {
    let ds = io::read_dataset_file(&data.input, &data.response_col)?;
    info!("read n = {}, p = {} from {}", ds.n(), ds.p(), data.input.display());
    Ok(prepare(&ds, data.standardize))
}

fn prepare(ds: &Dataset, scale: bool) -> Dataset {
    if scale {
        standardize(ds)
    } else {
        center(ds)
    }
}

fn run_fit(args: &FitArgs) -> CliResult {
    check_input(&args.data.input)?;
    check_output(&args.out)?;
    let data = load(&args.data)?;
    let delta = match args.delta {
        DeltaArg::Cv => DeltaMode::Cv {
            grid: None,
            seed: args.seed,
        },
        DeltaArg::Fixed(d) => DeltaMode::Fixed(d),
        DeltaArg::Rate(c) => DeltaMode::Fixed(delta_default(data.n(), data.p(), c)),
    };
    let config = FitConfig {
        delta,
        competitors: !args.no_competitors,
        ..Default::default()
    };
    let mut out = fit(&data, &config)?;
    if let Some(cv) = &out.cv {
        for r in &cv.records {
            info!(
                "cv grid delta = {:.6e} k_hat = {} score = {:.6e}",
                r.delta,
                r.k_hat.map_or("-".into(), |k| k.to_string()),
                r.cv_score
            );
        }
    }
    out.model.standardized = args.data.standardize;
    io::write_model(&args.out, &out.model)?;
    let m = &out.model;
    println!("k_hat = {}", m.k_hat());
    println!("group_sizes = {:?}", m.partition.group_sizes());
    println!("delta = {}", io::fmt_num(m.delta));
    println!("ridge_t = {}", io::fmt_num(m.ridge_t));
    println!("clipped_gamma = {}", m.clip_counts.gamma);
    println!("clipped_sigma_sq = {}", m.clip_counts.sigma_sq);
    println!(
        "beta_hat = [{}]",
        m.beta_hat.iter().map(|&b| io::fmt_num(b)).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn run_infer(args: &InferArgs) -> CliResult {
    check_input(&args.model)?;
    check_input(&args.input)?;
    check_output(&args.out)?;
    let formula = VarianceFormula::from_str(&args.formula)?;
    let model = io::read_model(&args.model)?;
    let raw = io::read_dataset_file(&args.input, &args.response_col)?;
    let data = prepare(&raw, model.standardized);
    if data.n() != model.n {
        warn!("model was fit on n = {} rows, data has n = {}", model.n, data.n());
    }
    let summary = sample_covariance(&data)?;
    let out = restore(&model, &summary)?;
    let inputs = out.variance_inputs()?;
    let estimates = match formula {
        VarianceFormula::IBased => model
            .competitors
            .beta_i
            .clone()
            .ok_or_else(|| EssRegError::FormulaMismatch("i-based (model has no I-based estimate)".into()))?,
        _ => model.beta_hat.clone(),
    };
    let estimates = DVector::from_column_slice(&estimates);
    let reports = report_all(&inputs, &estimates, data.n(), args.level, formula)?;
    io::write_inference(create(&args.out)?, &reports)?;
    for r in &reports {
        println!(
            "k = {}: estimate {:.6} [{:.6}, {:.6}]",
            r.coordinate, r.estimate, r.ci_lower, r.ci_upper
        );
    }
    Ok(())
}

fn parse_sigma_z(s: &str) -> Result<SigmaZKind, Failure> {
    match s {
        "paper-ar" => Ok(SigmaZKind::DecayingAr),
        "identity" => Ok(SigmaZKind::IdentityScaled),
        _ => s
            .strip_prefix("ar:")
            .and_then(|r| r.parse().ok())
            .map(SigmaZKind::ArRho)
            .ok_or_else(|| Failure::usage("ER_INVALID_INPUT", format!("invalid --sigma-z '{s}'"))),
    }
}

fn parse_gamma(s: &str) -> Result<GammaKind, Failure> {
    match s {
        "unif" => Ok(GammaKind::Unif13),
        _ => s
            .strip_prefix("scalar:")
            .and_then(|v| v.parse().ok())
            .map(GammaKind::Scalar)
            .ok_or_else(|| Failure::usage("ER_INVALID_INPUT", format!("invalid --gamma '{s}'"))),
    }
}

/// `(label, (n, p, k, m))` for every requested setting.
fn settings(args: &SimulateArgs) -> Result<Vec<(String, (usize, usize, usize, usize))>, Failure> {
    let dims: Vec<(usize, usize, usize, usize)> = match args.preset.as_deref() {
        Some("table-main") => [200, 400, 600, 800].iter().map(|&n| (n, 400, 10, 5)).collect(),
        Some(other) => {
            return Err(Failure::usage("ER_INVALID_INPUT", format!("unknown preset '{other}'")))
        }
        None => vec![(
            args.n.unwrap_or(400),
            args.p.unwrap_or(400),
            args.k.unwrap_or(10),
            args.m.unwrap_or(5),
        )],
    };
    Ok(dims
        .into_iter()
        .map(|d| (format!("n={} p={} K={} m={}", d.0, d.1, d.2, d.3), d))
        .collect())
}

fn run_simulate(args: &SimulateArgs) -> CliResult {
    check_output(&args.out)?;
    if let Some(h) = &args.hist_out {
        check_output(h)?;
        if h == &args.out {
            return Err(Failure::usage("ER_IO", "--out and --hist-out must differ"));
        }
    }
    let sigma_z_kind = parse_sigma_z(&args.sigma_z)?;
    let gamma_kind = parse_gamma(&args.gamma)?;
    let delta = match args.delta {
        DeltaArg::Cv => DeltaChoice::Cv,
        DeltaArg::Fixed(d) => DeltaChoice::Fixed(d),
        DeltaArg::Rate(c) => DeltaChoice::Rate(c),
    };
    let mut configs = Vec::new();
    for (label, (n, p, k, m)) in settings(args)? {
        let dgp = DgpConfig {
            sigma_z_kind: sigma_z_kind.clone(),
            sigma_z_scale: args.sigma_z_scale,
            gamma_kind: gamma_kind.clone(),
            weak_column_theta: args.theta,
            weak_column_count: if args.theta.is_some() { args.n_a } else { 0 },
            rng_seed: args.seed,
            ..DgpConfig::standard(n, p, k, m)
        };
        dgp.validate()?;
        let mut cfg = ExperimentConfig::new(dgp, args.reps);
        cfg.delta = delta.clone();
        cfg.level = args.level;
        configs.push((label, cfg));
    }
    let mut results: Vec<(String, ExperimentResult)> = Vec::new();
    for (label, cfg) in configs {
        info!("running {label} with {} replications", cfg.reps);
        let res = run_experiment(&cfg)?;
        echo(&label, &res);
        results.push((label, res));
    }
    let refs: Vec<(String, &ExperimentResult)> = results.iter().map(|(l, r)| (l.clone(), r)).collect();
    io::write_results(create(&args.out)?, &refs)?;
    if let Some(h) = &args.hist_out {
        io::write_standardized(create(h)?, &refs)?;
    }
    if let Some((label, _)) = results.iter().find(|(_, r)| r.aggregate.failures == r.aggregate.reps) {
        return Err(Failure {
            code: "ER_ALL_REPLICATIONS_FAILED",
            message: format!("every replication failed in setting {label}"),
            exit: 1,
        });
    }
    Ok(())
}

fn echo(label: &str, res: &ExperimentResult) {
    let a = &res.aggregate;
    let pct = |v: Option<f64>| v.map_or("-".into(), |c| format!("{:.1}%", 100.0 * c));
    let num = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
    println!(
        "{label}: reps {} failures {} mean_k_hat {:.2} mse(beta_hat) {} coverage {} ci_length {}",
        a.reps,
        a.failures,
        a.mean_k_hat,
        num(a.mean_mse.main),
        pct(a.coverage),
        num(a.mean_ci_length)
    );
    for (code, count) in &a.failure_codes {
        println!("{label}: {count} replications failed with {code}");
    }
}

fn run_cv(args: &CvArgs) -> CliResult {
    check_input(&args.data.input)?;
    check_output(&args.out)?;
    let data = load(&args.data)?;
    let grid = DeltaGrid::default_for(data.n(), data.p());
    let report = cv_select_delta(&data, &grid, args.seed, Execution::default())?;
    io::write_cv(create(&args.out)?, &report)?;
    println!("chosen_delta = {}", io::fmt_num(report.chosen_delta));
    Ok(())
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("ER_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::usage("ER_INVALID_INPUT", format!("ER_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::usage("ER_INVALID_INPUT", e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Warn,
        (false, 0) => LevelFilter::Info,
        (false, _) => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Infer(a) => run_infer(a),
        Command::Simulate(a) => run_simulate(a),
        Command::CvDelta(a) => run_cv(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}
