//! The `fou` command line: simulate, transfer, predict and verify.
//!
//! Every command writes into the output directory (`--out`, or `FOU_OUT_DIR`)
//! a `meta.txt` echoing the configuration next to its CSV files. Exit codes:
//! 0 on success, 1 when a verification check fails, 2 on usage or input errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path as FsPath, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{read_paths, write_paths};
use crate::kernels::{c_h, check_hurst, FouParams};
use crate::prediction::{gaussian_conditioning_oracle, Predictor};
use crate::simulation::{sample_bm, Path, Process, SeedSpec, TransferEngine};
use crate::verify::{self, Suite, Tolerances, VerifyConfig};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "fou", version, about = "Fractional Ornstein-Uhlenbeck paths, transfers and predictions")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "FOU_OUT_DIR", default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample paths of W, fBm or fOU.
    Simulate(SimulateArgs),
    /// Transform paths read from a CSV file.
    Transfer(TransferArgs),
    /// Conditional mean and covariance of an observed fOU path.
    Predict(PredictArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Mean-reversion rate.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta: f64,
    /// Noise scale.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Hurst index in (0,1).
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub hurst: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0, allow_negative_numbers = true)]
    pub horizon: f64,
    /// Number of grid steps.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcessArg {
    #[value(alias = "w")]
    Bm,
    Fbm,
    Fou,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub process: ProcessArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    BmFbm,
    FbmBm,
    BmFou,
    FouBm,
    FbmFou,
    FouFbm,
}

impl Direction {
    fn ends(self) -> (Process, Process) {
        use Process::*;
        match self {
            Direction::BmFbm => (Bm, Fbm),
            Direction::FbmBm => (Fbm, Bm),
            Direction::BmFou => (Bm, Fou),
            Direction::FouBm => (Fou, Bm),
            Direction::FbmFou => (Fbm, Fou),
            Direction::FouFbm => (Fou, Fbm),
        }
    }
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Paths CSV (`path_id,t,value`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub direction: Direction,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also transform back and write the reconstruction error per path.
    #[arg(long)]
    pub round_trip: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// fOU paths CSV (`path_id,t,value`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub path_id: usize,
    /// Base time; must be a grid point of the observed path.
    #[arg(long)]
    pub u: f64,
    /// Comma-separated target times, none before `u`.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub targets: Vec<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also condition the discretized process exactly and write comparison columns.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// gram | roundtrip | isometry | transfer-integral | prediction | all
    #[arg(long)]
    pub suite: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 200)]
    pub paths: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = Tolerances::default().gram)]
    pub tol_gram: f64,
    #[arg(long, default_value_t = Tolerances::default().reduction)]
    pub tol_reduction: f64,
    #[arg(long, default_value_t = Tolerances::default().roundtrip)]
    pub tol_roundtrip: f64,
    /// In standard errors.
    #[arg(long, default_value_t = Tolerances::default().isometry)]
    pub tol_isometry: f64,
    #[arg(long, default_value_t = Tolerances::default().transfer)]
    pub tol_transfer: f64,
    #[arg(long, default_value_t = Tolerances::default().prediction)]
    pub tol_prediction: f64,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// `Ok(false)` when a verification check failed.
fn dispatch(cli: &Cli) -> Result<bool> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::Io(format!("{}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &cli.out).map(|_| true),
        Command::Transfer(a) => transfer(a, &cli.out).map(|_| true),
        Command::Predict(a) => predict(a, &cli.out).map(|_| true),
        Command::Verify(a) => verify_cmd(a, &cli.out),
    }
}

fn flag_error(flag: &str, e: Error) -> Error {
    let msg = match e {
        Error::Domain(m) | Error::InvalidGrid(m) => m,
        other => other.to_string(),
    };
    Error::Invalid(format!("invalid --{flag}: {msg}"))
}

impl ModelArgs {
    fn params(&self) -> Result<FouParams> {
        check_hurst(self.hurst).map_err(|e| flag_error("hurst", e))?;
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::Invalid(format!("invalid --theta: theta must be finite and non-negative, got {}", self.theta)));
        }
        FouParams::new(self.theta, self.sigma, self.hurst).map_err(|e| flag_error("sigma", e))
    }

    fn describe(&self, meta: &mut String) {
        let _ = writeln!(meta, "theta = {}", self.theta);
        let _ = writeln!(meta, "sigma = {}", self.sigma);
        let _ = writeln!(meta, "hurst = {}", self.hurst);
        if let Ok(c) = c_h(self.hurst) {
            let _ = writeln!(meta, "c_H = {c:e}");
        }
    }
}

impl GridArgs {
    fn grid(&self) -> Result<Grid> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Invalid(format!("invalid --T: horizon must be positive, got {}", self.horizon)));
        }
        Grid::new(self.horizon, self.n).map_err(|e| flag_error("n", e))
    }

    fn describe(&self, meta: &mut String) {
        let _ = writeln!(meta, "T = {}", self.horizon);
        let _ = writeln!(meta, "n = {}", self.n);
    }
}

fn meta_header(command: &str) -> String {
    format!("command = {command}\nversion = {}\n", env!("CARGO_PKG_VERSION"))
}

fn create(dir: &FsPath, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_meta(dir: &FsPath, meta: &str) -> Result<()> {
    let path = dir.join("meta.txt");
    fs::write(&path, meta).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn process_name(p: Process) -> &'static str {
    match p {
        Process::Bm => "bm",
        Process::Fbm => "fbm",
        Process::Fou | Process::Stationary => "fou",
    }
}

fn simulate(a: &SimulateArgs, out: &FsPath) -> Result<()> {
    let params = a.model.params()?;
    let grid = a.grid.grid()?;
    if a.paths == 0 {
        return Err(Error::Invalid("invalid --paths: need at least one path".into()));
    }
    let engine = match a.process {
        ProcessArg::Bm => None,
        ProcessArg::Fbm => Some(TransferEngine::new(FouParams::fbm(params.hurst)?, grid)),
        ProcessArg::Fou => Some(TransferEngine::new(params, grid)),
    };
    let paths = (0..a.paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_bm(&grid, SeedSpec::new(a.seed, i));
            match (a.process, &engine) {
                (ProcessArg::Fbm, Some(e)) => e.fbm_from_bm(&w),
                (ProcessArg::Fou, Some(e)) => e.fou_from_bm(&w),
                _ => Ok(w),
            }
        })
        .collect::<Result<Vec<Path>>>()?;
    write_paths(create(out, "paths.csv")?, &paths)?;
    let mut meta = meta_header("simulate");
    let _ = writeln!(meta, "process = {}", process_name(paths[0].process()));
    a.model.describe(&mut meta);
    a.grid.describe(&mut meta);
    let _ = writeln!(meta, "paths = {}", a.paths);
    let _ = writeln!(meta, "seed = {}", a.seed);
    write_meta(out, &meta)?;
    println!("wrote {} {} paths to {}", a.paths, process_name(paths[0].process()), out.display());
    Ok(())
}

fn read_input(file: &FsPath, process: Process, params: Option<FouParams>) -> Result<Vec<Path>> {
    let f = File::open(file).map_err(|e| Error::Io(format!("{}: {e}", file.display())))?;
    read_paths(f, process, params).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Invalid(format!("{}: line {line}: {msg}", file.display())),
        other => other,
    })
}

fn apply(engine: &TransferEngine, fbm: &TransferEngine, direction: Direction, x: &Path) -> Result<Path> {
    match direction {
        Direction::BmFbm => fbm.fbm_from_bm(x),
        Direction::FbmBm => fbm.bm_from_fbm(x),
        Direction::BmFou => engine.fou_from_bm(x),
        Direction::FouBm => engine.bm_from_fou(x),
        Direction::FbmFou => engine.fou_from_fbm(x),
        Direction::FouFbm => engine.fbm_from_fou(x),
    }
}

fn reverse(d: Direction) -> Direction {
    match d {
        Direction::BmFbm => Direction::FbmBm,
        Direction::FbmBm => Direction::BmFbm,
        Direction::BmFou => Direction::FouBm,
        Direction::FouBm => Direction::BmFou,
        Direction::FbmFou => Direction::FouFbm,
        Direction::FouFbm => Direction::FbmFou,
    }
}

fn transfer(a: &TransferArgs, out: &FsPath) -> Result<()> {
    let params = a.model.params()?;
    let (from, _) = a.direction.ends();
    let tag = match from {
        Process::Bm => None,
        Process::Fbm => Some(FouParams::fbm(params.hurst)?),
        _ => Some(params),
    };
    let input = read_input(&a.input, from, tag)?;
    let grid = *input[0].grid();
    if let Some(p) = input.iter().find(|p| p.grid() != &grid) {
        return Err(Error::Invalid(format!("paths must share one grid, found (T = {}, n = {})", p.grid().horizon(), p.grid().n())));
    }
    let engine = TransferEngine::new(params, grid);
    let fbm = TransferEngine::new(FouParams::fbm(params.hurst)?, grid);
    let outputs = input.par_iter().map(|x| apply(&engine, &fbm, a.direction, x)).collect::<Result<Vec<Path>>>()?;
    write_paths(create(out, "paths.csv")?, &outputs)?;
    if a.round_trip {
        let back = outputs.par_iter().map(|y| apply(&engine, &fbm, reverse(a.direction), y)).collect::<Result<Vec<Path>>>()?;
        let mut w = csv::Writer::from_writer(create(out, "roundtrip.csv")?);
        w.write_record(["path_id", "sup_error", "sup_norm", "relative_error"]).map_err(|e| Error::Io(e.to_string()))?;
        for (id, (x, z)) in input.iter().zip(&back).enumerate() {
            let err = x.values().iter().zip(z.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let norm = x.sup_norm();
            w.write_record(&[id.to_string(), format!("{err:e}"), format!("{norm:e}"), format!("{:e}", err / norm)])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    let mut meta = meta_header("transfer");
    let _ = writeln!(meta, "input = {}", a.input.display());
    let _ = writeln!(meta, "direction = {}", a.direction.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
    a.model.describe(&mut meta);
    let _ = writeln!(meta, "T = {}", grid.horizon());
    let _ = writeln!(meta, "n = {}", grid.n());
    let _ = writeln!(meta, "paths = {}", input.len());
    let _ = writeln!(meta, "round_trip = {}", a.round_trip);
    write_meta(out, &meta)?;
    println!("wrote {} transformed paths to {}", outputs.len(), out.display());
    Ok(())
}

fn predict(a: &PredictArgs, out: &FsPath) -> Result<()> {
    let params = a.model.params()?;
    let paths = read_input(&a.input, Process::Fou, Some(params))?;
    let path = paths
        .get(a.path_id)
        .ok_or_else(|| Error::Invalid(format!("invalid --path-id: {} paths in the input", paths.len())))?;
    let grid = *path.grid();
    if a.u == 0.0 {
        return Err(Error::EmptyHistory);
    }
    if !(a.u > 0.0 && a.u <= grid.horizon()) {
        return Err(Error::Invalid(format!("invalid --u: {} is beyond the observed range [0, {}]", a.u, grid.horizon())));
    }
    if let Some(t) = a.targets.iter().find(|&&t| !(t >= a.u)) {
        return Err(Error::Invalid(format!("invalid --targets: {t} precedes u = {}", a.u)));
    }
    let predictor = Predictor::new(params, &grid, a.u)?;
    let res = predictor.predict(path, &a.targets)?;
    let oracle = if a.oracle { Some(gaussian_conditioning_oracle(&params, &grid, a.u, &a.targets)?) } else { None };
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(create(out, "prediction.csv")?);
    let mut cov = csv::Writer::from_writer(create(out, "prediction_cov.csv")?);
    match &oracle {
        None => {
            w.write_record(["t", "mean", "var"]).map_err(io)?;
            cov.write_record(["t1", "t2", "value"]).map_err(io)?;
        }
        Some(_) => {
            w.write_record(["t", "mean", "var", "oracle_mean", "oracle_var"]).map_err(io)?;
            cov.write_record(["t1", "t2", "value", "oracle_value"]).map_err(io)?;
        }
    }
    let m = predictor.history().n();
    let oracle_mean = oracle.as_ref().map(|o| o.mean(&path.values()[..=m]));
    for (i, t) in res.targets.iter().enumerate() {
        let mut row = vec![t.to_string(), format!("{:e}", res.mean[i]), format!("{:e}", res.cov[i][i])];
        if let (Some(o), Some(om)) = (&oracle, &oracle_mean) {
            row.push(format!("{:e}", om[i]));
            row.push(format!("{:e}", o.cov[i][i]));
        }
        w.write_record(&row).map_err(io)?;
        for (j, s) in res.targets.iter().enumerate() {
            let mut row = vec![t.to_string(), s.to_string(), format!("{:e}", res.cov[i][j])];
            if let Some(o) = &oracle {
                row.push(format!("{:e}", o.cov[i][j]));
            }
            cov.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    cov.flush()?;
    let mut meta = meta_header("predict");
    let _ = writeln!(meta, "input = {}", a.input.display());
    let _ = writeln!(meta, "path_id = {}", a.path_id);
    a.model.describe(&mut meta);
    let _ = writeln!(meta, "T = {}", grid.horizon());
    let _ = writeln!(meta, "n = {}", grid.n());
    let _ = writeln!(meta, "u = {}", a.u);
    let _ = writeln!(meta, "targets = {}", a.targets.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    let _ = writeln!(meta, "oracle = {}", a.oracle);
    if let Some(o) = &oracle {
        let _ = writeln!(meta, "oracle_jitter = {:e}", o.jitter);
    }
    write_meta(out, &meta)?;
    println!("wrote predictions at {} targets to {}", res.targets.len(), out.display());
    Ok(())
}

fn verify_cmd(a: &VerifyArgs, out: &FsPath) -> Result<bool> {
    let suite: Suite = a.suite.parse().map_err(|e| flag_error("suite", e))?;
    let cfg = VerifyConfig {
        params: a.model.params()?,
        grid: a.grid.grid()?,
        paths: a.paths.max(2),
        seed: a.seed,
        tolerances: Tolerances {
            gram: a.tol_gram,
            reduction: a.tol_reduction,
            roundtrip: a.tol_roundtrip,
            isometry: a.tol_isometry,
            transfer: a.tol_transfer,
            prediction: a.tol_prediction,
        },
    };
    let checks = verify::run(suite, &cfg)?;
    verify::write_report(create(out, "verify_report.csv")?, &checks)?;
    let mut meta = meta_header("verify");
    let _ = writeln!(meta, "suite = {suite}");
    a.model.describe(&mut meta);
    a.grid.describe(&mut meta);
    let _ = writeln!(meta, "paths = {}", cfg.paths);
    let _ = writeln!(meta, "seed = {}", a.seed);
    let t = cfg.tolerances;
    let _ = writeln!(
        meta,
        "tolerances = gram {}, reduction {}, roundtrip {}, isometry {}, transfer {}, prediction {}",
        t.gram, t.reduction, t.roundtrip, t.isometry, t.transfer, t.prediction
    );
    write_meta(out, &meta)?;
    for c in &checks {
        println!("{} {} value={:e} tolerance={:e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    Ok(checks.iter().all(|c| c.pass))
}
