//! Command-line front end.
//!
//! Every option can come from a flag, from a flat JSON object given with
//! `--config`, or from the built-in default, in that order of precedence.
//! Each run writes a `<out>.run.json` sidecar with the resolved settings.

mod commands;
mod output;
mod plot;
mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::Error;

pub use plot::{plot, PlotKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Schema(_) | Error::Checksum { .. } => Failure::Io(msg),
            Error::Invariant(_) => Failure::Numerical(msg),
            ref other if other.is_numerical() => Failure::Numerical(msg),
            _ => Failure::Usage(msg),
        }
    }
}

pub(crate) type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "brox", version, about = "Quenched spectral solver and simulator for the killed Brox diffusion")]
struct Cli {
    /// JSON object of default option values (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sweeps and Monte Carlo batches.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a Brownian environment and store it as JSON.
    GenEnv(GenEnvArgs),
    /// Shoot the eigenvalue equation at one lambda.
    Shoot(ShootArgs),
    /// Compute the first eigenpairs.
    Eigen(EigenArgs),
    /// Export the transition density.
    Density(DensityArgs),
    /// Count Riccati explosions at one lambda.
    Riccati(RiccatiArgs),
    /// Monte Carlo simulation of the killed diffusion.
    Simulate(SimulateArgs),
    /// Cross-check residuals against tolerances.
    Verify(VerifyArgs),
    /// Render a CSV artifact as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub(crate) struct GenEnvArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Number of grid segments.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct ShootArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct EigenArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Number of eigenpairs.
    #[arg(long)]
    pub n: Option<usize>,
    /// Relative eigenvalue tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Eigenfunction table; defaults to `<out stem>.phi.csv`.
    #[arg(long)]
    pub phi_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct DensityArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    /// Number of modes; defaults to the relative tail rule.
    #[arg(long)]
    pub n_trunc: Option<usize>,
    /// Emit the full matrix as (x, y, p) rows.
    #[arg(long)]
    pub field: bool,
    /// Node stride of the exported field.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct RiccatiArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub cap: Option<f64>,
    /// Use the noise-free quasi-Riccati counter.
    #[arg(long)]
    pub quasi: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct SimulateArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Add the spectral bin density and a chi-square test.
    #[arg(long)]
    pub spectral: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct VerifyArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Run every check (the default when no group is selected).
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub green: bool,
    #[arg(long)]
    pub oracle: bool,
    /// Number of eigenpairs to compare.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct PlotArgs {
    /// CSV artifact (or environment JSON for `--kind env`).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<PlotKindArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub(crate) enum PlotKindArg {
    Env,
    Eigenfunctions,
    Density,
    HistogramOverlay,
}

/// Option values from a `--config` file.
pub(crate) struct Settings {
    map: Map<String, Value>,
    source: Option<PathBuf>,
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Settings {
                map: Map::new(),
                source: None,
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(Failure::Io(format!("{}: config must be a JSON object", path.display())));
        };
        if let Some(v) = map.get("version") {
            if v.as_u64() != Some(1) {
                return Err(Failure::Io(format!("{}: unsupported config version {v}", path.display())));
            }
        }
        Ok(Settings {
            map,
            source: Some(path.to_path_buf()),
        })
    }

    /// Flag value, else config value, else `None`.
    pub fn opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Failure::Usage(format!("config key '{key}': {e}"))),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<T> {
        self.opt(flag, key)?
            .ok_or_else(|| Failure::Usage(format!("missing required option --{key}")))
    }

    /// Boolean switch: set by the flag or by the config.
    pub fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.opt::<bool>(None, key)?.unwrap_or(false))
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }
}

/// Parse `argv` (including the program name), execute, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let threads: Option<usize> = settings.opt(cli.threads, "threads")?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    let ctx = commands::Context { settings, threads };
    pool.install(|| match cli.command {
        Command::GenEnv(a) => commands::gen_env(&ctx, a),
        Command::Shoot(a) => commands::shoot(&ctx, a),
        Command::Eigen(a) => commands::eigen(&ctx, a),
        Command::Density(a) => commands::density(&ctx, a),
        Command::Riccati(a) => commands::riccati(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Verify(a) => verify::verify(&ctx, a),
        Command::Plot(a) => commands::plot_cmd(&ctx, a),
    })
}
