//! Command-line front end for the restriction and gKdV experiments.
//!
//! Exit codes: `0` success, `1` usage or runtime error, `2` a checked
//! property failed.

pub mod config;
pub mod record;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::CliError;
use config::Config;
use record::{emit, render, Format, Record};

#[derive(Debug, Parser)]
#[command(name = "restrictlab", version, about = "Discrete restriction, cubic Weyl sums and periodic gKdV experiments")]
pub struct Cli {
    /// Configuration file of `key = value` lines under `[subcommand]` headers.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, global = true)]
    pub format: Option<OutputFormat>,
    /// Directory for output files; records go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write a matplotlib script next to the data file.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Worker threads (falls back to RESTRICTLAB_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact S(N;b) by meet-in-the-middle, checked against brute force when feasible.
    Count(CountArgs),
    /// Weyl-bound ratios |S| / (N q)^{1/4} over random phases.
    Weyl(WeylArgs),
    /// Farey systems and the cutoff Φ for scales Q.
    Farey(FareyArgs),
    /// Kernel split K = K1 + K2 with Q = N².
    Decompose(DecomposeArgs),
    /// Gated level-set profile |E_λ| λ^10 / N.
    Levelset(LevelsetArgs),
    /// Lower bounds for the Strichartz constant K_{p,N}.
    Strichartz(StrichartzArgs),
    /// S(N;5) scaling with lower bounds and the gated kernel profile.
    Hua(HuaArgs),
    /// Solve the periodic gKdV equation and report conservation.
    Solve(SolveArgs),
    /// Compare the gauged mean-removed solution with a direct solve.
    Gauge(SolveArgs),
    /// Bourgain-space estimate checks.
    Xsb(XsbArgs),
    /// Every experiment at its default size.
    All,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CountArgs {
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long)]
    pub b: Option<u32>,
    /// `mim`, `brute` or `both`.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct WeylArgs {
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FareyArgs {
    #[arg(long = "Q", value_delimiter = ',')]
    pub q: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DecomposeArgs {
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LevelsetArgs {
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// `uniform` or `random`.
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StrichartzArgs {
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HuaArgs {
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long = "profile-N", value_delimiter = ',')]
    pub profile_n: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolveArgs {
    /// Number of Fourier modes (power of two).
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Nonlinearity: an integer k for u^k, `sin`, or `zero`.
    #[arg(long = "F")]
    pub f: Option<String>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub amp: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// `original` or `mean-removed`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Trajectory export; `.bin` selects the binary format, anything else text.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct XsbArgs {
    /// `linear`, `nonlinear`, `embedding`, `telescope` or `all`.
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long = "F")]
    pub f: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn threads(cli: &Cli, cfg: &Config) -> Result<Option<usize>, CliError> {
    let raw = match cli.threads {
        Some(t) => Some(t.to_string()),
        None => cfg
            .get("", "threads")
            .map(str::to_string)
            .or_else(|| std::env::var("RESTRICTLAB_THREADS").ok()),
    };
    match raw {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("thread count must be a positive integer, got `{s}`"))),
        },
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(CliError::Usage)?,
        None => Config::default(),
    };
    if let Some(n) = threads(cli, &cfg)? {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let format = match cli.format {
        Some(OutputFormat::Csv) => Format::Csv,
        Some(OutputFormat::Json) => Format::Json,
        None => match cfg.get("", "format") {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => return Err(CliError::Usage(format!("unknown format `{other}`"))),
        },
    };
    let out = cli.out.clone().or_else(|| cfg.get("", "out").map(PathBuf::from));
    if cli.plot && out.is_none() {
        return Err(CliError::Usage("--plot needs --out".into()));
    }
    let (stem, outcome) = commands::dispatch(&cli.command, &cfg);
    let records: Vec<Record> = match &outcome {
        Ok(r) => r.clone(),
        Err(commands::Failure { records, .. }) => records.clone(),
    };
    match &out {
        Some(dir) => {
            for path in emit(&records, format, cli.plot, dir, stem).map_err(|e| CliError::Runtime(e.to_string()))? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => print!("{}", render(&records, format).map_err(|e| CliError::Runtime(e.to_string()))?),
    }
    outcome.map(|_| ()).map_err(|f| f.error)
}

/// Parses `args` (program name first) and runs the subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
