mod commands;
mod serve;
mod stats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

/// Split application packages into on-demand bundles.
#[derive(Debug, Parser)]
#[command(name = "bundlesplit", version)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose a package into a plan directory.
    Decompose(DecomposeArgs),
    /// Replay scripts against a plan and repair it.
    Recover(RecoverArgs),
    /// Run a script on a virtual device.
    Simulate(SimulateArgs),
    /// Serve a plan directory over HTTP.
    Serve(ServeArgs),
    /// Summarize a directory of plans.
    Stats(StatsArgs),
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Print a package's graphs.
    Graph(GraphArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("selection").required(true).args(["base_activities", "usage"])))]
pub struct DecomposeArgs {
    #[arg(long)]
    pub app: PathBuf,
    /// Comma-separated base activities.
    #[arg(long, value_delimiter = ',')]
    pub base_activities: Option<Vec<String>>,
    /// Usage log to select base activities from.
    #[arg(long, requires = "coverage")]
    pub usage: Option<PathBuf>,
    /// Share of visits the selection must cover.
    #[arg(long, requires = "usage")]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Directory of `.script` files.
    #[arg(long)]
    pub scripts: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("store").required(true).args(["plan", "store_url"])))]
pub struct SimulateArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, requires = "app_id")]
    pub store_url: Option<String>,
    /// App to run; defaults to the plan's.
    #[arg(long)]
    pub app_id: Option<String>,
    #[arg(long)]
    pub script: PathBuf,
    /// Metrics output; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Device state, loaded if present and saved afterwards.
    #[arg(long)]
    pub device: Option<PathBuf>,
    #[arg(long, default_value_t = bundlesplit::vruntime::DEFAULT_STUB_SLOTS)]
    pub stub_slots: usize,
    /// Comma-separated feature activities to fetch before the session.
    #[arg(long, value_delimiter = ',')]
    pub prefetch: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Corpus parameters (JSON); defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub app: PathBuf,
    /// Graphviz output (the only format).
    #[arg(long, default_value_t = true)]
    pub dot: bool,
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NON_TERMINATION: u8 = 3;
pub const EXIT_STORE: u8 = 4;

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Recover(a) => commands::recover(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Serve(a) => serve::serve(a),
        Command::Stats(a) => stats::stats(a),
        Command::Gen(a) => commands::gen(a),
        Command::Graph(a) => commands::graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
