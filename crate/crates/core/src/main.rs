use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rdnflow::cli::{self, BenchConfig, CmdOutput, OutputFormat, RunConfig};
use rdnflow::{CountMode, TableFormat};

#[derive(Parser)]
#[command(
    name = "rdnflow",
    version,
    about = "Load flow for radial distribution feeders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a branch table forms a radial feeder.
    Validate(FileArgs),
    /// Solve a feeder and print voltages, currents, losses and step counts.
    Solve(SolveArgs),
    /// Solve a feeder and compare voltage magnitudes against a golden CSV.
    Compare {
        #[command(flatten)]
        solve: SolveArgs,
        /// CSV with header `node,vmag_pu`.
        #[arg(long)]
        golden: PathBuf,
        /// Largest allowed absolute deviation, p.u.
        #[arg(long, default_value_t = cli::DEFAULT_COMPARE_BOUND)]
        bound: f64,
    },
    /// Count steps of both solvers on seeded random feeders.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Delimited,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adjacency,
    Literal,
}

impl From<ModeArg> for CountMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adjacency => CountMode::Adjacency,
            ModeArg::Literal => CountMode::LiteralScan,
        }
    }
}

impl From<OutputArg> for OutputFormat {
    fn from(o: OutputArg) -> Self {
        match o {
            OutputArg::Table => OutputFormat::Table,
            OutputArg::Csv => OutputFormat::Csv,
            OutputArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct FileArgs {
    file: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    input_format: Option<FormatArg>,
    /// Substation node.
    #[arg(long)]
    root: Option<usize>,
    /// Relabel into sequential numbering before validating.
    #[arg(long)]
    renumber: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    file: FileArgs,
    /// Voltage base, kV.
    #[arg(long)]
    kv: Option<f64>,
    /// Power base, MVA.
    #[arg(long)]
    mva: Option<f64>,
    /// Convergence tolerance on voltage magnitude, p.u.
    #[arg(long, default_value_t = rdnflow::solver::DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = rdnflow::solver::DEFAULT_MAX_ITERATIONS)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputArg,
    /// Cross-check every voltage update against the polar formulas.
    #[arg(long)]
    debug_polar: bool,
    #[arg(long, value_enum, default_value = "adjacency")]
    count_mode: ModeArg,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 33, 69, 150])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1f64, 0.3])]
    leaf_fractions: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = rdnflow::solver::DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = rdnflow::solver::DEFAULT_MAX_ITERATIONS)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "literal")]
    count_mode: ModeArg,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputArg,
}

fn file_config(args: &FileArgs) -> RunConfig {
    let mut cfg = RunConfig::new(&args.file);
    cfg.format = args.input_format.map(|f| match f {
        FormatArg::Delimited => TableFormat::Delimited,
        FormatArg::Json => TableFormat::Json,
    });
    cfg.root = args.root;
    cfg.renumber = args.renumber;
    cfg
}

fn solve_config(args: &SolveArgs) -> RunConfig {
    let mut cfg = file_config(&args.file);
    cfg.kv_base = args.kv;
    cfg.mva_base = args.mva;
    cfg.tolerance = args.tol;
    cfg.max_iterations = args.max_iter;
    cfg.output = args.format.into();
    cfg.debug_polar = args.debug_polar;
    cfg.count_mode = args.count_mode.into();
    cfg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out: CmdOutput = match &cli.command {
        Command::Validate(args) => cli::cmd_validate(&file_config(args)),
        Command::Solve(args) => {
            let cfg = solve_config(args);
            if cfg.tolerance <= 0.0 || cfg.max_iterations == 0 {
                eprintln!("error: --tol must be positive and --max-iter at least 1");
                return ExitCode::from(cli::exit::USAGE);
            }
            cli::cmd_solve(&cfg)
        }
        Command::Compare {
            solve,
            golden,
            bound,
        } => cli::cmd_compare(&solve_config(solve), golden, *bound),
        Command::Bench(args) => cli::cmd_bench(&BenchConfig {
            sizes: args.sizes.clone(),
            leaf_fractions: args.leaf_fractions.clone(),
            seed: args.seed,
            tolerance: args.tol,
            max_iterations: args.max_iter,
            count_mode: args.count_mode.into(),
            output: args.format.into(),
        }),
    };
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code)
}
