use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qtcs::runner::{self, ExperimentConfig, QaoaSettings, SuiteSource};
use qtcs::Backend;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "qtcs",
    version,
    about = "Multi-objective test case selection with QAOA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run QAOA-TCS, SA and Additional Greedy repeatedly and write the report.
    Run(RunArgs),
    /// Recompute summary and statistics from the per-run CSVs of a finished run.
    Stats {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
    /// Write a synthetic suite as a bundle directory.
    Synth {
        /// n_tests,n_stmts,density,fault_rate[,seed]
        spec: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Bundle directory with coverage.mtx, costs.txt and faults.txt.
    #[arg(
        long,
        value_name = "DIR",
        conflicts_with = "synth",
        required_unless_present = "synth"
    )]
    bundle: Option<PathBuf>,
    /// Synthetic suite: n_tests,n_stmts,density,fault_rate[,seed].
    #[arg(long, value_name = "SPEC")]
    synth: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Cluster count (default ceil(n / max-cluster) + 1).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    max_cluster: usize,
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 2048)]
    shots: usize,
    /// Nelder-Mead evaluations per start (default 200 * 2p).
    #[arg(long)]
    max_evals: Option<usize>,
    /// Optimize angles on the raw energy table instead of the unit-scaled one.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value_t = 1000)]
    sa_sweeps: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Write optimizer traces (JSON lines) under OUT/trace.
    #[arg(long)]
    trace: bool,
    /// Write clusterings and cluster QUBOs under OUT/dump.
    #[arg(long)]
    dump: bool,
    /// External front CSV to join into the reference front (repeatable).
    #[arg(long, value_name = "CSV")]
    import: Vec<PathBuf>,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

fn parse_synth(spec: &str) -> Result<SuiteSource, String> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if !(4..=5).contains(&parts.len()) {
        return Err(format!(
            "--synth expects n_tests,n_stmts,density,fault_rate[,seed], got `{spec}`"
        ));
    }
    let field = |i: usize, name: &str| -> Result<f64, String> {
        parts[i]
            .parse::<f64>()
            .map_err(|_| format!("--synth: bad {name} `{}`", parts[i]))
    };
    let count = |i: usize, name: &str| -> Result<usize, String> {
        parts[i]
            .parse::<usize>()
            .map_err(|_| format!("--synth: bad {name} `{}`", parts[i]))
    };
    Ok(SuiteSource::Synth {
        n_tests: count(0, "n_tests")?,
        n_stmts: count(1, "n_stmts")?,
        density: field(2, "density")?,
        fault_rate: field(3, "fault_rate")?,
        seed: match parts.get(4) {
            Some(s) => s.parse().map_err(|_| format!("--synth: bad seed `{s}`"))?,
            None => 0,
        },
    })
}

fn config_from(args: RunArgs) -> Result<ExperimentConfig, String> {
    let source = match (args.bundle, args.synth) {
        (Some(dir), None) => SuiteSource::Bundle(dir),
        (None, Some(spec)) => parse_synth(&spec)?,
        _ => return Err("exactly one of --bundle and --synth is required".into()),
    };
    Ok(ExperimentConfig {
        alpha: args.alpha,
        k: args.k,
        max_cluster: args.max_cluster,
        qaoa: QaoaSettings {
            p: args.p,
            restarts: args.restarts,
            shots: args.shots,
            max_evals: args.max_evals,
            normalize: !args.no_normalize,
        },
        sa_sweeps: args.sa_sweeps,
        reps: args.reps,
        seed: args.seed,
        trace: args.trace,
        dump: args.dump,
        import: args.import,
        ..ExperimentConfig::new(source, args.out)
    })
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => {
            let backend = if args.sequential {
                Backend::Sequential
            } else {
                Backend::Parallel
            };
            let config = match config_from(args) {
                Ok(c) => c,
                Err(msg) => return fail(EXIT_CONFIG, msg),
            };
            let prepared = match runner::prepare(config) {
                Ok(p) => p,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            match runner::run_experiment(backend, &prepared) {
                Ok(exp) => {
                    if !exp.headline.holds {
                        eprintln!("note: headline direction does not hold, see summary.md");
                    }
                    println!("{}", prepared.config.out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_RUNTIME, e),
            }
        }
        Command::Stats { input } => {
            if !input.is_dir() {
                return fail(
                    EXIT_CONFIG,
                    format!("{} is not a directory", input.display()),
                );
            }
            match runner::recompute_stats(&input) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => fail(EXIT_RUNTIME, e),
            }
        }
        Command::Synth { spec, out } => {
            let suite = match parse_synth(&spec) {
                Ok(source) => source.load(),
                Err(msg) => return fail(EXIT_CONFIG, msg),
            };
            let suite = match suite {
                Ok(s) => s,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            match suite.write_bundle(&out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(EXIT_RUNTIME, e),
            }
        }
    }
}
