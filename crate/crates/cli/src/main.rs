//! `netsp`: sample complexity, networked solves, the identification
//! experiment and trace summaries.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success (for `solve`: every tolerance met)           |
//! | 2    | usage error: bad flags, bad values, unreadable input |
//! | 3    | `solve` ran out of rounds before the tolerances held |
//! | 4    | invalid configuration                                |
//! | 5    | graph is not strongly connected                      |
//! | 6    | any other failure                                    |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netsp::config::ExperimentSpec;
use netsp::engine::{Simulation, Status, Trace};
use netsp::experiment::{uniform_grid, IdentExperiment, IDENT_HEADER};
use netsp::scenario::{binomial_tail_holds, minimal_complexity_by_search, sample_complexity, SampleComplexityParams};
use netsp::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_CONNECTIVITY: u8 = 5;
const EXIT_OTHER: u8 = 6;

#[derive(Parser)]
#[command(name = "netsp", version, about = "Networked scenario solvers for robust convex programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the scenario count for (epsilon, delta, n).
    Complexity {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        /// Decision dimension.
        #[arg(long)]
        n: usize,
    },
    /// Run the experiment described by a configuration file.
    Solve {
        config: PathBuf,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a checkpoint here after the run.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Residual table for the robust identification experiment.
    Ident {
        /// Comma-separated uncertainty levels, e.g. `0,1,2,3`.
        #[arg(long, value_delimiter = ',', conflicts_with = "rho_step")]
        rho: Option<Vec<f64>>,
        /// Evenly spaced levels from 0 to `--rho-max`.
        #[arg(long)]
        rho_step: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        rho_max: f64,
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, default_value_t = 30)]
        samples_per_node: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        rounds: u64,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a metrics trace.
    Report { trace: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Configuration(_) | Error::Parse { .. } => EXIT_CONFIG,
            Error::Connectivity => EXIT_CONNECTIVITY,
            Error::Parameter(_) | Error::Capacity { .. } => EXIT_USAGE,
            _ => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type CliResult = Result<u8, Failure>;

fn complexity(eps: f64, delta: f64, n: usize) -> CliResult {
    let params = SampleComplexityParams::new(eps, delta, n).map_err(|e| usage(e.to_string()))?;
    let n_bin = sample_complexity(&params)?;
    let n_search = minimal_complexity_by_search(&params)?;
    let holds = binomial_tail_holds(n_bin, &params)?;
    println!("epsilon,delta,n,n_bin,n_search,tail_holds");
    println!("{eps},{delta},{n},{n_bin},{n_search},{holds}");
    Ok(0)
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn solve(config: &Path, out: Option<PathBuf>, checkpoint: Option<PathBuf>, resume: Option<PathBuf>) -> CliResult {
    let spec = ExperimentSpec::parse(&read_input(config)?)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let r = spec.config.resolve(base)?;
    let mut sim = match resume {
        Some(path) => {
            let bytes = fs::read(&path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            Simulation::resume(r.problem, r.topology, r.settings, &bytes)?
        }
        None => Simulation::new(r.problem, r.topology, r.settings)?,
    };
    let outcome = sim.run()?;

    let dir = out.unwrap_or_else(|| base.join(&spec.output.dir));
    fs::create_dir_all(&dir).map_err(Error::from)?;
    outcome.trace.write_csv(fs::File::create(dir.join(&spec.output.trace)).map_err(Error::from)?)?;
    let mut states = fs::File::create(dir.join(&spec.output.states)).map_err(Error::from)?;
    let thetas = outcome.states.thetas();
    let dim = thetas.first().map_or(0, |t| t.len());
    let header: Vec<String> = (0..dim).map(|i| format!("theta_{i}")).collect();
    writeln!(states, "node,{}", header.join(",")).map_err(Error::from)?;
    for (j, t) in thetas.iter().enumerate() {
        let row: Vec<String> = t.iter().map(|v| format!("{v:?}")).collect();
        writeln!(states, "{j},{}", row.join(",")).map_err(Error::from)?;
    }
    if let Some(path) = checkpoint {
        sim.write_checkpoint(&path)?;
    }

    let status = match outcome.status {
        Status::Converged => "converged",
        Status::BudgetExhausted => "budget_exhausted",
    };
    println!("status,rounds,consensus_spread,feasibility,objective,zeta_sum");
    match outcome.trace.last() {
        Some(last) => println!(
            "{status},{},{:e},{:e},{},{}",
            sim.rounds_done(),
            last.consensus_spread,
            last.feasibility,
            last.objective,
            last.zeta_sum
        ),
        None => println!("{status},{},,,,", sim.rounds_done()),
    }
    Ok(if outcome.status == Status::Converged { 0 } else { EXIT_BUDGET })
}

#[allow(clippy::too_many_arguments)]
fn ident(
    rho: Option<Vec<f64>>,
    rho_step: Option<f64>,
    rho_max: f64,
    nodes: usize,
    samples_per_node: usize,
    seed: u64,
    rounds: u64,
    out: Option<PathBuf>,
) -> CliResult {
    let grid = match (rho, rho_step) {
        (Some(g), _) => g,
        (None, Some(step)) => uniform_grid(0.0, rho_max, step).map_err(|e| usage(e.to_string()))?,
        (None, None) => uniform_grid(0.0, rho_max, 0.2).map_err(|e| usage(e.to_string()))?,
    };
    if grid.is_empty() || grid.iter().any(|r| !(*r >= 0.0)) {
        return Err(usage("uncertainty levels must be nonnegative"));
    }
    if nodes == 0 || samples_per_node == 0 || rounds == 0 {
        return Err(usage("nodes, samples-per-node and rounds must be positive"));
    }
    let exp = IdentExperiment { nodes, samples_per_node, seed, rounds, ..IdentExperiment::default() };
    let mut table = format!("{IDENT_HEADER}\n");
    for rho in grid {
        let row = exp.row(rho)?;
        table.push_str(&row.to_csv_line());
        table.push('\n');
    }
    print!("{table}");
    if let Some(path) = out {
        fs::write(&path, &table).map_err(Error::from)?;
    }
    Ok(0)
}

fn report(path: &Path) -> CliResult {
    let trace = Trace::parse_csv(&read_input(path)?)?;
    let (first, last) = match (trace.records.first(), trace.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(usage(format!("{} holds no rounds", path.display()))),
    };
    let wall: f64 = trace.records.iter().map(|r| r.wall_time_ms).sum();
    let best = trace.records.iter().map(|r| r.feasibility).fold(f64::INFINITY, f64::min);
    println!("first_round,last_round,rounds,consensus_spread,feasibility,min_feasibility,objective,zeta_sum,wall_time_ms");
    println!(
        "{},{},{},{:e},{:e},{:e},{},{},{:.3}",
        first.k,
        last.k,
        trace.len(),
        last.consensus_spread,
        last.feasibility,
        best,
        last.objective,
        last.zeta_sum,
        wall
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Complexity { eps, delta, n } => complexity(eps, delta, n),
        Command::Solve { config, out, checkpoint, resume } => solve(&config, out, checkpoint, resume),
        Command::Ident { rho, rho_step, rho_max, nodes, samples_per_node, seed, rounds, out } => {
            ident(rho, rho_step, rho_max, nodes, samples_per_node, seed, rounds, out)
        }
        Command::Report { trace } => report(&trace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("netsp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
