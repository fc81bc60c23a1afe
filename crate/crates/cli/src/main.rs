mod dataset;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use experiments::{
    parse_config, CppTails, CurvatureCheck, Experiment, ParallelRates, PlaneFitCmd, Quantiles, SparsePlane,
    StumpFitCmd,
};

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

/// Robust change-point and change-plane experiments. Writes CSV with a `#`
/// metadata header.
#[derive(Parser, Debug)]
#[command(name = "robust-cp", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Raise open Monte Carlo budgets from 1e5 to 1e6 draws
    #[arg(long, global = true)]
    paper_budget: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Upper quantiles of the limiting argmin distribution
    Quantiles(Quantiles),
    /// Fit a one-dimensional stump to a CSV file or a simulated sample
    StumpFit(StumpFitCmd),
    /// Tail profile of the limiting argmin over its upper decade
    CppTails(CppTails),
    /// Max deviation rates over many parallel change-point problems
    ParallelRates(ParallelRates),
    /// Change-plane fits and their error rates
    PlaneFit(PlaneFitCmd),
    /// Penalized sparse change-plane selection
    SparsePlane(SparsePlane),
    /// Monte Carlo check of the quadratic curvature bound
    CurvatureCheck(CurvatureCheck),
    /// Run the experiment described by a JSON config file
    Run {
        config: PathBuf,
        /// Overrides the config's output path
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("robust-cp: {msg}");
    ExitCode::from(code)
}

fn experiment(command: Command) -> Result<Box<dyn Experiment>, String> {
    Ok(match command {
        Command::Quantiles(c) => Box::new(c),
        Command::StumpFit(c) => Box::new(c),
        Command::CppTails(c) => Box::new(c),
        Command::ParallelRates(c) => Box::new(c),
        Command::PlaneFit(c) => Box::new(c),
        Command::SparsePlane(c) => Box::new(c),
        Command::CurvatureCheck(c) => Box::new(c),
        Command::Run { config, output } => {
            let text = std::fs::read_to_string(&config).map_err(|e| format!("{}: {e}", config.display()))?;
            let mut exp = parse_config(&text).map_err(|e| format!("{}: {e}", config.display()))?;
            if let Some(path) = output {
                exp.set_output(path);
            }
            exp
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return fail(CONFIG_ERROR, "threads: must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            return fail(RUNTIME_ERROR, e);
        }
    }
    let mut exp = match experiment(cli.command) {
        Ok(exp) => exp,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    exp.resolve(cli.paper_budget);
    if let Err(e) = exp.validate() {
        return fail(CONFIG_ERROR, format!("invalid config: {e}"));
    }
    let report = match exp.run() {
        Ok(r) => r,
        Err(e) => return fail(RUNTIME_ERROR, e),
    };
    let contents = output::metadata(exp.as_ref()) + &report.csv;
    if let Err(e) = output::emit(exp.output(), &contents) {
        return fail(RUNTIME_ERROR, format!("writing output: {e}"));
    }
    for line in &report.summary {
        eprintln!("{line}");
    }
    ExitCode::SUCCESS
}
