use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};

use admm_ilqr::harness::{self, builtin_scenario, MethodRun, RunOptions, ScenarioConfig, SnapshotPolicy};
use admm_ilqr::report::Method;
use admm_ilqr::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Admm,
    Barrier,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Admm => Method::Admm,
            MethodArg::Barrier => Method::Barrier,
        }
    }
}

/// Plan a trajectory around obstacles with ADMM-split iLQR or the log-barrier
/// baseline, and write trajectories, residuals and timings as CSV.
#[derive(Debug, Parser)]
#[command(name = "plan", version)]
#[command(group(ArgGroup::new("source").args(["scenario", "config", "export_scenario"]).required(true)))]
struct Args {
    /// Built-in scenario.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    scenario: Option<u32>,

    /// Scenario file (TOML), e.g. one written by --export-scenario.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Print a built-in scenario as TOML and exit.
    #[arg(long, value_name = "ID")]
    export_scenario: Option<u32>,

    #[arg(long, value_enum, default_value = "admm")]
    method: MethodArg,

    /// Run both methods and write comparison.csv.
    #[arg(long)]
    compare: bool,

    #[arg(long, default_value_t = 1)]
    trials: usize,

    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override the ADMM iteration cap.
    #[arg(long, value_name = "N")]
    max_admm: Option<usize>,

    /// Override the ADMM penalty.
    #[arg(long, value_name = "X")]
    sigma: Option<f64>,

    /// Which ADMM iterations get a trajectory file: `all` or `1,2,last`.
    #[arg(long, default_value = "1,2,last")]
    snapshots: SnapshotPolicy,

    /// Override the initial speed of the ego vehicle (m/s).
    #[arg(long, value_name = "V")]
    initial_speed: Option<f64>,

    /// Fill the seconds column of residuals.csv (makes output run-dependent).
    #[arg(long)]
    record_iteration_times: bool,

    /// Run trials concurrently; timings then include contention.
    #[arg(long)]
    parallel_trials: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_) | Error::UnknownScenario(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn load(args: &Args) -> Result<ScenarioConfig, Error> {
    let mut config = match (&args.config, args.scenario) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(id)) => builtin_scenario(id)?,
        (None, None) => unreachable!("clap requires a scenario source"),
    };
    if let Some(n) = args.max_admm {
        config.admm.max_iters = n;
    }
    if let Some(sigma) = args.sigma {
        config.admm.sigma = sigma;
    }
    if let Some(v) = args.initial_speed {
        config.ego.v = v;
    }
    config.validate()?;
    Ok(config)
}

fn summarize(runs: &[MethodRun]) {
    for run in runs {
        for r in &run.records {
            let failure = r.failure.as_deref().map(|f| format!(" ({f})")).unwrap_or_default();
            eprintln!(
                "{} {} trial {}: {} in {:.4} s, cost {:.4}, max violation {:.2e}{failure}",
                r.scenario,
                r.method,
                r.trial,
                r.status.as_str(),
                r.seconds,
                r.final_cost,
                r.max_violation
            );
        }
        if run.records.len() > 1 && !run.any_failed() {
            eprintln!("mean {:.4} s", run.mean_seconds());
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();

    if let Some(id) = args.export_scenario {
        return match builtin_scenario(id).and_then(|c| c.to_toml()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        };
    }

    let config = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let methods: Vec<Method> = if args.compare {
        vec![Method::Admm, Method::Barrier]
    } else {
        vec![args.method.into()]
    };
    let options = RunOptions {
        trials: args.trials,
        snapshots: args.snapshots,
        record_iteration_times: args.record_iteration_times,
        parallel_trials: args.parallel_trials,
    };
    match harness::run(&config, &methods, &options, &args.out) {
        Ok(runs) => {
            summarize(&runs);
            if runs.iter().any(MethodRun::any_failed) {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
