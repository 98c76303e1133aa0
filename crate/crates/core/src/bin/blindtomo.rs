use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use blindtomo::bench::{self, Experiment, ExperimentConfig, ResultRow};
use blindtomo::{parallel, Error};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blindtomo", version, about = "Monte Carlo experiments for blind state tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recovery rate vs m on GUE data for sdt, dt and informed-dt.
    GuePhase(RunArgs),
    /// Sub-sampled Pauli data with shot noise: sdt vs standard tomography.
    PauliBlind(RunArgs),
    /// Coherent-error Pauli model: ALS vs standard tomography.
    CoherentAls(RunArgs),
    /// Sampled lower bounds on the RIP constant of normalized ensembles.
    RipProbe(RunArgs),
    /// Built-in oracle and invariant checks.
    OracleTests(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON file overlaid on the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; a `.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// `key.path=value`, applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Record wall time per solver run (makes output non-reproducible).
    #[arg(long)]
    record_timing: bool,
}

fn load(experiment: Experiment, args: &RunArgs) -> blindtomo::Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let mut overrides = args.overrides.clone();
    if args.record_timing {
        overrides.push("record_timing=true".into());
    }
    if let Some(out) = &args.out {
        overrides.push(format!("output={}", serde_json::to_string(out)?));
    }
    ExperimentConfig::resolve(experiment, file, &overrides, args.seed)
}

fn print_summary(experiment: Experiment, rows: &[ResultRow]) {
    let Ok(summary) = bench::aggregate(rows) else {
        return;
    };
    println!("{:<22} {:>6} {:>6} {:>8} {:>12} {:>12} {:>12}", "solver", "m", "trials", "rate", "frob", "trace_norm", "calib_l2");
    for s in &summary {
        println!(
            "{:<22} {:>6} {:>6} {:>8.3} {:>12.3e} {:>12.3e} {:>12.3e}",
            s.solver, s.m, s.trials, s.success_rate, s.median_frob_error, s.median_trace_norm_error, s.median_calib_l2_error
        );
    }
    if matches!(experiment, Experiment::UnitOracles | Experiment::RipProbe) {
        return;
    }
    let mut solvers: Vec<&str> = summary.iter().map(|s| s.solver.as_str()).collect();
    solvers.dedup();
    for solver in solvers {
        match bench::m50(&summary, solver) {
            Some(m) => println!("m50({solver}) = {m:.1}"),
            None => println!("m50({solver}) not reached"),
        }
    }
}

fn run(experiment: Experiment, args: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(experiment, &args)?;
    let rows = parallel::with_workers(args.workers, || bench::run_experiment(&cfg))?;
    let out = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.as_str())));
    bench::write_outputs(&cfg, &rows, &out).with_context(|| format!("writing {}", out.display()))?;
    print_summary(experiment, &rows);
    eprintln!("wrote {} rows to {}", rows.len(), out.display());

    let failed_numerically = rows.iter().any(|r| r.termination == "numerical-failure");
    let failed_check = experiment == Experiment::UnitOracles && rows.iter().any(|r| !r.success);
    Ok(if failed_numerically || failed_check { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::GuePhase(a) => (Experiment::GuePhase, a),
        Command::PauliBlind(a) => (Experiment::PauliBlind, a),
        Command::CoherentAls(a) => (Experiment::CoherentAls, a),
        Command::RipProbe(a) => (Experiment::RipProbe, a),
        Command::OracleTests(a) => (Experiment::UnitOracles, a),
    };
    match run(experiment, args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::Config { .. }) => ExitCode::from(2),
                Some(Error::NumericalFailure(_)) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
