use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shapetune::runner::{
    self, evaluate_incumbents, export, load_experiment, optimize_all, resume, run_sweep, Experiment,
    ExperimentConfig, ExportKind, IncumbentReport,
};
use shapetune::Error;

#[derive(Parser)]
#[command(name = "shapetune", version, about = "Joint hyperparameter and reward-shaping optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every optimization seed of an experiment.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config entry, e.g. `--set optimizer.total_budget=20`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Continue interrupted optimization runs from their journals.
    Resume {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train each incumbent on the evaluation seeds and write report.json.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the landscape sweep from the config's [landscape] block.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write CSV exports.
    Export {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        what: What,
    },
    /// Print the evaluation report.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum What {
    IncumbentCurve,
    Landscape,
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Integrity { .. } | Error::ConfigMismatch { .. } => 4,
        Error::EvaluationFailed(_) | Error::TrainingDiverged(_) | Error::MissingIncumbent(_) => 5,
        _ => 1,
    }
}

fn fresh(config: &Path, out: &Path, overrides: &[String]) -> Result<Experiment, Error> {
    let exp = Experiment::new(ExperimentConfig::load(config, overrides)?)?;
    let stored = out.join(runner::CONFIG_FILE);
    if stored.exists() {
        let previous = ExperimentConfig::load(&stored, &[])?;
        if previous.hash() != exp.hash {
            return Err(Error::ConfigMismatch {
                path: stored,
                expected: exp.hash.clone(),
                found: previous.hash(),
            });
        }
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(&stored, exp.config.to_toml())?;
    Ok(exp)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Optimize { config, out, overrides } => {
            let exp = fresh(&config, &out, &overrides)?;
            if runner::journal_path(&out, 0).exists() {
                return Err(Error::Config(format!(
                    "{} already holds optimization journals; use `resume`",
                    out.display()
                )));
            }
            for o in optimize_all(&exp, &out)? {
                print_outcome(&o);
            }
        }
        Command::Resume { out } => {
            let exp = load_experiment(&out)?;
            for k in 0..exp.config.protocol.optimization_seeds {
                print_outcome(&resume(&exp, &out, k)?);
            }
        }
        Command::Evaluate { out } => {
            let exp = load_experiment(&out)?;
            let report = evaluate_incumbents(&exp, &out)?;
            print_report(&report);
        }
        Command::Sweep { config, out, overrides } => {
            let exp = fresh(&config, &out, &overrides)?;
            let grid = run_sweep(&exp, &out)?;
            let files = export(&exp, &out, ExportKind::Landscape)?;
            println!(
                "swept {} x {} grid; wrote {}",
                grid.axis_a.resolution(),
                grid.axis_b.resolution(),
                files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            );
        }
        Command::Export { out, what } => {
            let exp = load_experiment(&out)?;
            let kind = match what {
                What::IncumbentCurve => ExportKind::IncumbentCurve,
                What::Landscape => ExportKind::Landscape,
                What::Report => ExportKind::Report,
            };
            for p in export(&exp, &out, kind)? {
                println!("{}", p.display());
            }
        }
        Command::Report { out } => print_report(&IncumbentReport::load(&out)?),
    }
    Ok(())
}

fn print_outcome(o: &runner::RunOutcome) {
    match (&o.incumbent, &o.incumbent_values) {
        (Some(inc), Some(values)) => {
            let vals: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!(
                "seed {}: {} evaluations, incumbent {} fitness {} [{}]",
                o.optimization_seed,
                o.evaluations,
                inc.config.id().as_str(),
                inc.fitness,
                vals.join(" ")
            );
        }
        _ => println!("seed {}: {} evaluations, no full-budget incumbent", o.optimization_seed, o.evaluations),
    }
}

fn print_report(r: &IncumbentReport) {
    let cv = |v: Option<f64>| v.map(|x| format!("{x:.1}%")).unwrap_or_else(|| "n/a".into());
    println!("arm {} ({} evaluation trainings, {} failed)", r.arm, r.evaluation_trainings, r.failed_trainings);
    println!("{:<24}{:>16}{:>12}", "table", "median", "cv");
    println!("{:<24}{:>16.3}{:>12}", "task score", r.task_score.median_score, cv(r.task_score.median_cv));
    println!(
        "{:<24}{:>16.3}{:>12}",
        "default shaped return",
        r.default_shaped_return.median_score,
        cv(r.default_shaped_return.median_cv)
    );
    for s in &r.incumbents {
        println!("  seed {}: incumbent {} (fitness {:.3})", s.optimization_seed, s.config_id, s.fitness);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
