use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qzeno::config::{self, EngineKind, Overrides};
use qzeno::run;
use qzeno::Error;

#[derive(Parser)]
#[command(name = "qzeno", version, about = "Repeated-observation simulations: two-level Zeno effect, short-time decay, kicked rotor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-level system under repeated observation.
    Zeno(RunArgs),
    /// Quantum kicked rotor, optionally with phase-randomizing observations.
    Rotor(RunArgs),
    /// Short-time decay probability and repeated-observation survival.
    Decay(RunArgs),
    /// Run the built-in consistency checks.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `output.dir` from the spec, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the realization count.
    #[arg(long)]
    realizations: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn run_engine(expected: EngineKind, args: &RunArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.spec).map_err(|source| Error::Io {
        path: args.spec.display().to_string(),
        source,
    })?;
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        realizations: args.realizations,
    };
    let spec = config::parse_spec_with(&text, &overrides)?;
    let kind = spec.engine.kind();
    if kind != expected {
        return Err(Error::Config(format!(
            "spec describes a [{}] experiment, not [{}]",
            kind.table_name(),
            expected.table_name()
        )));
    }
    let out = spec.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let report = run::execute(&spec, &out, args.threads)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Zeno(a) => run_engine(EngineKind::TwoLevel, a),
        Command::Rotor(a) => run_engine(EngineKind::Rotor, a),
        Command::Decay(a) => run_engine(EngineKind::Decay, a),
        Command::Verify => {
            let checks = qzeno::verify::run_checks();
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                println!("{mark}  {:width$}  {}", c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                return ExitCode::SUCCESS;
            }
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", run::error_json(&e));
            if matches!(e, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
