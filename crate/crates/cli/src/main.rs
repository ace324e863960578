use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasefront_cli::builtin::BUILTINS;
use phasefront_cli::{load_scenario, run, write_outcome, Mode, RunError};

#[derive(Parser)]
#[command(name = "phasefront", version, about = "Wave fronts, graph selectors and spectral invariants")]
struct Cli {
    /// Directory receiving `<scenario>/report.json` and the plots.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Curve samples and selector grid (1-D) or grid side (2-D).
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Multiplier on every tolerance.
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Seed of the random scenario families.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario's checks and write the report and plots.
    Run { scenario: String },
    /// Run every check the scenario's model supports; report only.
    Verify { scenario: String },
    /// Write the plots and tables without running checks.
    Plot { scenario: String },
    /// List the built-in scenarios.
    List,
    /// Print a scenario as JSON, with the command-line overrides applied.
    Show { scenario: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<bool, RunError> {
    let (arg, mode) = match &cli.command {
        Command::List => {
            for (name, about) in BUILTINS {
                println!("{name:<16} {about}");
            }
            return Ok(true);
        }
        Command::Run { scenario } => (scenario, Mode::Run),
        Command::Verify { scenario } => (scenario, Mode::Verify),
        Command::Plot { scenario } => (scenario, Mode::Plot),
        Command::Show { scenario } => (scenario, Mode::Plot),
    };
    let mut sc = load_scenario(arg)?;
    if let Some(n) = cli.resolution {
        sc = sc.with_resolution(n);
    }
    if let Some(t) = cli.tol_scale {
        sc.tol_scale = t;
    }
    if let Some(s) = cli.seed {
        sc.seed = s;
    }
    if let Command::Show { .. } = cli.command {
        sc.validate()?;
        println!("{}", sc.to_json());
        return Ok(true);
    }
    let outcome = run(&sc, mode, cli.jobs)?;
    let root = write_outcome(&outcome, &cli.out_dir)?;
    let r = &outcome.report;
    for item in &r.items {
        if let Some(e) = &item.error {
            println!("{}: ERROR {e}", item.label);
        }
        for c in item.checks.iter().filter(|c| !c.passed) {
            println!("{}: FAIL {} (residual {:e}, tolerance {:e})", item.label, c.name, c.residual, c.tolerance);
        }
    }
    if mode == Mode::Plot {
        println!("{}: wrote {} files to {}", r.scenario, outcome.artifacts.len(), root.display());
        return Ok(r.items.iter().all(|i| i.error.is_none()));
    }
    println!(
        "{}: {} ({} checks, {} failures) -> {}",
        r.scenario,
        if r.passed { "PASS" } else { "FAIL" },
        r.check_count,
        r.failure_count,
        root.join("report.json").display()
    );
    Ok(r.passed)
}
