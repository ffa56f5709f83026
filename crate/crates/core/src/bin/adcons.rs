use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use adcons::export;
use adcons::reproduce;
use adcons::scenario::{self, Design, Scenario};
use adcons::simulator;
use adcons::Error;

/// Adaptive guaranteed-performance consensus: gain synthesis, simulation and
/// verification.
#[derive(Parser)]
#[command(name = "adcons", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize gains for a scenario and print them.
    Synth {
        /// Scenario file, or a name looked up in $ADCONS_SCENARIO_DIR and the
        /// bundled examples.
        scenario: String,
        /// Override the translation factor γ.
        #[arg(long, conflicts_with = "eps")]
        gamma: Option<f64>,
        /// Override the gain factor ε (γ is searched).
        #[arg(long)]
        eps: Option<f64>,
        /// Directory for ku.csv, kw.csv and certificate.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize, simulate and write the trace CSV plus its .meta file.
    Simulate {
        scenario: String,
        /// Output CSV path.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Re-check an exported trace against the gains in its .meta file.
    Verify { trace: PathBuf },
    /// Run a bundled example end to end and print a pass/fail table.
    Reproduce {
        #[arg(value_enum)]
        example: Example,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Example1,
    Example2,
}

fn apply_design(sc: &mut Scenario, gamma: Option<f64>, eps: Option<f64>) {
    if let Some(g) = gamma {
        sc.design = Design::Gamma(g);
    }
    if let Some(e) = eps {
        sc.design = Design::Eps(e);
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Synth {
            scenario,
            gamma,
            eps,
            out,
        } => {
            let mut sc = scenario::resolve(&scenario)?;
            apply_design(&mut sc, gamma, eps);
            let report = reproduce::synth(&sc)?;
            println!("{report}");
            if let Some(dir) = out {
                export::write_gains(&report.gains, &dir)?;
                std::fs::write(dir.join("summary.txt"), format!("{report}\n"))?;
            }
            Ok(true)
        }
        Command::Simulate {
            scenario,
            out,
            seed,
            horizon,
            step,
        } => {
            let mut sc = scenario::resolve(&scenario)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            if let Some(h) = horizon {
                sc.integrator.horizon = h;
            }
            if let Some(h) = step {
                sc.integrator.step = h;
            }
            sc.integrator.validate()?;
            let gains = sc.synthesize()?;
            let trace = simulator::simulate(&sc.simulation_setup(gains)?)?;
            export::export_trace(&trace, &out)?;
            let verification = reproduce::verify_trace(&trace)?;
            let summary = export::summary_path(&out);
            std::fs::write(&summary, format!("{verification}\n"))?;
            println!(
                "wrote {}, {} and {}",
                out.display(),
                export::meta_path(&out).display(),
                summary.display()
            );
            println!("{verification}");
            Ok(true)
        }
        Command::Verify { trace } => {
            let trace = export::import_trace(&trace)?;
            let verification = reproduce::verify_trace(&trace)?;
            println!("{verification}");
            Ok(verification.passed())
        }
        Command::Reproduce { example } => {
            let name = match example {
                Example::Example1 => "example1",
                Example::Example2 => "example2",
            };
            let table = reproduce::reproduce(name)?;
            println!("{table}");
            Ok(table.all_passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
