use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gfdetect::pipeline::{self, ExperimentSpec};
use gfdetect::repro;

#[derive(Parser)]
#[command(
    name = "gfdetect",
    version,
    about = "Short-packet preamble detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test datasets.
    Gen(SpecArgs),
    /// Train the selected detectors on generated training sets.
    Train(SpecArgs),
    /// Evaluate trained detectors on the test sets.
    Eval(SpecArgs),
    /// Run a reproduction grid (fig3, table2, fig4, table3) and grade it.
    Repro {
        id: String,
        #[command(flatten)]
        spec: SpecArgs,
    },
}

#[derive(Args, Default)]
struct SpecArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated SNR list in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated: corr, nn, rf.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    seed_train: Option<String>,
    #[arg(long)]
    seed_test: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_config_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentSpec::default(),
        };
        let overrides = [
            ("scenario", &self.scenario),
            ("snr", &self.snr),
            ("scheme", &self.scheme),
            ("detector", &self.detector),
            ("size", &self.size),
            ("seed_train", &self.seed_train),
            ("seed_test", &self.seed_test),
            ("out", &self.out),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                spec.apply(key, v)?;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen(args) => {
            let spec = args.resolve()?;
            for path in pipeline::cmd_gen(&spec)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(args) => {
            let spec = args.resolve()?;
            for note in pipeline::cmd_train(&spec)? {
                println!("{} {}: {}", note.cell.name(), note.detector, note.message);
            }
        }
        Command::Eval(args) => {
            let spec = args.resolve()?;
            for e in pipeline::cmd_eval(&spec)? {
                match &e.report {
                    Some(r) => println!(
                        "{} {}: accuracy {:.4}, pd {}, pfa {}",
                        e.cell.name(),
                        e.detector,
                        r.accuracy,
                        fmt(r.pd),
                        fmt(r.pfa_precision)
                    ),
                    None => println!(
                        "{} {}: {} ROC points",
                        e.cell.name(),
                        e.detector,
                        e.roc.len()
                    ),
                }
            }
        }
        Command::Repro { id, spec } => {
            let base = spec.resolve()?;
            let outcome = repro::run(&id, &base)?;
            print!("{}", repro::render_table(&outcome.checks));
            return Ok(outcome.all_pass());
        }
    }
    Ok(true)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gfdetect: some checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("gfdetect: {e:#}");
            ExitCode::FAILURE
        }
    }
}
