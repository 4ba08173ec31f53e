//! `normative gen | run | report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use normative::harness::{self, parse_config_file, Mode, ModelKind, Report, RunConfig, Scenario};
use normative::{Error, Result};

#[derive(Parser)]
#[command(name = "normative", version, about = "Seeded constraint and fairness experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario's synthetic dataset as CSV.
    Gen {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: u64,
        /// Row count; rows per environment for env-ensemble.
        #[arg(long)]
        n: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and write its JSON report.
    Run {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Plain-text key=value file; command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parameter override, repeatable: --set tau=0.35
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Summarise run reports as one CSV table.
    Report {
        #[arg(long)]
        out: PathBuf,
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("normative: {e}");
            ExitCode::from(match e {
                Error::Usage(_) => 1,
                _ => 2,
            })
        }
    }
}

fn usage(msg: String) -> Error {
    Error::Usage(msg)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { scenario, seed, n, out } => {
            let scenario: Scenario = scenario.parse()?;
            let ds = harness::generate(scenario, seed, n as usize)?;
            ds.write_csv(fs::File::create(&out)?)
        }
        Command::Run {
            scenario,
            model,
            mode,
            seed,
            config,
            set,
            out,
            save_model,
        } => {
            let mut file = match &config {
                Some(path) => parse_config_file(path)?,
                None => BTreeMap::new(),
            };
            let mut pick = |flag: Option<String>, key: &str| -> Result<String> {
                match (flag, file.remove(key)) {
                    (Some(v), _) | (None, Some(v)) => Ok(v),
                    (None, None) => Err(usage(format!("missing --{key}"))),
                }
            };
            let scenario: Scenario = pick(scenario, "scenario")?.parse()?;
            let model: ModelKind = pick(model, "model")?.parse()?;
            let mode: Mode = pick(mode, "mode")?.parse()?;
            let file_seed = file.remove("seed");
            let seed = match (seed, file_seed) {
                (Some(s), _) => s,
                (None, Some(s)) => s
                    .parse()
                    .map_err(|_| usage(format!("seed must be a non-negative integer, got `{s}`")))?,
                (None, None) => 42,
            };
            let mut cfg = RunConfig::new(scenario, model, mode, seed);
            cfg.overrides = file;
            for kv in set {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
                cfg.overrides.insert(k.trim().to_string(), v.trim().to_string());
            }
            let output = harness::run(&cfg)?;
            let json = output.report.to_json()?;
            match out {
                Some(path) => fs::write(path, json)?,
                None => print!("{json}"),
            }
            if let Some(path) = save_model {
                fs::write(path, output.artifact.to_json()?)?;
            }
            Ok(())
        }
        Command::Report { out, inputs } => {
            let reports = inputs.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
            harness::write_summary(&reports, fs::File::create(out)?)
        }
    }
}

fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path)?;
    Report::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
