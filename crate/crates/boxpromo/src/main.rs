use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boxpromo::files::{self, LogWriter};
use boxpromo::{apply_overrides, audit_exit_code, render, Error, EXIT_CLEAN, EXIT_INPUT};
use boxpromo_core::log::LogHeader;
use boxpromo_core::run::run_streaming;
use boxpromo_core::verifier::{audit, Auditor};
use clap::{Parser, Subcommand};

/// Runs box-promotion scenarios against adversaries, audits stage logs and
/// renders reports.
#[derive(Parser, Debug)]
#[command(name = "boxpromo", version)]
struct Cli {
    /// Replace the adversary seed of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Carving alphabet sizes for a negative control: `N` or `k=N,...`.
    #[arg(long, global = true, requires = "negative_control")]
    override_capacity: Option<String>,
    /// Mark the run as a negative control; needed for --override-capacity.
    #[arg(long, global = true)]
    negative_control: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file (or shipped scenario name) and write its stage
    /// log, summary and audit into a directory.
    Run {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit a stage log and print the report as JSON.
    Audit {
        log: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the scenario recorded in a log and compare record by record.
    Replay { log: PathBuf },
    /// Render an audit report as tables, or its occupancy series as CSV.
    Report {
        audit: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// List the shipped scenarios.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_CLEAN });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Run { scenario, out } => {
            let mut scenario = files::load_scenario(scenario)?;
            apply_overrides(&mut scenario, cli.seed, cli.override_capacity.as_deref(), cli.negative_control)?;
            run_to_dir(scenario, out)
        }
        Command::Audit { log, out } => {
            let (header, records) = files::read_log(log)?;
            let report = audit(&header, records.iter())?;
            match out {
                Some(path) => files::write_json(path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report).expect("serializable")),
            }
            eprint!("{}", render::table(&report));
            Ok(audit_exit_code(&report))
        }
        Command::Replay { log } => {
            let (header, records) = files::read_log(log)?;
            let n = boxpromo::replay(&header, &records)?;
            println!("replayed {n} records, identical to {}", log.display());
            Ok(EXIT_CLEAN)
        }
        Command::Report { audit, csv } => {
            let report = files::read_audit(audit)?;
            if *csv {
                print!("{}", render::csv(&report));
            } else {
                print!("{}", render::table(&report));
            }
            Ok(audit_exit_code(&report))
        }
        Command::List => {
            for name in boxpromo::shipped::names() {
                println!("{name}");
            }
            Ok(EXIT_CLEAN)
        }
    }
}

fn run_to_dir(scenario: boxpromo_core::scenario::Scenario, out: &Path) -> Result<u8, Error> {
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.to_path_buf(), source })?;
    let header = LogHeader::new(scenario.clone());
    let log_path = out.join(format!("{}.jsonl", scenario.name));
    let mut writer = LogWriter::create(&log_path, &header)?;
    let mut auditor = Auditor::new(&header)?;
    let mut failed: Option<Error> = None;
    let summary = run_streaming(&scenario, |rec| {
        if failed.is_some() {
            return;
        }
        if let Err(e) = writer.record(&rec) {
            failed = Some(e);
            return;
        }
        if let Err(e) = auditor.feed(&rec) {
            failed = Some(e.into());
        }
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    writer.finish()?;
    let report = auditor.finish();
    files::write_json(
        &out.join(format!("{}.summary.json", scenario.name)),
        &serde_json::json!({
            "scenario": scenario.name,
            "ticks": summary.ticks,
            "stages": summary.stages,
            "violation": summary.violation,
            "classification": report.classification,
            "failures": report.failures(),
        }),
    )?;
    let audit_path = out.join(format!("{}.audit.json", scenario.name));
    files::write_json(&audit_path, &report)?;
    println!(
        "{}: {} ticks, {} stages, {:?}, {} check failures; log {}",
        scenario.name,
        summary.ticks,
        summary.stages,
        report.classification,
        report.failures(),
        log_path.display()
    );
    Ok(audit_exit_code(&report))
}
