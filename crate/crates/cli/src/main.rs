//! Command-line front end: run, sweep, recover, detect and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use collapse_core::engine::{recovery_grid, run_recursive, summarize_runs, RunResult};
use collapse_core::report::{
    detect_from_rows, emit_chart, load_config, read_records, read_recovery, records_to_string,
    recovery_table, recovery_to_string, rows_from_results, summarize, write_run_dir, TableKind,
    OUTPUT_DIR_ENV,
};
use collapse_core::report::summary::controls_table;
use collapse_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "collapse-lab",
    about = "Recursive self-training collapse laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory (defaults to $COLLAPSE_LAB_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute the runs described by a config file (open-loop unless the
    /// config picks other schedule modes).
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Execute the full baseline grid (every schedule mode unless the
    /// config narrows it) and write the aggregate summary.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the config's runs, then the checkpoints-by-budgets recovery
    /// grid for each.
    Recover {
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Re-run onset detection on an existing records file.
    Detect { records: PathBuf },
    /// Summarize an existing records (or recovery) file.
    Report {
        records: PathBuf,
        /// Table kind: controls, same_pressure, onsets, or recovery
        /// (recovery reads a recovery.csv).
        #[arg(long)]
        table: Option<String>,
        /// Comma-separated quantities to chart (e.g. H,ppl,tau).
        #[arg(long)]
        chart: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
}

fn execute_plan(config: &Path, default_all_modes: bool, out: &Path) -> Result<Vec<RunResult>> {
    let plan = load_config(config, default_all_modes)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let mut results = Vec::with_capacity(plan.specs.len());
    for spec in &plan.specs {
        let result = run_recursive(spec)?;
        write_run_dir(&result, out)?;
        results.push(result);
    }
    let rows = rows_from_results(&results);
    let records_path = out.join("records.csv");
    std::fs::write(&records_path, records_to_string(&rows))
        .map_err(|e| Error::io(records_path.display().to_string(), e))?;
    Ok(results)
}

fn onset_line(run_id: &str, onsets: &collapse_core::engine::OnsetReport) -> String {
    let opt = |o: Option<usize>| o.map(|g| format!("g{g}")).unwrap_or_else(|| "none".into());
    let lead = onsets
        .lead_time
        .map(|l| l.to_string())
        .unwrap_or_else(|| "n/a".into());
    format!(
        "{run_id}: hidden onset {}, visible onset {}, lead time {lead}",
        opt(onsets.hidden_onset),
        opt(onsets.visible_onset)
    )
}

fn cmd_run(config: &Path, out: &Path) -> Result<()> {
    let results = execute_plan(config, false, out)?;
    for run in &results {
        println!("{}", onset_line(&run.spec.run_id, &run.onsets));
    }
    println!("wrote {} run(s) under {}", results.len(), out.display());
    Ok(())
}

fn cmd_sweep(config: &Path, out: &Path) -> Result<()> {
    let results = execute_plan(config, true, out)?;
    let report = summarize_runs(&results);
    let table = controls_table(&rows_from_results(&results));
    let summary_path = out.join("controls.json");
    std::fs::write(&summary_path, serde_json_string(&table.json))
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;
    print!("{}", table.text);
    println!(
        "swept {} run(s) across {} baseline(s); summary at {}",
        report.runs.len(),
        report.aggregates.len(),
        summary_path.display()
    );
    Ok(())
}

fn serde_json_string(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("summary serialization")
}

fn cmd_recover(config: &Path, out: &Path) -> Result<()> {
    let plan = load_config(config, false)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    for spec in &plan.specs {
        let run = run_recursive(spec)?;
        let dir = write_run_dir(&run, out)?;
        let grid = recovery_grid(&run, &plan.recovery_checkpoints, &plan.recovery_budgets)?;
        let text = recovery_to_string(&run.spec.run_id, &grid);
        let path = dir.join("recovery.csv");
        std::fs::write(&path, &text).map_err(|e| Error::io(path.display().to_string(), e))?;
        let rows = collapse_core::report::parse_recovery_str(&text)?;
        println!("{}", run.spec.run_id);
        print!("{}", recovery_table(&rows).text);
    }
    Ok(())
}

fn cmd_detect(records: &Path) -> Result<()> {
    let rows = read_records(records)?;
    for (run_id, onsets) in detect_from_rows(&rows) {
        println!("{}", onset_line(&run_id, &onsets));
    }
    Ok(())
}

fn cmd_report(
    records: &Path,
    table: Option<&str>,
    chart: Option<&str>,
    out: &Path,
) -> Result<()> {
    if table.is_none() && chart.is_none() {
        return Err(Error::Config(
            "report needs --table <kind> and/or --chart <quantities>".into(),
        ));
    }
    if let Some(kind) = table {
        let kind = TableKind::parse(kind)?;
        let output = if kind == TableKind::Recovery {
            recovery_table(&read_recovery(records)?)
        } else {
            summarize(&read_records(records)?, kind)?
        };
        print!("{}", output.text);
    }
    if let Some(quantities) = chart {
        let quantities: Vec<String> = quantities.split(',').map(|s| s.trim().to_string()).collect();
        let rows = read_records(records)?;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let path = out.join(format!("chart_{}.svg", quantities.join("_")));
        emit_chart(&rows, &quantities, &path)?;
        println!("wrote chart {}", path.display());
    }
    Ok(())
}

fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out.resolve()),
        Command::Sweep { config, out } => cmd_sweep(&config, &out.resolve()),
        Command::Recover { config, out } => cmd_recover(&config, &out.resolve()),
        Command::Detect { records } => cmd_detect(&records),
        Command::Report { records, table, chart, out } => {
            cmd_report(&records, table.as_deref(), chart.as_deref(), &out.resolve())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
