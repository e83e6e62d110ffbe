use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use streamckpt_core::sim::parse_trace;
use streamckpt_harness::experiment::{run_prepared, single_report, trace_file, Prepared};
use streamckpt_harness::report::summary_csv;
use streamckpt_harness::srclog::write_source_log;
use streamckpt_harness::{check_trace, measure_mst, replay_trace, run_sweep, write_atomic, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "streamckpt", version, about = "Checkpointing protocol simulator for streaming dataflows")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one config and print (or write) its report.
    Run {
        config: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record the event trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Save the generated input as a source log file.
        #[arg(long)]
        sources_out: Option<PathBuf>,
    },
    /// Search the maximum sustainable throughput of a config.
    Mst { config: PathBuf },
    /// Run the config's sweep matrix and write reports.
    Sweep {
        config: PathBuf,
        /// Override the sweep output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Re-execute a trace file from its embedded config and compare.
    Replay { trace: PathBuf },
    /// Check a trace's recovery lines against brute force.
    Oracle { trace: PathBuf },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn exec(cmd: Cmd) -> Result<u8, HarnessError> {
    match cmd {
        Cmd::Run { config, out, trace, sources_out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if trace.is_some() {
                cfg.run.record_trace = true;
            }
            let prep = Prepared::new(&cfg)?;
            if let Some(p) = sources_out {
                write_atomic(&p, write_source_log(&prep.sources).as_bytes())?;
            }
            let (m, output) = run_prepared(&cfg, &prep)?;
            if let (Some(p), Some(text)) = (trace, trace_file(&cfg, &output)) {
                write_atomic(&p, text.as_bytes())?;
            }
            let report = single_report(&cfg, m).to_json();
            match out {
                Some(p) => write_atomic(&p, report.as_bytes())?,
                None => print!("{report}"),
            }
            Ok(0)
        }
        Cmd::Mst { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let q = cfg.build_query()?;
            println!("{}", json(&measure_mst(&cfg, &q)?));
            Ok(0)
        }
        Cmd::Sweep { config, out_dir } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let sweep = cfg.sweep.get_or_insert_with(Default::default);
            if let Some(d) = out_dir {
                sweep.output_dir = d;
            }
            let dir = sweep.output_dir.clone();
            let reports = run_sweep(&cfg, true)?;
            print!("{}", summary_csv(&reports));
            eprintln!("{} reports written to {}", reports.len(), dir.display());
            Ok(0)
        }
        Cmd::Replay { trace } => {
            let r = replay_trace(&read(&trace)?)?;
            println!("{}", json(&r));
            Ok(if r.first_divergence.is_some() { 2 } else { 0 })
        }
        Cmd::Oracle { trace } => {
            let parsed = parse_trace(&read(&trace)?)?;
            println!("{}", json(&check_trace(&parsed)?));
            Ok(0)
        }
    }
}
