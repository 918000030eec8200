//! `nonlocal-lab`: reproducible experiments on GHZ correlations with lossy
//! detectors and broadcast communication.
//!
//! Exit codes: 0 when every requested verification passes, 1 when one
//! fails, 2 on invalid input or an exceeded budget.

mod commands;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commands::Report;

#[derive(Parser, Debug)]
#[command(name = "nonlocal-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Seed for every random draw of the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on enumerated objects (inputs, strategies, rectangles).
    #[arg(long, env = "NONLOCAL_LAB_BUDGET", default_value_t = 10_000_000)]
    pub budget: u128,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Keep wall-clock timings in the report (they make reruns differ).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantum against ideal probabilities on every valid input.
    Quantum(commands::QuantumArgs),
    /// Efficiency and error measures of a classical model.
    LhvEval(commands::LhvEvalArgs),
    /// Minimum error or maximum efficiency over classical strategies.
    Search(commands::SearchArgs),
    /// Largest high-advantage rectangles for a grid of thresholds.
    RectScan(commands::RectScanArgs),
    /// Bias of sums of random sets over Z_T.
    Addition(commands::AdditionArgs),
    /// Achievable against rectangle-bound efficiency on a (c, eps) grid.
    Tradeoff(commands::TradeoffArgs),
    /// Runs a protocol and its detector-model conversion.
    ProtocolRun(commands::ProtocolRunArgs),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Quantum(a) => &a.common,
            Command::LhvEval(a) => &a.common,
            Command::Search(a) => &a.common,
            Command::RectScan(a) => &a.common,
            Command::Addition(a) => &a.common,
            Command::Tradeoff(a) => &a.common,
            Command::ProtocolRun(a) => &a.common,
        }
    }

    fn run(&self) -> anyhow::Result<Report> {
        match self {
            Command::Quantum(a) => commands::quantum(a),
            Command::LhvEval(a) => commands::lhv_eval(a),
            Command::Search(a) => commands::search(a),
            Command::RectScan(a) => commands::rect_scan(a),
            Command::Addition(a) => commands::addition(a),
            Command::Tradeoff(a) => commands::tradeoff(a),
            Command::ProtocolRun(a) => commands::protocol_run(a),
        }
    }
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove("wall_time_ms");
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn render(report: &mut Report, common: &Common) -> anyhow::Result<Vec<u8>> {
    match common.format {
        Format::Json => {
            if !common.timing {
                strip_timing(&mut report.body);
            }
            let envelope = serde_json::json!({
                "command": report.command,
                "config": common,
                "parameters": report.parameters,
                "pass": report.pass,
                "result": report.body,
            });
            let mut out = serde_json::to_vec_pretty(&envelope)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&report.table.header)?;
            for row in &report.table.rows {
                w.write_record(row)?;
            }
            Ok(w.into_inner()?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = cli.command.common().clone();
    let outcome = nonlocal_core::par::with_threads(common.threads, || cli.command.run());
    let mut report = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let bytes = match render(&mut report, &common) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let written = match &common.out {
        Some(path) => fs::write(path, &bytes),
        None => io::stdout().lock().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("verification failed");
        ExitCode::from(1)
    }
}
