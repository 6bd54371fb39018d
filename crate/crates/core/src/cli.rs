//! Command-line front end of `mecsim`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::baselines::PolicyKind;
use crate::config::SystemConfig;
use crate::diagnostics::{self, tiny_mdp};
use crate::error::{Error, Result};
use crate::harness::{self, EpisodeStatus, ExperimentConfig, SweepAxis};
use crate::output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Fraction of tiny-MDP seeds whose trained Q must beat the untrained one.
pub const RESIDUAL_SEED_FRACTION: f64 = 0.9;
pub const TINY_MAX_GAP: f64 = 0.15;

#[derive(Debug, Parser)]
#[command(name = "mecsim", version, about = "Edge offloading simulator with decentralized Q-learners")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    #[value(name = "b")]
    B,
    #[value(name = "K")]
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Conv,
    PerBlock,
    #[value(name = "vs-b")]
    VsB,
    #[value(name = "vs-K")]
    VsK,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write wd.csv, system.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the arrival probability or the number of WDs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Compare the learned WD controller with value iteration on the tiny instance.
    OracleCompare {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Turn a trace or sweep CSV into two-column plot series.
    Plotdata {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run {
            config,
            policy,
            seed,
            out,
        } => {
            let mut exp = ExperimentConfig::load(&config)?;
            if let Some(p) = policy {
                exp.policy = p;
            }
            if let Some(s) = seed {
                exp.system.seed = s;
            }
            exp.validate()?;
            let dir = out.or_else(|| exp.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let trace = harness::run_episode(&exp)?;
            let files = output::write_run(&trace, &dir)?;
            print_json(&json!({
                "status": trace.status,
                "blocks": trace.blocks.len(),
                "discounted_sum": trace.discounted_sum(),
                "tail_bound": trace.tail_bound(),
                "files": files,
            }))?;
            Ok(match trace.status {
                EpisodeStatus::Completed => EXIT_OK,
                EpisodeStatus::Diverged { .. } => EXIT_DIVERGED,
            })
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            jobs,
            out,
        } => {
            let mut exp = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                exp.seeds = s;
            }
            exp.validate()?;
            let axis = match axis {
                AxisArg::B => SweepAxis::ArrivalProb,
                AxisArg::K => SweepAxis::NumWds,
            };
            let dir = out.or_else(|| exp.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let table = harness::sweep(&exp, axis, &values, jobs)?;
            let files = output::write_sweep(&table, &exp, &dir)?;
            let diverged = table.cells.iter().filter(|c| c.diverged).count();
            print_json(&json!({
                "axis": axis.name(),
                "rows": table.rows,
                "diverged_cells": diverged,
                "files": files,
            }))?;
            Ok(if diverged > 0 { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Gradcheck { trials, config, seed } => {
            let cfg = match config {
                Some(p) => SystemConfig::load(&p)?,
                None => SystemConfig::default(),
            };
            let reports = diagnostics::gradcheck_suite(&cfg, trials, seed);
            let passed = reports.iter().all(|r| r.passed);
            print_json(&json!({ "passed": passed, "targets": reports }))?;
            Ok(if passed { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::OracleCompare { seeds, seed } => {
            let inst = tiny_mdp::TinyInstance::default();
            let report = tiny_mdp::oracle_compare(&inst, &tiny_mdp::TinyRun::default(), seeds, seed)?;
            let checks = tiny_checks(&report);
            print_json(&json!({ "checks": checks, "report": report }))?;
            Ok(if checks.all() { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Plotdata {
            trace,
            figure,
            out,
            window,
        } => {
            let dir = out.unwrap_or_else(|| trace.parent().map(Path::to_path_buf).unwrap_or_default());
            let files = plotdata(&trace, figure, &dir, window)?;
            print_json(&json!({ "files": files }))?;
            Ok(EXIT_OK)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TinyChecks {
    pub value_iteration_converged: bool,
    pub within_gap: bool,
    pub residual_improved: bool,
}

impl TinyChecks {
    pub fn all(&self) -> bool {
        self.value_iteration_converged && self.within_gap && self.residual_improved
    }
}

pub fn tiny_checks(r: &tiny_mdp::TinyReport) -> TinyChecks {
    let needed = (RESIDUAL_SEED_FRACTION * r.seeds.len() as f64).ceil() as usize;
    TinyChecks {
        value_iteration_converged: r.oracle_last_change <= 1e-9,
        within_gap: r.relative_gap <= TINY_MAX_GAP,
        residual_improved: r.residual_improved >= needed,
    }
}

fn comment_lines(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect())
}

fn series_bytes(prefix: &str, points: &[(String, String)]) -> Result<Vec<u8>> {
    let mut out = prefix.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["x", "y"])?;
        for (x, y) in points {
            w.write_record([x, y])?;
        }
        w.flush()?;
    }
    Ok(out)
}

fn column(table: &output::Table, name: &str, path: &Path) -> Result<usize> {
    table
        .column(name)
        .ok_or_else(|| Error::Config(format!("{} has no column {name:?}", path.display())))
}

fn parse_num(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("not a number: {s:?}")))
}

/// Writes one `x,y` file per series into `dir` and returns their paths.
pub fn plotdata(trace: &Path, figure: Figure, dir: &Path, window: usize) -> Result<Vec<PathBuf>> {
    let table = output::read_table(trace)?;
    let prefix = comment_lines(trace)?;
    let mut series: Vec<(String, Vec<(String, String)>)> = Vec::new();
    match figure {
        Figure::Conv => {
            let block = column(&table, "block", trace)?;
            if let Some(wd) = table.column("wd_id") {
                let rel = column(&table, "theta_rel_change", trace)?;
                for row in &table.rows {
                    let name = format!("wd{}", row[wd]);
                    let pos = match series.iter().position(|(n, _)| *n == name) {
                        Some(p) => p,
                        None => {
                            series.push((name, Vec::new()));
                            series.len() - 1
                        }
                    };
                    if keep(&row[rel]) {
                        series[pos].1.push((row[block].clone(), row[rel].clone()));
                    }
                }
            } else {
                let rel = column(&table, "eta_rel_change", trace)?;
                let pts = table
                    .rows
                    .iter()
                    .filter(|r| keep(&r[rel]))
                    .map(|r| (r[block].clone(), r[rel].clone()))
                    .collect();
                series.push(("server".into(), pts));
            }
        }
        Figure::PerBlock => {
            if window == 0 {
                return Err(Error::Config("window must be at least 1".into()));
            }
            let block = column(&table, "block", trace)?;
            let cost = column(&table, "cost_total", trace)?;
            let raw: Vec<(String, String)> =
                table.rows.iter().map(|r| (r[block].clone(), r[cost].clone())).collect();
            let values = raw.iter().map(|(_, y)| parse_num(y)).collect::<Result<Vec<_>>>()?;
            let mut avg = Vec::with_capacity(values.len());
            let mut acc = 0.0;
            for (i, v) in values.iter().enumerate() {
                acc += v;
                if i >= window {
                    acc -= values[i - window];
                }
                let n = (i + 1).min(window) as f64;
                avg.push((raw[i].0.clone(), format!("{}", acc / n)));
            }
            series.push(("raw".into(), raw));
            series.push((format!("avg{window}"), avg));
        }
        Figure::VsB | Figure::VsK => {
            let want = if figure == Figure::VsB { "b" } else { "K" };
            let axis = column(&table, "axis", trace)?;
            let value = column(&table, "value", trace)?;
            let policy = column(&table, "policy", trace)?;
            let mean = column(&table, "mean", trace)?;
            for row in &table.rows {
                if row[axis] != want {
                    return Err(Error::Config(format!(
                        "{} sweeps axis {:?}, not {want:?}",
                        trace.display(),
                        row[axis]
                    )));
                }
                let name = row[policy].clone();
                let pos = match series.iter().position(|(n, _)| *n == name) {
                    Some(p) => p,
                    None => {
                        series.push((name, Vec::new()));
                        series.len() - 1
                    }
                };
                series[pos].1.push((row[value].clone(), row[mean].clone()));
            }
        }
    }
    let stem = match figure {
        Figure::Conv => "conv",
        Figure::PerBlock => "per_block",
        Figure::VsB => "vs_b",
        Figure::VsK => "vs_k",
    };
    let mut files = Vec::new();
    for (name, pts) in series {
        let p = dir.join(format!("{stem}_{name}.csv"));
        output::write_atomic(&p, &series_bytes(&prefix, &pts)?)?;
        files.push(p);
    }
    Ok(files)
}

fn keep(cell: &str) -> bool {
    cell.parse::<f64>().map(f64::is_finite).unwrap_or(false)
}
