//! CSV and JSON artifacts. Every file starts with the config echo and seed
//! ledger, and is written through a temporary file that is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{EpisodeTrace, ExperimentConfig, SweepTable};
use crate::rng::SeedLedger;

pub const WD_HEADER: [&str; 9] = [
    "block",
    "wd_id",
    "cost",
    "e_wd",
    "e_off",
    "q_wd",
    "td_err",
    "grad_norm",
    "theta_rel_change",
];

pub const SYSTEM_HEADER: [&str; 9] = [
    "block",
    "cost_ser",
    "e_ser",
    "q_ser",
    "rho",
    "grad_norm",
    "eta_rel_change",
    "cost_total",
    "discounted_cum",
];

pub const SWEEP_HEADER: [&str; 9] = ["axis", "value", "policy", "seeds", "mean", "std", "ci95", "tail_bound", "diverged"];

pub const CELLS_HEADER: [&str; 7] = ["axis", "value", "policy", "replicate", "seed", "discounted_sum", "diverged"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn comment_block<C: Serialize>(config: &C, seeds: &SeedLedger) -> Result<String> {
    Ok(format!(
        "# config: {}\n# seeds: {}\n",
        serde_json::to_string(config)?,
        serde_json::to_string(seeds)?
    ))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn with_rows(prefix: String, header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut out = prefix.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn wd_csv(trace: &EpisodeTrace) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for b in &trace.blocks {
        for (k, m) in b.wds.iter().enumerate() {
            rows.push(vec![
                b.block.to_string(),
                k.to_string(),
                num(m.cost),
                num(m.e_wd),
                num(m.e_off),
                num(m.q_wd),
                opt(m.td_err),
                opt(m.grad_norm),
                opt(m.theta_rel_change),
            ]);
        }
    }
    with_rows(comment_block(&trace.config, &trace.seeds)?, &WD_HEADER, rows)
}

pub fn system_csv(trace: &EpisodeTrace) -> Result<Vec<u8>> {
    let rows = trace
        .blocks
        .iter()
        .map(|b| {
            vec![
                b.block.to_string(),
                num(b.cost_ser),
                num(b.e_ser),
                num(b.q_ser),
                opt(b.rho),
                opt(b.grad_norm_ser),
                opt(b.eta_rel_change),
                num(b.cost_total),
                num(b.discounted_cum),
            ]
        })
        .collect();
    with_rows(comment_block(&trace.config, &trace.seeds)?, &SYSTEM_HEADER, rows)
}

pub fn summary_json(trace: &EpisodeTrace) -> Result<Vec<u8>> {
    let v = json!({
        "status": trace.status,
        "blocks": trace.blocks.len(),
        "discounted_sum": trace.discounted_sum(),
        "tail_bound": trace.tail_bound(),
        "wd_converged_at": trace.wd_converged_at,
        "server_converged_at": trace.server_converged_at,
        "topology": trace.topology,
        "config": trace.config,
        "seeds": trace.seeds,
    });
    let mut s = serde_json::to_vec_pretty(&v)?;
    s.push(b'\n');
    Ok(s)
}

/// Writes `wd.csv`, `system.csv` and `summary.json` into `dir`.
pub fn write_run(trace: &EpisodeTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        ("wd.csv", wd_csv(trace)?),
        ("system.csv", system_csv(trace)?),
        ("summary.json", summary_json(trace)?),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
    }
    Ok(written)
}

/// Ledger of a sweep: the root seed and the per-replicate master seeds.
pub fn sweep_ledger(exp: &ExperimentConfig) -> SeedLedger {
    let mut l = SeedLedger::new(exp.system.seed);
    for r in 0..exp.seeds {
        l.record_seed(crate::rng::StreamKind::Replicate, r as u64);
    }
    l
}

pub fn sweep_csv(table: &SweepTable, exp: &ExperimentConfig) -> Result<Vec<u8>> {
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                table.axis.name().to_string(),
                num(r.axis_value),
                r.policy.to_string(),
                r.seeds.to_string(),
                num(r.mean),
                num(r.std),
                num(r.ci95),
                num(r.tail_bound),
                r.diverged.to_string(),
            ]
        })
        .collect();
    with_rows(comment_block(exp, &sweep_ledger(exp))?, &SWEEP_HEADER, rows)
}

pub fn cells_csv(table: &SweepTable, exp: &ExperimentConfig) -> Result<Vec<u8>> {
    let rows = table
        .cells
        .iter()
        .map(|c| {
            vec![
                table.axis.name().to_string(),
                num(c.axis_value),
                c.policy.to_string(),
                c.replicate.to_string(),
                c.seed.to_string(),
                num(c.discounted_sum),
                c.diverged.to_string(),
            ]
        })
        .collect();
    with_rows(comment_block(exp, &sweep_ledger(exp))?, &CELLS_HEADER, rows)
}

/// Writes `sweep.csv` and `cells.csv` into `dir`.
pub fn write_sweep(table: &SweepTable, exp: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [("sweep.csv", sweep_csv(table, exp)?), ("cells.csv", cells_csv(table, exp)?)];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
    }
    Ok(written)
}

/// A data CSV with its `#` comment lines dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::PolicyKind;
    use crate::config::SystemConfig;
    use crate::harness::run_episode;

    #[test]
    fn csv_round_trip_keeps_header_and_rows() {
        let exp = ExperimentConfig {
            system: SystemConfig {
                num_wds: 2,
                ..SystemConfig::default()
            },
            policy: PolicyKind::Proposed,
            horizon_blocks: 12,
            ..ExperimentConfig::default()
        };
        let trace = run_episode(&exp).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(&trace, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("wd.csv")).unwrap();
        assert!(text.starts_with("# config: {"));
        assert!(text.lines().nth(1).unwrap().starts_with("# seeds: {"));
        let wd = read_table(&dir.path().join("wd.csv")).unwrap();
        assert_eq!(wd.header, WD_HEADER);
        assert_eq!(wd.rows.len(), 24);
        let sys = read_table(&dir.path().join("system.csv")).unwrap();
        assert_eq!(sys.header, SYSTEM_HEADER);
        let last: f64 = sys.rows[11][8].parse().unwrap();
        assert_eq!(last, trace.discounted_sum());
        let summary: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["blocks"], 12);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
