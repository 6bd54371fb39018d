use std::path::Path;
use std::process::{Command, Output};

use mec_offload::harness::ExperimentConfig;
use mec_offload::output::read_table;

fn mecsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mecsim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, exp: &ExperimentConfig) -> String {
    let p = dir.join("exp.json");
    std::fs::write(&p, serde_json::to_string_pretty(exp).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn short() -> ExperimentConfig {
    ExperimentConfig {
        horizon_blocks: 150,
        ..ExperimentConfig::default()
    }
}

#[test]
fn run_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = mecsim(&["run", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["wd.csv", "system.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = std::fs::read_to_string(a.join("system.csv")).unwrap();
    assert!(text.contains("\"seed\":9"));
}

#[test]
fn unknown_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"system": {"num_wds": 2, "warp_factor": 9}}"#).unwrap();
    let o = mecsim(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warp_factor"));
}

#[test]
fn unknown_flag_and_policy_are_named() {
    let o = mecsim(&["gradcheck", "--sparkle"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--sparkle"));
    let o = mecsim(&["run", "--config", "x.json", "--policy", "oracle"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle"));
}

#[test]
fn gradcheck_reports_success() {
    let o = mecsim(&["gradcheck", "--trials", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    for t in v["targets"].as_array().unwrap() {
        assert!(t["max_rel_err"].as_f64().unwrap() <= 1e-5);
    }
}

#[test]
fn exploding_steps_exit_with_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut exp = short();
    exp.system.step_size.initial = 1e200;
    let cfg = write_config(dir.path(), &exp);
    let o = mecsim(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"]["status"], "diverged");
}

#[test]
fn plot_series_copy_sweep_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short());
    let out = dir.path().join("sweep");
    let o = mecsim(&[
        "sweep", "--config", &cfg, "--axis", "b", "--values", "0.1,0.3,0.5", "--seeds", "3", "--jobs", "2", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = out.join("sweep.csv");
    let before = std::fs::read(&sweep).unwrap();
    let plots = dir.path().join("plots");
    let o = mecsim(&["plotdata", "--trace", sweep.to_str().unwrap(), "--figure", "vs-b", "--out", plots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&sweep).unwrap(), before);

    let table = read_table(&sweep).unwrap();
    let (pc, vc, mc) = (
        table.column("policy").unwrap(),
        table.column("value").unwrap(),
        table.column("mean").unwrap(),
    );
    for policy in ["proposed", "binary", "even", "random"] {
        let series = read_table(&plots.join(format!("vs_b_{policy}.csv"))).unwrap();
        assert_eq!(series.header, ["x", "y"]);
        let expected: Vec<Vec<String>> = table
            .rows
            .iter()
            .filter(|r| r[pc] == policy)
            .map(|r| vec![r[vc].clone(), r[mc].clone()])
            .collect();
        assert_eq!(series.rows, expected);
        let ys: Vec<f64> = series.rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] <= w[1]), "{policy}: {ys:?}");
    }
    let o = mecsim(&["plotdata", "--trace", sweep.to_str().unwrap(), "--figure", "vs-K"]);
    assert_eq!(o.status.code(), Some(1));
}
