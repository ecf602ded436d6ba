use std::fs;
use std::path::Path;
use std::process::Command;

use stochnet_cli::{emit_plotdata, run_scenario, RunOptions, Scenario};

fn scenario(extra: &str) -> Scenario {
    let text = format!(
        r#"
horizon = 1
V_values = [100.0]
seeds = [3]
instance = {{ builtin = "two_queue", channel_dist = [0.25, 0.25, 0.25, 0.25] }}
{extra}
[[controllers]]
kind = "Backpressure"
"#
    );
    Scenario::parse(&text).unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn column(path: &Path, name: &str) -> usize {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().position(|h| h == name).unwrap()
}

#[test]
fn single_slot_run_writes_one_finite_row() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&scenario(""), &RunOptions { out_dir: dir.path().into(), ..Default::default() }).unwrap();
    assert_eq!(report.failures(), 0);
    let summary = dir.path().join("summary.csv");
    let rows = rows(&summary);
    assert_eq!(rows.len(), 1);
    for name in ["avg_cost", "avg_backlog", "zeta"] {
        let x: f64 = rows[0][column(&summary, name)].parse().unwrap();
        assert!(x.is_finite(), "{name}");
    }
    assert_eq!(&rows[0][column(&summary, "T_l")], "");
    assert!(dir.path().join("manifest.toml").exists());
}

#[test]
fn oracle_row_satisfies_strong_duality() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&scenario(""), &RunOptions { out_dir: dir.path().into(), ..Default::default() }).unwrap();
    let path = dir.path().join("oracle.csv");
    let row = &rows(&path)[0];
    let get = |n: &str| row[column(&path, n)].parse::<f64>().unwrap();
    assert!((get("g_star") / get("V") - get("f_av_star")).abs() <= 1e-6);
}

#[test]
fn repeated_sweeps_are_byte_identical() {
    let sc = Scenario::parse(
        r#"
horizon = 3000
V_values = [20.0, 50.0]
seeds = [1, 2]
trace = true
trace_sample_period = 10
assumption_check = true
perturbation_count = 5
instance = { builtin = "two_queue", channel_dist = [0.1, 0.4, 0.4, 0.1] }
[[controllers]]
kind = "OLAC"
[[controllers]]
kind = "OLAC2"
"#,
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&sc, &RunOptions { out_dir: a.path().into(), workers: Some(2), trace: false }).unwrap();
    run_scenario(&sc, &RunOptions { out_dir: b.path().into(), workers: Some(1), trace: false }).unwrap();
    for name in ["summary.csv", "oracle.csv", "assumption_check.csv", "traces/trace_OLAC2_V50_seed2.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let text = fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 8);
}

#[test]
fn plotdata_has_mean_and_stderr() {
    let sc = Scenario::parse(
        r#"
horizon = 500
V_values = [10.0, 40.0]
seeds = [0, 1, 2]
trace = true
instance = { builtin = "two_queue", channel_dist = [0.25, 0.25, 0.25, 0.25] }
[[controllers]]
kind = "Backpressure"
[zeta]
policy = "absolute"
value = 5.0
"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&sc, &RunOptions { out_dir: dir.path().into(), ..Default::default() }).unwrap();
    let pd = emit_plotdata(&dir.path().join("summary.csv"), None).unwrap();
    assert_eq!(pd.traces, 6);
    let power = dir.path().join("fig_power_vs_V.csv");
    let rows = rows(&power);
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][column(&power, "power_n")], "3");
    assert!(rows[0][column(&power, "power_stderr")].parse::<f64>().unwrap() >= 0.0);
    assert!(dir.path().join("fig_convergence_vs_V.csv").exists());
    let trace_rows = rows_len(&dir.path().join("fig_queue_trace.csv"));
    assert_eq!(trace_rows, 6 * 5);
}

fn rows_len(path: &Path) -> usize {
    rows(path).len()
}

#[test]
fn plotdata_rejects_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    fs::write(&path, "controller,V,seed,avg_cost,mean_delay,T_zeta_first,T_zeta_sustained\n").unwrap();
    assert!(emit_plotdata(&path, None).is_err());
}

#[test]
fn binary_verbs() {
    let exe = env!("CARGO_BIN_EXE_stochnet");
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.toml");
    fs::write(
        &sc,
        r#"
horizon = 50
V_values = [10.0]
seeds = [0]
instance = { file = "inst.toml" }
[[controllers]]
kind = "OLAC2"
"#,
    )
    .unwrap();
    let inst = stochnet_core::two_queue_example([0.25; 4]).unwrap();
    fs::write(dir.path().join("inst.toml"), inst.to_document().unwrap()).unwrap();

    let out = dir.path().join("out");
    let status = Command::new(exe).arg("run").arg(&sc).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    assert!(out.join("summary.csv").exists());

    let env_out = dir.path().join("env_out");
    let status = Command::new(exe).arg("run").arg(&sc).env("STOCHNET_OUT", &env_out).status().unwrap();
    assert!(status.success());
    assert!(env_out.join("summary.csv").exists());

    let o = Command::new(exe).args(["oracle"]).arg(dir.path().join("inst.toml")).args(["--V", "100"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("V,f_av_star,g_star,gamma_star_1,gamma_star_2,eta_0,rho_hat,D_p\n"));

    let status = Command::new(exe).arg("plotdata").arg(out.join("summary.csv")).status().unwrap();
    assert!(status.success());
    assert!(out.join("fig_delay_vs_V.csv").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "horizon = 0\n").unwrap();
    assert!(!Command::new(exe).arg("run").arg(&bad).status().unwrap().success());
}
