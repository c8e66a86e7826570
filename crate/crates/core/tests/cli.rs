use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fpinfo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpinfo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn ou(n: usize, var: f64, extra: &str) -> String {
    format!(
        r#"seed = 9
[potential]
family = "quadratic"
alpha = 1.0
[grid]
lo = [-8.0]
hi = [8.0]
n = [{n}]
[initial]
kind = "gaussian"
mean = [0.0]
var = {var}
[time]
t_end = 0.6
save_times = [0.3, 0.325, 0.35, 0.375, 0.4, 0.425, 0.45, 0.475, 0.5, 0.525, 0.55, 0.575, 0.6]
{extra}"#
    )
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let o = fpinfo(args, dir);
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

#[test]
fn flow_on_stationary_start_writes_manifest_and_fields_near_steady_state() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", &ou(257, 1.0, ""));
    run_ok(&["flow", "--config", "c.toml", "--out", "o"], tmp.path());
    let manifest = std::fs::read_to_string(tmp.path().join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("scheme="));
    let listed: Vec<&str> = manifest.lines().filter(|l| l.starts_with("field_")).collect();
    assert_eq!(listed.len(), 14);
    let last = fpinfo::field::csv::read_density_csv(&tmp.path().join("o/field_013.csv")).unwrap();
    let first = fpinfo::field::csv::read_density_csv(&tmp.path().join("o/field_000.csv")).unwrap();
    let gap = last
        .values()
        .iter()
        .zip(first.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-4, "{gap}");
    assert!(!tmp.path().join("o/.field_013.csv.tmp").exists());
}

#[test]
fn malformed_config_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let body = ou(257, 1.0, "").replace("family = \"quadratic\"", "family = \"cubic\"");
    write_config(tmp.path(), "bad.toml", &body);
    let o = fpinfo(&["info", "--config", "bad.toml", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("potential.family"), "{}", stderr(&o));
    assert!(!tmp.path().join("o/report.csv").exists());

    write_config(tmp.path(), "typo.toml", &ou(257, 1.0, "[time2]\nx = 1\n"));
    let o = fpinfo(&["flow", "--config", "typo.toml"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("time2"), "{}", stderr(&o));

    let o = fpinfo(&["flow", "--config", "missing.toml"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn solver_failure_exits_3() {
    let tmp = TempDir::new().unwrap();
    let body = r#"[potential]
family = "quadratic"
alpha = 20.0
[grid]
lo = [50.0]
hi = [60.0]
n = [257]
[initial]
kind = "gaussian"
mean = [55.0]
var = 1.0
[time]
t_end = 0.1
save_count = 2
"#;
    write_config(tmp.path(), "far.toml", body);
    let o = fpinfo(&["info", "--config", "far.toml", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("normalizer"));
    assert!(!tmp.path().join("o/report.csv").exists());
}

#[test]
fn under_resolved_suite_exits_4() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "coarse.toml", &ou(33, 1.0, ""));
    let o = fpinfo(&["verify", "--config", "coarse.toml", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("under-resolved"), "{}", stderr(&o));
}

#[test]
fn info_reports_verdicts_for_both_initial_laws() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "narrow.toml", &ou(513, 1.0, ""));
    run_ok(&["info", "--config", "narrow.toml", "--out", "a"], tmp.path());
    let v = std::fs::read_to_string(tmp.path().join("a/verdicts.txt")).unwrap();
    assert!(v.lines().any(|l| l == "convexity=true"), "{v}");
    assert!(v.lines().any(|l| l == "precondition_holds=true"), "{v}");
    let report = std::fs::read_to_string(tmp.path().join("a/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,H_rel,J_rel,K_rel,G_rel,I,Phi,Psi,dI_analytic,d2I_analytic,gamma_margin"
    );
    assert_eq!(lines.count(), 13);

    let wide = ou(513, 4.0, "").replace("[-8.0]", "[-12.0]").replace("[8.0]", "[12.0]");
    write_config(tmp.path(), "wide.toml", &wide);
    run_ok(&["info", "--config", "wide.toml", "--out", "b"], tmp.path());
    let v = std::fs::read_to_string(tmp.path().join("b/verdicts.txt")).unwrap();
    let margin: f64 = v
        .lines()
        .find_map(|l| l.strip_prefix("precondition_margin="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((margin + 0.25).abs() < 0.01, "{margin}");
    assert!(v.lines().any(|l| l == "precondition_holds=false"));
}

#[test]
fn report_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", &ou(513, 1.0, ""));
    run_ok(&["info", "--config", "c.toml", "--out", "a", "--seed", "4"], tmp.path());
    run_ok(
        &[
            "--threads",
            "1",
            "info",
            "--config",
            "c.toml",
            "--out",
            "b",
            "--seed",
            "4",
        ],
        tmp.path(),
    );
    run_ok(
        &[
            "info",
            "--threads",
            "3",
            "--config",
            "c.toml",
            "--out",
            "c",
            "--seed",
            "4",
        ],
        tmp.path(),
    );
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("report.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
}

#[test]
fn verify_passes_on_a_resolved_benchmark() {
    let tmp = TempDir::new().unwrap();
    let body = ou(513, 1.0, "[solver]\npaths = 20000\n");
    write_config(tmp.path(), "c.toml", &body);
    let o = run_ok(&["verify", "--config", "c.toml", "--out", "o"], tmp.path());
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(text.lines().count(), 7, "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
    assert_eq!(std::fs::read_to_string(tmp.path().join("o/verify.txt")).unwrap(), text);
}

#[test]
fn fk_probes_are_seeded() {
    let tmp = TempDir::new().unwrap();
    let body = ou(
        257,
        1.0,
        "[solver]\nmethod = \"fk\"\npaths = 2000\nprobes = [0.0, 1.0]\n",
    );
    write_config(tmp.path(), "c.toml", &body);
    run_ok(&["flow", "--config", "c.toml", "--out", "a"], tmp.path());
    run_ok(&["flow", "--config", "c.toml", "--out", "b"], tmp.path());
    run_ok(&["flow", "--config", "c.toml", "--out", "c", "--seed", "1"], tmp.path());
    let read = |d: &str| std::fs::read_to_string(tmp.path().join(d).join("probes.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert!(read("a").starts_with("x,t,estimate,stderr,paths\n"));
    assert_eq!(read("a").lines().count(), 3);
    assert!(!tmp.path().join("a/manifest.txt").exists());
}

#[test]
fn kernel_dump_has_unit_mass_columns() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.toml", &ou(65, 1.0, ""));
    run_ok(
        &["kernel", "--config", "c.toml", "--out", "o", "--time", "0.3"],
        tmp.path(),
    );
    let text = std::fs::read_to_string(tmp.path().join("o/kernel.csv")).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    let t: f64 = meta
        .strip_prefix("# kernel t=")
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(t, 0.3);
    assert!(lines.next().unwrap().starts_with("# grid dim=1"));
    assert_eq!(lines.next().unwrap(), "x0,x,p");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 65 * 65);
    let h = 16.0 / 64.0;
    for col in rows.chunks(65) {
        let mass: f64 = col
            .iter()
            .enumerate()
            .map(|(i, r)| if i == 0 || i == 64 { 0.5 * h * r[2] } else { h * r[2] })
            .sum();
        assert!((mass - 1.0).abs() < 1e-10, "{mass}");
    }
}
