use std::path::Path;
use std::process::{Command, Output};

fn npg(args: &[&str], env_out: Option<&Path>, cwd: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_npg"));
    cmd.args(args).current_dir(cwd).env_remove("NPG_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("NPG_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn run_writes_traces_summary_and_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sq");
    let o = npg(&["run", "--model", "single-queue", "--T", "4,8", "--out", out.to_str().unwrap()], None, tmp.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("trace_T8.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "iteration,J,gap,min_V,max_V,poisson_residual,wall_ms");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    let j: Vec<&str> = rows[3].split(',').collect();
    assert_eq!(j.len(), 7);
    // 17 significant digits in scientific notation
    let mantissa = j[1].trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 17, "{}", j[1]);
    assert_eq!(j[6].parse::<f64>().unwrap(), 0.0, "wall time is off without --timings");

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    assert!(summary["ledger"]["entries"].as_array().unwrap().iter().any(|e| e["name"] == "c_star"));
    let rate = std::fs::read_to_string(out.join("rate.dat")).unwrap();
    assert_eq!(rate.lines().filter(|l| !l.starts_with('#')).count(), 2);

    let again = tmp.path().join("sq2");
    let o = npg(&["run", "--model", "single-queue", "--T", "4,8", "--out", again.to_str().unwrap()], None, tmp.path());
    assert!(o.status.success());
    for f in ["trace_T4.csv", "trace_T8.csv", "summary.json", "rate.dat"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("from-env");
    let o = npg(&["run", "--model", "single-queue", "--T", "2", "--truncation", "10"], Some(&env_dir), tmp.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(env_dir.join("summary.json").exists());

    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "model = \"single-queue\"\ntruncation = 10\nt_grid = [2]\nout = \"from-file\"\n").unwrap();
    let o = npg(&["run", "--config", cfg.to_str().unwrap()], Some(&env_dir), tmp.path());
    assert!(o.status.success());
    assert!(tmp.path().join("from-file").join("summary.json").exists());

    let flag = tmp.path().join("from-flag");
    let o = npg(&["run", "--config", cfg.to_str().unwrap(), "--out", flag.to_str().unwrap()], Some(&env_dir), tmp.path());
    assert!(o.status.success());
    assert!(flag.join("summary.json").exists());
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "model = \"single-queue\"\n\n[gsse]\narrivals = [[[0, 0.5], [1, 0.6]]]\nservices = []\n").unwrap();
    let o = npg(&["verify", "--config", cfg.to_str().unwrap()], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("bad.toml:1:"), "{}", text(&o.stderr));

    std::fs::write(&cfg, "model = \"nsystem\"\ntruncation = 0\n").unwrap();
    let o = npg(&["constants", "--config", cfg.to_str().unwrap()], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("bad.toml:2:"), "{}", text(&o.stderr));

    let o = npg(&["run", "--model", "single-queue", "--init", "greedy"], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = npg(&["run", "--bogus"], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_failure_exits_1_and_names_the_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("broken.toml");
    std::fs::write(
        &cfg,
        "model = \"single-queue\"\ntruncation = 30\nt_grid = [4, 16]\nregret_trials = 10\n[ledger]\nc_2 = 0.0\nc_3 = 0.0\nc_4 = 0.0\n",
    )
    .unwrap();
    let out = tmp.path().join("v");
    let o = npg(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("q-range-bound")), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    let rec = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "q-range-bound").unwrap();
    assert_eq!(rec["status"], "fail");
    assert!(rec["witness"]["state"].is_array());
}

#[test]
fn small_truncation_is_inconclusive_not_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ns");
    let args = ["--model", "nsystem", "--truncation", "20", "--T", "2,4", "--out", out.to_str().unwrap()];
    let o = npg(&[&["run"], &args[..]].concat(), None, tmp.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "inconclusive: truncation");

    let o = npg(&[&["verify", "--json"], &args[..]].concat(), None, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let adequacy = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "truncation-adequacy").unwrap();
    assert_eq!(adequacy["status"], "inconclusive");
    assert!(adequacy["detail"].as_str().unwrap().starts_with("inconclusive: truncation"));
}

#[test]
fn truncation_doubles_up_to_the_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let o = npg(
        &["constants", "--model", "nsystem", "--truncation", "15", "--truncation-cap", "60", "--json"],
        None,
        tmp.path(),
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let o = npg(
        &["verify", "--json", "--model", "nsystem", "--truncation", "15", "--truncation-cap", "60", "--T", "2", "--out", tmp.path().to_str().unwrap()],
        None,
        tmp.path(),
    );
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["adequacy"]["truncation"], 30);
    assert_eq!(report["adequacy"]["doublings"], 1);
}

#[test]
fn constants_table_lists_every_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let o = npg(&["constants", "--model", "single-queue", "--z", "-0.99"], None, tmp.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let t = text(&o.stdout);
    for name in npg_core::npg::ledger::NAMES {
        assert!(t.lines().any(|l| l.split_whitespace().next() == Some(name)), "missing {name}");
    }
    assert!(t.lines().any(|l| l.starts_with("z ") && l.contains("supplied")));
}
