use std::fs;
use std::path::Path;

use assert_cmd::Command;
use tempfile::TempDir;

fn kpiroot() -> Command {
    Command::cargo_bin("kpiroot").unwrap()
}

fn gen_small(dir: &Path, seed: u64) {
    kpiroot()
        .args(["gen", "--m", "15", "--n", "1440", "--period", "48", "--roots", "3", "--kinds", "spike"])
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(dir)
        .assert()
        .success();
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gen_writes_one_csv_per_series_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        kpiroot()
            .args(["gen", "--m", "50", "--n", "2880", "--period", "96", "--seed", "7", "--out"])
            .arg(dir)
            .assert()
            .success();
    }
    let csvs = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 51);
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn gen_without_period_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    kpiroot()
        .args(["gen", "--m", "50", "--n", "2880", "--seed", "7", "--out"])
        .arg(tmp.path())
        .assert()
        .code(2);
}

#[test]
fn gen_rejects_an_invalid_spec() {
    let tmp = TempDir::new().unwrap();
    kpiroot()
        .args(["gen", "--m", "4", "--n", "1440", "--period", "48", "--roots", "4", "--out"])
        .arg(tmp.path())
        .assert()
        .code(2);
}

#[test]
fn localize_then_eval() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    gen_small(&data, 3);
    let report = tmp.path().join("report.json");
    kpiroot().arg("localize").arg(&data).arg("--out").arg(&report).assert().success();

    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["scores"].as_array().unwrap().len(), 15);
    assert_eq!(r["config"]["period"], 48);
    let top: Vec<&str> = r["scores"].as_array().unwrap()[..10]
        .iter()
        .map(|s| s["kpi_id"].as_str().unwrap())
        .collect();
    for id in manifest(&data)["truth"]["root_causes"].as_array().unwrap() {
        assert!(top.contains(&id.as_str().unwrap()), "{id} not in {top:?}");
    }

    let metrics = kpiroot()
        .args(["eval", "--reports"])
        .arg(&report)
        .arg("--manifests")
        .arg(&data)
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let m: serde_json::Value = serde_json::from_slice(&metrics).unwrap();
    assert_eq!(m["incidents"], 1);
    assert_eq!(m["aggregate"]["hit_at_k"]["10"], 1.0);
}

#[test]
fn localize_is_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    gen_small(&data, 4);
    let run = |jobs: &str| {
        let out = kpiroot()
            .arg("localize")
            .arg(&data)
            .args(["--jobs", jobs])
            .assert()
            .success()
            .get_output()
            .stdout
            .clone();
        let mut v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        v["timings"] = serde_json::Value::Null;
        v["config"]["jobs"] = serde_json::Value::Null;
        v
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn perfect_report_scores_one() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    gen_small(&data, 5);
    let report = tmp.path().join("report.json");
    kpiroot().arg("localize").arg(&data).arg("--out").arg(&report).assert().success();
    // reorder the scores so the truth leads, and predict exactly the truth
    let truth: Vec<String> = manifest(&data)["truth"]["root_causes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let scores = r["scores"].as_array_mut().unwrap();
    scores.sort_by_key(|s| !truth.contains(&s["kpi_id"].as_str().unwrap().to_string()));
    r["predicted"] = serde_json::json!(truth);
    fs::write(&report, r.to_string()).unwrap();
    let out = kpiroot()
        .args(["eval", "--reports"])
        .arg(&report)
        .arg("--manifests")
        .arg(data.join("manifest.json"))
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let m: serde_json::Value = serde_json::from_slice(&out).unwrap();
    for key in ["f1", "precision", "recall"] {
        assert_eq!(m["aggregate"][key], 1.0);
    }
    for k in ["1", "3", "5", "10"] {
        assert_eq!(m["aggregate"]["hit_at_k"][k], 1.0);
        assert_eq!(m["aggregate"]["ndcg_at_k"][k], 1.0);
    }
}

#[test]
fn eval_with_mismatched_incidents_fails() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_small(&a, 1);
    gen_small(&b, 2);
    let report = tmp.path().join("report.json");
    kpiroot().arg("localize").arg(&a).arg("--out").arg(&report).assert().success();
    kpiroot()
        .args(["eval", "--reports"])
        .arg(&report)
        .arg("--manifests")
        .arg(&b)
        .assert()
        .code(1);
}

fn write_series(path: &Path, values: impl Iterator<Item = f64>) {
    let mut text = String::from("timestamp,value\n");
    for (i, v) in values.enumerate() {
        text.push_str(&format!("{},{}\n", 60 * i, v));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn constant_alarm_exits_with_no_anomaly() {
    let tmp = TempDir::new().unwrap();
    write_series(&tmp.path().join("alarm.csv"), (0..960).map(|_| 5.0));
    for c in 0..3 {
        write_series(&tmp.path().join(format!("vm-{c}.csv")), (0..960).map(|t| (t % 24) as f64 + c as f64));
    }
    let out = kpiroot()
        .arg("localize")
        .arg(tmp.path())
        .args(["--period", "24"])
        .assert()
        .code(3)
        .get_output()
        .stdout
        .clone();
    let r: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(r["detection"]["segments"].as_array().unwrap().len(), 0);
}

#[test]
fn plain_directory_needs_a_period() {
    let tmp = TempDir::new().unwrap();
    write_series(&tmp.path().join("alarm.csv"), (0..100).map(f64::from));
    write_series(&tmp.path().join("vm-0.csv"), (0..100).map(f64::from));
    kpiroot().arg("localize").arg(tmp.path()).assert().code(2);
}

#[test]
fn corrupt_csv_reports_the_line() {
    let tmp = TempDir::new().unwrap();
    write_series(&tmp.path().join("alarm.csv"), (0..100).map(f64::from));
    fs::write(tmp.path().join("vm-0.csv"), "timestamp,value\n0,1.0\n60,oops\n").unwrap();
    let out = kpiroot()
        .arg("localize")
        .arg(tmp.path())
        .args(["--period", "24"])
        .assert()
        .code(1)
        .get_output()
        .stderr
        .clone();
    let msg = String::from_utf8(out).unwrap();
    assert!(msg.contains(":3:"), "{msg}");
}

#[test]
fn bench_emits_one_row_per_stage_and_rep() {
    let out = kpiroot()
        .args(["bench", "--sizes", "1440", "--m", "10", "--reps", "2", "--period", "48"])
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,m,stage,seconds");
    assert_eq!(lines.len(), 1 + 2 * 7);
    assert_eq!(lines.iter().filter(|l| l.starts_with("1440,10,symbolic,")).count(), 2);
}
