use std::path::Path;
use std::process::{Command, Output};

fn lptraffic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lptraffic"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    let last = line.lines().last().unwrap();
    serde_json::from_str(last).unwrap()
}

#[test]
fn synth_train_evaluate_dump() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = lptraffic(&["synth-gen", "--out", "ds", "--nodes", "4", "--steps", "300", "--seed", "3"], d);
    assert!(out.status.success());
    for f in ["meta.json", "adjacency.csv", "speed.csv"] {
        assert!(d.join("ds").join(f).exists());
    }

    let trained = stdout_json(&lptraffic(
        &["train", "--dataset", "ds", "--variant", "todense", "--epsilon", "0.5", "--epochs", "1", "--hidden", "4", "--out", "run"],
        d,
    ));
    for f in ["report.json", "predictions.csv", "traffic.csv"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["epsilon"], 0.5);
    assert_eq!(report["mse"], trained["mse"]);
    assert!(report["traffic"]["bytes"].as_u64().unwrap() > 0);

    let eval = stdout_json(&lptraffic(&["evaluate", "--predictions", "run/predictions.csv"], d));
    let (a, b) = (eval["mse"].as_f64().unwrap(), report["mse"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-9);

    assert!(lptraffic(&["train", "--dataset", "ds", "--variant", "knn", "--out", "knn"], d).status.success());
    let dump = lptraffic(
        &["dump-predictions", "--predictions", "run/predictions.csv", "--predictions", "knn/predictions.csv", "--node", "s001", "--rows", "20"],
        d,
    );
    assert!(dump.status.success());
    let text = String::from_utf8(dump.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,actual,LabelProportionToDense-eps0.5,KNNCentralized");
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lptraffic(&["synth-gen", "--out", "ds", "--nodes", "3", "--steps", "200"], d).status.success());
    std::fs::write(
        d.join("exp.json"),
        r#"{"dataset":"ds","variant":"local","hidden":4,"epochs":3,"output":"a"}"#,
    )
    .unwrap();
    let out = stdout_json(&lptraffic(&["train", "--config", "exp.json", "--epochs", "1", "--out", "b"], d));
    assert_eq!(out["label"], "LabelProportionLocal");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("b/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["epochs"], 1);
    assert_eq!(report["traffic"]["bytes"], 0);
    assert!(!d.join("a").exists());
}

#[test]
fn failures_print_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let e = error_json(&lptraffic(&["train", "--dataset", "missing", "--variant", "knn"], d));
    assert_eq!(e["error"]["kind"], "io");
    let e = error_json(&lptraffic(&["train", "--dataset", "missing", "--variant", "bogus"], d));
    assert_eq!(e["error"]["kind"], "invalid_parameter");
    let e = error_json(&lptraffic(&["no-such-command"], d));
    assert_eq!(e["error"]["kind"], "usage");
    let e = error_json(&lptraffic(&["synth-gen", "--out", "x", "--coupling", "2"], d));
    assert_eq!(e["error"]["kind"], "invalid_parameter");
}

#[test]
fn convert_long_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/lust_small");
    let out = lptraffic(
        &[
            "convert",
            "--format",
            "long",
            "--input",
            fx.join("traffic_long.csv").to_str().unwrap(),
            "--adjacency",
            fx.join("adjacency.csv").to_str().unwrap(),
            "--out",
            "lust",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = std::fs::read_to_string(dir.path().join("lust/meta.json")).unwrap();
    assert!(meta.contains("\"density\""));
    let speed = std::fs::read_to_string(dir.path().join("lust/speed.csv")).unwrap();
    assert_eq!(speed.lines().count(), 73);
}
