use std::path::Path;
use std::process::{Command, Output};

fn anydim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anydim"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn basis_reports_dimension_and_checksum() {
    let o = anydim(&["basis", "--in", "V^2", "--out", "V^2", "--group", "Sn", "--level", "5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dimension"], 15);
    assert_eq!(v["degrees"]["presentation"], 4);
    assert_eq!(v["checksum"].as_str().unwrap().len(), 64);

    let o = anydim(&["basis", "--out", "V", "--group", "trivial", "--level", "3", "--mode", "compatible", "--bias"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dimension"], 1);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"task": "trace", "runs": 0}"#);
    assert_eq!(anydim(&["run", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(anydim(&["run", "--config", "/nonexistent.json"]).status.code(), Some(2));
    let o = anydim(&["basis", "--out", "V", "--group", "Zn", "--level", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_extend_eval_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let body = format!(
        r#"{{"task": "diag", "n0": 3, "dims": "2..4", "runs": 1, "train_samples": 30,
            "test_samples": 10, "epochs": 2, "output_dir": {:?}}}"#,
        out.to_str().unwrap()
    );
    let cfg = write_config(dir.path(), &body);
    let o = anydim(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("task,mode,run,dimension,metric,value,wall_ms"));
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(out.join("summary.json").exists());

    let model = out.join("diag_compatible_run0.json");
    let o = anydim(&["extend", "--model", model.to_str().unwrap(), "--to", "6"]);
    assert!(o.status.success());
    let extended = out.join("diag_compatible_run0_n6.json");
    assert!(extended.exists());

    let o = anydim(&["eval", "--model", extended.to_str().unwrap(), "--dims", "6,7", "--samples", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("6,mse_per_entry,"));

    let o = anydim(&["plot-data", "--results", out.join("results.csv").to_str().unwrap()]);
    assert!(o.status.success());
    let plot = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 3 * 3);
}
