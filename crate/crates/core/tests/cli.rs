use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use confcal::harness::SynthConfig;
use confcal::io::ModelFile;

fn confcal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confcal"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = confcal(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

fn synth(dir: &Path, config: &SynthConfig) {
    fs::write(dir.join("synth.json"), serde_json::to_string_pretty(config).unwrap()).unwrap();
    ok(dir, &["synth", "--config", "synth.json", "--out-dir", "data"]);
}

#[test]
fn minimal_csv_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "prediction,label,site\n0.2,1,a\n").unwrap();
    let out = ok(dir.path(), &["eval", "--input", "d.csv", "--fields", "site", "--ece-bins", "1"]);
    assert!(out.contains("logloss"), "{out}");
}

#[test]
fn bad_label_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "prediction,label,site\n0.2,2,a\n").unwrap();
    let out = confcal(dir.path(), &["eval", "--input", "d.csv", "--fields", "site"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("ERR data: "), "{stderr}");
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn jsonl_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.jsonl"), "{\"prediction\":0.5,\"label\":0,\"site\":\"b\"}\n").unwrap();
    let out = ok(dir.path(), &["eval", "--input", "d.jsonl", "--fields", "site", "--ece-bins", "1"]);
    assert!(out.contains("ece"), "{out}");
}

#[test]
fn usage_error_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = confcal(dir.path(), &["fit", "--bins", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("ERR config: "));
    assert!(confcal(dir.path(), &["--help"]).status.success());
}

#[test]
fn apply_with_missing_field_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fit.csv"), "prediction,label,site,app\n0.2,1,a,x\n0.3,0,b,y\n").unwrap();
    fs::write(dir.path().join("other.csv"), "prediction,label,site\n0.2,1,a\n").unwrap();
    ok(dir.path(), &["fit", "--input", "fit.csv", "--fields", "site,app", "--bins", "1", "--out", "m.json"]);
    let out = confcal(dir.path(), &["apply", "--model", "m.json", "--input", "other.csv", "--out", "o.csv"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("ERR "), "{stderr}");
    assert!(stderr.contains("app"), "{stderr}");
}

#[test]
fn calibrated_subsets_pass_through_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::from("prediction,label,site\n");
    for (pred, count, site) in [(0.25, 4, "a"), (0.5, 2, "b"), (0.125, 8, "c")] {
        for i in 0..count {
            rows.push_str(&format!("{pred},{},{site}\n", u8::from(i == 0)));
        }
    }
    fs::write(dir.path().join("d.csv"), rows).unwrap();
    ok(dir.path(), &["fit", "--input", "d.csv", "--fields", "site", "--bins", "2", "--out", "m.json"]);
    ok(dir.path(), &["apply", "--model", "m.json", "--input", "d.csv", "--out", "o.csv"]);
    let raw = column(&dir.path().join("o.csv"), "prediction");
    let cal = column(&dir.path().join("o.csv"), "calibrated");
    for (a, b) in raw.iter().zip(&cal) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn unbiased_generator_is_nearly_identity() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &SynthConfig::new(3, 20_000, &[("site", 8), ("app", 12)], 0.1));
    ok(
        dir.path(),
        &["fit", "--input", "data/validation.csv", "--fields", "site,app", "--bins", "1", "--out", "m.json"],
    );
    ok(dir.path(), &["apply", "--model", "m.json", "--input", "data/validation.csv", "--out", "o.csv"]);
    let raw = column(&dir.path().join("o.csv"), "prediction");
    let cal = column(&dir.path().join("o.csv"), "calibrated");
    let worst = raw.iter().zip(&cal).map(|(a, b)| (b / a - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 0.1, "largest relative change {worst}");
}

#[test]
fn calibrated_rce_beats_raw() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = SynthConfig::reference();
    config.n_samples = 40_000;
    synth(dir.path(), &config);
    let train = "data/validation.csv";
    ok(dir.path(), &["fit", "--input", train, "--fields", "site,app", "--bins", "10", "--out", "m.json"]);
    ok(dir.path(), &["weights", "--model", "m.json", "--input", train, "--step", "0.05"]);
    ok(dir.path(), &["apply", "--model", "m.json", "--input", "data/test.csv", "--out", "o.csv"]);
    let report = |col: &str, name: &str| {
        ok(
            dir.path(),
            &["eval", "--input", "o.csv", "--pred-col", col, "--fields", "site,app", "--report", name],
        );
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
        v
    };
    let raw = report("prediction", "raw.json");
    let cal = report("calibrated", "cal.json");
    let metric = |v: &serde_json::Value, k: &str| v["entries"][k].as_f64().unwrap_or_else(|| panic!("{k} in {v}"));
    assert!(metric(&cal, "field-rce:site") < metric(&raw, "field-rce:site"));
    assert!(metric(&cal, "multi-field-rce") < metric(&raw, "multi-field-rce"));

    let model = ModelFile::load(&dir.path().join("m.json")).unwrap();
    assert_eq!(model.kind(), "confcalib");
}

#[test]
fn baselines_and_pipelines_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = SynthConfig::reference();
    config.n_samples = 10_000;
    synth(dir.path(), &config);
    for method in ["naive", "platt", "histbin", "isotonic"] {
        let model = format!("{method}.json");
        let mut args = vec!["fit", "--input", "data/validation.csv", "--method", method, "--out", &model];
        if method == "histbin" {
            args.extend(["--bins", "20"]);
        }
        ok(dir.path(), &args);
        ok(dir.path(), &["apply", "--model", &model, "--input", "data/test.csv", "--out", "o.csv"]);
        assert_eq!(column(&dir.path().join("o.csv"), "calibrated").len(), 5_000);
        let text = fs::read_to_string(dir.path().join(&model)).unwrap();
        assert_eq!(ModelFile::from_json(&text).unwrap().to_json().unwrap(), text);
    }

    let base = ["--input", "data/validation.csv", "--method", "histbin", "--bins", "10", "--out", "h.json"];
    ok(dir.path(), &[&["fit"][..], &base].concat());
    let out = ok(
        dir.path(),
        &["fit", "--input", "data/validation.csv", "--fields", "site,app", "--bins", "5", "--base", "h.json", "--out", "p.json"],
    );
    assert!(out.contains("(pipeline)"), "{out}");
    ok(dir.path(), &["weights", "--model", "p.json", "--input", "data/validation.csv"]);
    let file = ModelFile::load(&dir.path().join("p.json")).unwrap();
    assert_eq!(file.kind(), "pipeline");
    let kinds: Vec<_> = file.pipeline().stages.iter().map(|s| s.kind()).collect();
    assert_eq!(kinds, ["histbin", "confcalib"]);
    ok(dir.path(), &["apply", "--model", "p.json", "--input", "data/test.csv", "--out", "po.csv"]);
    assert_eq!(column(&dir.path().join("po.csv"), "calibrated").len(), 5_000);
}

#[test]
fn unknown_model_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "prediction,label,site\n0.2,1,a\n").unwrap();
    fs::write(
        dir.path().join("m.json"),
        "{\"version\":\"confcal/9\",\"kind\":\"naive\",\"payload\":{\"k\":1.0}}",
    )
    .unwrap();
    let out = confcal(dir.path(), &["apply", "--model", "m.json", "--input", "d.csv", "--out", "o.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("ERR version: "));
}

#[test]
fn stream_writes_interval_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = SynthConfig::reference();
    config.n_samples = 6_000;
    config.seconds_per_sample = Some(10);
    synth(dir.path(), &config);
    let out = ok(
        dir.path(),
        &[
            "stream", "--log", "data/validation.csv", "--fields", "site,app", "--refit-interval", "3000",
            "--window", "9000", "--ece-bins", "10", "--out", "s.csv",
        ],
    );
    assert!(out.starts_with("10 intervals, 10 refits"), "{out}");
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(text.starts_with("interval_start,n,"), "{text}");
    assert_eq!(text.lines().count(), 11);
}
