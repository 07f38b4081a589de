mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use serde_json::Value;

use common::{corpus, dead_url, fake_sidecar, fixtures, snapshot, write_eval_set, MockServer};


fn tikz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tikzbench"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(name: &str) -> String {
    fixtures().join("configs").join(name).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sketch(dir: &Path) -> PathBuf {
    let mut img = RgbImage::from_pixel(120, 80, Rgb([255, 255, 255]));
    for x in 10..110 {
        img.put_pixel(x, 40, Rgb([0, 0, 0]));
    }
    let p = dir.join("sketch.png");
    img.save(&p).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn run_accepts_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = tikz(&[
        "run", "--sketch", s(&sketch(dir.path())), "--instructions", "two boxes joined by an arrow",
        "--edits", "Label node (b) as C", "--config", &config("run_ok.toml"), "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tex = std::fs::read_to_string(out.join("final.tex")).unwrap();
    assert!(tex.contains("{C}"), "edited code is final: {tex}");
    let log = std::fs::read_to_string(out.join("run.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let rec: Value = serde_json::from_str(log.trim()).unwrap();
    assert_eq!(rec["final"]["status"], "accepted", "{rec}");
    assert!(rec["attempts"][0]["verdict"]["aligned"].as_bool().unwrap());
}

#[test]
fn run_exhausting_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = tikz(&[
        "run", "--sketch", s(&sketch(dir.path())), "--instructions", "a line",
        "--config", &config("run_fail.toml"), "--out", s(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let log = std::fs::read_to_string(out.join("run.jsonl")).unwrap();
    assert!(log.contains("budget exhausted"));
    assert_eq!(read_json(&out.join("run.jsonl"))["attempts"].as_array().unwrap().len(), 2);
}

#[test]
fn run_usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let sk = sketch(dir.path());
    let out = dir.path().join("out");
    // missing required flag
    assert_eq!(code(&tikz(&["run", "--sketch", s(&sk), "--instructions", "x", "--out", s(&out)])), 1);
    // unreadable sketch
    let o = tikz(&["run", "--sketch", "/nonexistent.png", "--instructions", "x", "--config", &config("run_ok.toml"), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    // malformed config
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pipeline]\nretry_budget = \"many\"\n").unwrap();
    let o = tikz(&["run", "--sketch", s(&sk), "--instructions", "x", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad.toml"));
    // empty instruction
    let o = tikz(&["run", "--sketch", s(&sk), "--instructions", "", "--config", &config("run_ok.toml"), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&tikz(&["frobnicate"])), 1);
}

#[test]
fn dataset_build_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = tikz(&["dataset", "build", "--src", s(&corpus()), "--out", s(out), "--split-seed", "3"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("5 sources, 10 records"));
    }
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_eq!(read_json(&a.join("stats.json"))["split_seed"], 3);
    for name in ["train_s2c.jsonl", "train_c2c.jsonl", "test_s2c.jsonl", "test_c2c.jsonl"] {
        assert!(a.join(name).is_file(), "{name}");
    }
}

#[test]
fn dataset_build_on_empty_dir_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir(&src).unwrap();
    let o = tikz(&["dataset", "build", "--src", s(&src), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no .tex files"));
}

#[test]
fn eval_pass_at_1_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_eval_set(&data);
    let report = dir.path().join("report.json");
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", &config("pass75.toml"), "--out", s(&report), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let rep = read_json(&report);
    assert_eq!(rep["aggregates"]["Pass@1"]["value"], 75.0);
    assert_eq!(rep["aggregates"]["Pass@1"]["n"], 4);
    assert_eq!(rep["rows"].as_array().unwrap().len(), 4);
    // no TeX in the test environment: image columns degrade instead of failing
    assert!(rep["absent"]["FID"].as_str().unwrap().contains("unavailable"));
    assert!(rep["aggregates"].get("chrF").is_some());
    assert!(dir.path().join("report.txt").is_file());

    let log = dir.path().join("report.runs.jsonl");
    let replay = dir.path().join("replay.json");
    let o = tikz(&["report", "--from", s(&log), "--out", s(&replay)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&replay).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("report.txt")).unwrap(),
        std::fs::read(dir.path().join("replay.txt")).unwrap()
    );
}

#[test]
fn eval_metric_selection() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_eval_set(&data);
    let report = dir.path().join("r.json");
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", &config("pass75.toml"), "--out", s(&report), "--metrics", "chrf"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = read_json(&report);
    assert_eq!(rep["columns"], serde_json::json!(["chrF"]));
    assert_eq!(rep["aggregates"].as_object().unwrap().len(), 1);

    let o = tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", &config("pass75.toml"), "--out", s(&report), "--metrics", "chrf,nonsense"]);
    assert_eq!(code(&o), 1);
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", &config("pass75.toml"), "--out", s(&report), "--jobs", "0"]);
    assert_eq!(code(&o), 1);
    // no C2C records in this set
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "c2c", "--config", &config("pass75.toml"), "--out", s(&report)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn eval_c2c_on_built_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&tikz(&["dataset", "build", "--src", s(&corpus()), "--out", s(&data)])), 0);
    let report = dir.path().join("c2c.json");
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "c2c", "--config", &config("run_ok.toml"), "--out", s(&report), "--metrics", "pass@1,bleu"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = read_json(&report);
    assert_eq!(rep["meta"]["task"], "c2c");
    assert!(rep["aggregates"]["BLEU"]["value"].as_f64().is_some());
}

fn fake_tex_config(dir: &Path, sidecar: &str) -> PathBuf {
    let tools = fixtures().join("tools");
    let base = std::fs::read_to_string(config("pass75.toml")).unwrap();
    let compiler = format!(
        "mode = \"tex\"\ncommand = \"{}\"\nargs = []\n\n[rasterizer]\ncommand = \"{}\"\nargs = [\"{{input}}\", \"{{output_stem}}\"]\n\n[sidecar]\nurl = \"{sidecar}\"\ntimeout_secs = 5.0\nretries = 0\n",
        tools.join("fake-tex").display(),
        tools.join("fake-raster").display(),
    );
    let text = base.replace("mode = \"fast\"\n", &compiler);
    let p = dir.join("fake.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn eval_image_metrics_through_sidecar() {
    let server = MockServer::start(fake_sidecar);
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_eval_set(&data);
    let cfg = fake_tex_config(dir.path(), &server.url);
    let report = dir.path().join("img.json");
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", s(&cfg), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = read_json(&report);
    assert!(rep["absent"].as_object().unwrap().is_empty(), "{}", rep["absent"]);
    for m in ["SSIM", "LPIPS", "FID", "KID", "C-FID", "IS"] {
        let v = rep["aggregates"][m]["value"].as_f64().unwrap_or_else(|| panic!("{m} missing"));
        assert!(v.is_finite(), "{m}");
    }
    assert_eq!(rep["meta"]["toolchain"]["checker"], "tex");
    assert_eq!(rep["meta"]["sidecar"]["model_versions"]["lpips"], "alex-0.1");

    // replay needs neither the toolchain nor the sidecar
    let replay = dir.path().join("again.json");
    assert_eq!(code(&tikz(&["report", "--from", s(&dir.path().join("img.runs.jsonl")), "--out", s(&replay)])), 0);
    let (a, b) = (std::fs::read_to_string(&report).unwrap(), std::fs::read_to_string(&replay).unwrap());
    assert_eq!(a, b);
}

#[test]
fn eval_with_sidecar_down_degrades_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_eval_set(&data);
    let cfg = fake_tex_config(dir.path(), &dead_url());
    let report = dir.path().join("down.json");
    let o = tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", s(&cfg), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = read_json(&report);
    for m in ["LPIPS", "FID", "KID", "C-FID", "IS"] {
        assert!(rep["absent"][m].as_str().unwrap().contains("sidecar"), "{m}: {}", rep["absent"]);
    }
    assert!(rep["aggregates"]["SSIM"]["value"].as_f64().is_some());
    assert_eq!(rep["aggregates"]["Pass@1"]["value"], 100.0, "the fake engine accepts everything");
}

#[test]
fn report_rejects_broken_logs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_eval_set(&data);
    let report = dir.path().join("report.json");
    assert_eq!(code(&tikz(&["eval", "--dataset", s(&data), "--task", "s2c", "--config", &config("pass75.toml"), "--out", s(&report), "--metrics", "pass@1"])), 0);
    let log = std::fs::read_to_string(dir.path().join("report.runs.jsonl")).unwrap();

    let truncated = dir.path().join("truncated.jsonl");
    std::fs::write(&truncated, &log[..log.len() - 40]).unwrap();
    let o = tikz(&["report", "--from", s(&truncated), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&tikz(&["report", "--from", s(&empty), "--out", s(&dir.path().join("y.json"))])), 1);

    let headless = dir.path().join("headless.jsonl");
    std::fs::write(&headless, log.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(code(&tikz(&["report", "--from", s(&headless), "--out", s(&dir.path().join("z.json"))])), 1);

    assert_eq!(code(&tikz(&["report", "--from", "/nonexistent.jsonl", "--out", s(&dir.path().join("w.json"))])), 1);
}
