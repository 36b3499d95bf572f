use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use covsim::engine::SimConfig;
use covsim::scenario::{run_scenario_with, Assets, ScenarioConfig};
use covsim::population::Phase;
use tempfile::TempDir;

fn covsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covsim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn covsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small toy city shared by the tests in this file.
fn toy_dir() -> &'static Path {
    static DIR: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = dir.path().join("toy");
        let o = covsim(&["toy", "--out", s(&out), "--agents-per-zone", "20", "--iterations", "3", "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (dir, out)
    })
    .1
}

#[test]
fn toy_writes_assets() {
    let d = toy_dir();
    for f in [
        "nodes.csv",
        "links.csv",
        "population.json",
        "matrix.json",
        "return_schedule.csv",
        "params/precovid_fit.json",
        "params/covid_fit.json",
        "gtfs/regular/stop_times.txt",
        "gtfs/covid/stop_times.txt",
    ] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn net_exit_codes() {
    let d = toy_dir();
    let ok = covsim(&[
        "net",
        "--nodes",
        s(&d.join("nodes.csv")),
        "--links",
        s(&d.join("links.csv")),
        "--gtfs",
        s(&d.join("gtfs/regular")),
    ]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("16 nodes, 48 links"));

    // a stop far from every node is a finding, not a parse error
    let tmp = TempDir::new().unwrap();
    let feed = tmp.path().join("feed");
    fs::create_dir(&feed).unwrap();
    for f in fs::read_dir(d.join("gtfs/regular")).unwrap() {
        let f = f.unwrap();
        fs::copy(f.path(), feed.join(f.file_name())).unwrap();
    }
    let stops = feed.join("stops.txt");
    let mut text = fs::read_to_string(&stops).unwrap();
    text.push_str("far,90000,90000,\n");
    fs::write(&stops, text).unwrap();
    let findings = covsim(&[
        "net",
        "--nodes",
        s(&d.join("nodes.csv")),
        "--links",
        s(&d.join("links.csv")),
        "--gtfs",
        s(&feed),
    ]);
    assert_eq!(code(&findings), 2, "{}", stderr(&findings));
    assert!(String::from_utf8_lossy(&findings.stdout).contains("unsnappable stop far"));

    let links = tmp.path().join("links.csv");
    let mut text = fs::read_to_string(d.join("links.csv")).unwrap();
    text.push_str("broken,n00\n");
    let line = text.lines().count();
    fs::write(&links, text).unwrap();
    let bad = covsim(&["net", "--nodes", s(&d.join("nodes.csv")), "--links", s(&links), "--gtfs", s(&feed)]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains(&format!("links.csv:{line}")), "{}", stderr(&bad));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&covsim(&["frobnicate"])), 1);
    assert_eq!(code(&covsim(&["run", "--matrix"])), 1);
    assert_eq!(code(&covsim(&["--help"])), 0);
}

fn run_matrix(out: &Path, threads: &str) -> Output {
    let d = toy_dir();
    covsim(&[
        "--threads",
        threads,
        "run",
        "--matrix",
        s(&d.join("matrix.json")),
        "--assets",
        s(d),
        "--out",
        s(out),
        "--events",
    ])
}

#[test]
fn run_is_byte_identical_across_reruns_and_threads() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = run_matrix(&a, "1");
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    let ob = run_matrix(&b, "4");
    assert_eq!(code(&ob), 0, "{}", stderr(&ob));

    let csv = fs::read_to_string(a.join("modeshare.csv")).unwrap();
    assert!(csv.starts_with("scenario,mode,trips,share,ratio_vs_precovid,share_delta_pp\n"));
    assert_eq!(csv, fs::read_to_string(b.join("modeshare.csv")).unwrap());
    for name in ["precovid", "p4_s2"] {
        for f in [format!("events_{name}.jsonl"), format!("report_{name}.json"), format!("stats_{name}.csv")] {
            assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
        }
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report_p4_s2.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["capacity_factor"], 0.5);
    assert!(report["comparison"]["ratios"]["transit"].is_number());

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert!(manifest["inputs"].as_object().unwrap().len() >= 5);
}

#[test]
fn run_without_baseline_fails() {
    let d = toy_dir();
    let tmp = TempDir::new().unwrap();
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(d.join("matrix.json")).unwrap()).unwrap();
    m["scenarios"].as_array_mut().unwrap().retain(|s| s["phase"] != "precovid");
    let path = tmp.path().join("matrix.json");
    fs::write(&path, m.to_string()).unwrap();
    let o = covsim(&["run", "--matrix", s(&path), "--assets", s(d), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("precovid"), "{}", stderr(&o));
}

#[test]
fn calibrate_at_fixed_point_takes_no_steps() {
    let d = toy_dir();
    let tmp = TempDir::new().unwrap();
    let assets = Assets::load(d, 500.0).unwrap();
    let base = assets.params("covid_fit").unwrap();
    let sim = SimConfig {
        iterations: 2,
        ..SimConfig::default()
    };
    let report = run_scenario_with(&ScenarioConfig::new("c", Phase::Covid, 1.0), &assets, &sim, 0, base).unwrap();
    let targets: serde_json::Map<String, serde_json::Value> = report
        .shares
        .iter()
        .map(|(m, v)| (format!("{m}_share"), serde_json::json!(v)))
        .collect();
    let tpath = tmp.path().join("targets.json");
    fs::write(&tpath, serde_json::Value::Object(targets).to_string()).unwrap();
    let out = tmp.path().join("fit.json");
    let o = covsim(&[
        "calibrate",
        "--base",
        s(&d.join("params/covid_fit.json")),
        "--targets",
        s(&tpath),
        "--assets",
        s(d),
        "--out",
        s(&out),
        "--iterations",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(result["iterations"], 0);
    assert_eq!(result["converged"], true);
    assert!(out.is_file());

    fs::write(&tpath, r#"{"teleport_share": 0.5}"#).unwrap();
    let bad = covsim(&[
        "calibrate",
        "--base",
        s(&d.join("params/covid_fit.json")),
        "--targets",
        s(&tpath),
        "--assets",
        s(d),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&bad), 1);
}

const FRAME_A: &str = r#"{"camera_id":"c1","t":1585800000,"objects":[{"class":"person","bbox":[0,0,40,170]},{"class":"person","bbox":[300,0,40,170]},{"class":"car","bbox":[500,0,200,100]}]}"#;
const FRAME_B: &str = r#"{"camera_id":"c1","t":1585803600,"objects":[{"class":"person","bbox":[0,0,40,170]},{"class":"person","bbox":[100,0,40,170]}]}"#;

#[test]
fn sociability_command() {
    let tmp = TempDir::new().unwrap();
    let frames = tmp.path().join("frames.jsonl");
    fs::write(&frames, format!("{FRAME_A}\n\n{FRAME_B}\n")).unwrap();
    let (out, prof) = (tmp.path().join("r.json"), tmp.path().join("p.csv"));
    let o = covsim(&[
        "sociability",
        "--frames",
        s(&frames),
        "--out",
        s(&out),
        "--profile",
        s(&prof),
        "--tz",
        "-4",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["frames"], 2);
    assert_eq!(r["total_pairs"], 2);
    assert_eq!(r["total_violations"], 1);
    assert_eq!(r["safety_rate"], 0.5);

    // recount: mean density times frames sums back to the object totals
    let mut persons = 0.0;
    let mut frames_seen = 0;
    for line in fs::read_to_string(&prof).unwrap().lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "person" {
            let n: u64 = f[3].parse().unwrap();
            frames_seen += n;
            if !f[2].is_empty() {
                persons += f[2].parse::<f64>().unwrap() * n as f64;
            }
        }
    }
    assert_eq!(frames_seen, 2);
    assert!((persons - 4.0).abs() < 1e-9);

    fs::write(&frames, "").unwrap();
    assert_eq!(code(&covsim(&["sociability", "--frames", s(&frames), "--out", s(&out)])), 1);

    fs::write(&frames, format!("{FRAME_A}\n{{oops\n")).unwrap();
    let bad = covsim(&["sociability", "--frames", s(&frames), "--out", s(&out)]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("frames.jsonl:2"), "{}", stderr(&bad));
}
