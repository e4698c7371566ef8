use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kolmo_lab::commands::Sweep;
use serde_json::Value;

fn kolmo_lab(args: &[&str], out: &Path, config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kolmo-lab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("KOLMO_LAB_THREADS")
        .output()
        .expect("kolmo-lab runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_MEMBER: &str = r#"{ "battery": { "coarse": [17, 33, 17], "seed": 5 }, "member": 1, "nodes": [17, 33, 17] }"#;

#[test]
fn malformed_config_exits_one_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{ "samples": 10, "radii": [0.5, "two"] }"#);
    let res = kolmo_lab(&["geometry"], &tmp.path().join("out"), &cfg);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("radii[1]"), "{err}");
    assert!(!tmp.path().join("out").exists(), "no output before validation");
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{ "model": { "S0": 100, "sigma": 0.2, "rate": 0.05, "T": 1, "averaging": "geometric", "payoff": { "type": "call", "strike": 100 }, "vol": 1 } }"#);
    let res = kolmo_lab(&["price"], &tmp.path().join("out"), &cfg);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("model") && err.contains("vol"), "{err}");
}

#[test]
fn missing_config_and_bad_arguments_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let res = kolmo_lab(&["tail"], &tmp.path().join("out"), &tmp.path().join("absent.json"));
    assert_eq!(res.status.code(), Some(1));
    let res = Command::new(env!("CARGO_BIN_EXE_kolmo-lab")).arg("nonsense").output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let res = Command::new(env!("CARGO_BIN_EXE_kolmo-lab")).arg("--help").output().unwrap();
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn domain_error_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p.json",
        r#"{ "model": { "S0": -1, "sigma": 0.2, "rate": 0.05, "T": 1, "averaging": "geometric", "payoff": { "type": "call", "strike": 100 } } }"#,
    );
    let out = tmp.path().join("out");
    let res = kolmo_lab(&["price"], &out, &cfg);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(manifest(&out)["status"], "error");
}

#[test]
fn numerical_failure_exits_two_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    // a fixed step far beyond the stability limit
    let cfg = write_config(tmp.path(), "s.json", r#"{ "nodes": [21, 21, 11], "dt": 1.0 }"#);
    let out = tmp.path().join("out");
    let res = kolmo_lab(&["solve"], &out, &cfg);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    let diag: Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["command"], "solve");
    assert!(diag["message"].as_str().unwrap().len() > 10);
}

#[test]
fn sweep_parses_inclusive_ranges() {
    let s: Sweep = "omega=0.1:0.5:0.05".parse().unwrap();
    assert_eq!(s.values.len(), 9);
    assert_eq!(s.values[8], 0.5);
    assert!("omega=0.5:0.1:0.05".parse::<Sweep>().is_err());
    assert!("kappa=0.1:0.5:0.1".parse::<Sweep>().is_err());
    assert!("omega=0.1:0.5".parse::<Sweep>().is_err());
}

#[test]
fn harnack_sweep_emits_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "h.json", SMALL_MEMBER);
    let out = tmp.path().join("out");
    let res = kolmo_lab(&["harnack", "--sweep", "omega=0.1:0.5:0.05"], &out, &cfg);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let mut rdr = csv::Reader::from_path(out.join("harnack.csv")).unwrap();
    let omegas: Vec<f64> = rdr.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(omegas.len(), 9);
    for (k, w) in omegas.iter().enumerate() {
        assert!((w - (0.1 + 0.05 * k as f64)).abs() < 1e-12);
    }
}

#[test]
fn manifest_echoes_config_and_lists_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = kolmo_lab(&["geometry", "--seed", "9"], &out, &shipped("geometry.json"));
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().next(), Some("seed = 9"));
    let m = manifest(&out);
    assert_eq!(m["command"], "geometry");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["seeds"][0], 9);
    assert!(m["wall_time"]["seconds"].as_f64().unwrap() >= 0.0);
    assert!(m["versions"]["kolmo-core"].is_string());
    for a in m["artifacts"].as_array().unwrap() {
        let f = out.join(a["file"].as_str().unwrap());
        assert_eq!(fs::metadata(f).unwrap().len(), a["bytes"].as_u64().unwrap());
    }
    assert!(!out.join("manifest.json.tmp").exists());
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn identical_config_and_seed_give_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", r#"{ "paths": 4000, "dt": 0.005, "record_every": 20, "seed": 3 }"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(kolmo_lab(&["simulate"], &a, &cfg).status.code(), Some(0));
    let res = Command::new(env!("CARGO_BIN_EXE_kolmo-lab"))
        .args(["simulate", "--threads", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .env("KOLMO_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(data_files(&a), data_files(&b));
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["artifacts"], mb["artifacts"]);
}

#[test]
fn bad_thread_override_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_kolmo-lab"))
        .args(["tail", "--config"])
        .arg(shipped("tail.json"))
        .arg("--out")
        .arg(tmp.path())
        .env("KOLMO_LAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn poincare_and_tail_run_on_small_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.json", SMALL_MEMBER);
    let out = tmp.path().join("p");
    let res = kolmo_lab(&["poincare"], &out, &cfg);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("poincare.csv").exists());

    let out = tmp.path().join("t");
    assert_eq!(kolmo_lab(&["tail"], &out, &shipped("tail.json")).status.code(), Some(0));
    let t: Value = serde_json::from_str(&fs::read_to_string(out.join("tail.json")).unwrap()).unwrap();
    assert!((t["report"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn every_shipped_config_parses() {
    use kolmo_lab::config::*;
    fn ok<T: serde::de::DeserializeOwned>(name: &str) {
        load::<T>(&shipped(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    ok::<AcceptConfig>("accept.json");
    ok::<GeometryConfig>("geometry.json");
    ok::<GeometryConfig>("geometry_blocks.json");
    ok::<FundsolConfig>("fundsol.json");
    ok::<SimulateConfig>("simulate.json");
    ok::<SimulateConfig>("simulate_relativistic.json");
    ok::<SolveConfig>("solve.json");
    ok::<MemberConfig>("harnack.json");
    ok::<MemberConfig>("poincare.json");
    ok::<SobolevConfig>("sobolev.json");
    ok::<PriceConfig>("price_geometric.json");
    ok::<PriceConfig>("price_arithmetic.json");
    ok::<ObstacleConfig>("obstacle.json");
    ok::<TailConfig>("tail.json");
    ok::<NonlocalBoundConfig>("nonlocal_bound.json");
}
