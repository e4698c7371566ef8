//! Runs `kolmo-lab accept` twice with the shipped config, the second run
//! comparing its data artifacts with the first, and prints one line per
//! criterion.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

fn accept(config: &Path, out: &Path) -> (i32, String) {
    let res = Command::new(env!("CARGO_BIN_EXE_kolmo-lab"))
        .args(["accept", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("kolmo-lab runs");
    if !res.stderr.is_empty() {
        eprint!("{}", String::from_utf8_lossy(&res.stderr));
    }
    (res.status.code().unwrap_or(-1), String::from_utf8_lossy(&res.stdout).into_owned())
}

fn main() -> ExitCode {
    let shipped = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/accept.json");
    let tmp = tempfile::tempdir().expect("temporary directory");
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");

    let (code1, stdout1) = accept(&shipped, &first);
    println!("first run: exit {code1}");
    for line in stdout1.lines().filter(|l| l.starts_with("criterion")) {
        println!("  {line}");
    }

    let shipped_text = std::fs::read_to_string(&shipped).expect("shipped config");
    let mut cfg: serde_json::Value = serde_json::from_str(&shipped_text).expect("shipped config is JSON");
    cfg["compare_with"] = serde_json::json!(first);
    let cfg_path = tmp.path().join("accept_compare.json");
    std::fs::write(&cfg_path, cfg.to_string()).expect("config written");
    let (code2, stdout2) = accept(&cfg_path, &second);
    println!("second run (compared with the first): exit {code2}");

    let lines: Vec<&str> = stdout2.lines().filter(|l| l.starts_with("criterion")).collect();
    for line in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.contains(" PASS ")).count();
    if code1 == 0 && code2 == 0 && lines.len() == 12 && failed == 0 {
        println!("acceptance: 12/12 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of {} criteria pass (exit codes {code1}, {code2})", lines.len() - failed, lines.len());
        ExitCode::FAILURE
    }
}
