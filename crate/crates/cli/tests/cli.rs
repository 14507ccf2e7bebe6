use std::path::Path;
use std::process::{Command, Output};

use restrictlab_cli::record::{from_json, Value};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restrictlab"))
        .args(args)
        .env_remove("RESTRICTLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn count_small_values() {
    for (n, expect) in [("1", "19"), ("2", "61")] {
        let o = bin(&["count", "--N", n, "--b", "2"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains(&format!(",value,value,{expect}\n")), "{}", stdout(&o));
    }
    let o = bin(&["count", "--N", "1", "--b", "1", "--format", "json"]);
    let doc = from_json(&stdout(&o)).unwrap();
    assert_eq!(doc.records[0].values["value"], Value::Int(3));
}

#[test]
fn usage_errors_exit_one() {
    let o = bin(&["count", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(bin(&["nonsense"]).status.code(), Some(1));
    assert_eq!(bin(&["count", "--method", "guess"]).status.code(), Some(1));
    assert_eq!(bin(&["solve", "--F", "cos"]).status.code(), Some(1));
    assert_eq!(bin(&["solve", "--M", "48"]).status.code(), Some(1));
    assert_eq!(bin(&["count", "--plot"]).status.code(), Some(1));
}

#[test]
fn failed_check_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&["gauge", "--F", "3", "--amp", "1", "--dt", "1e-3", "--T", "0.05", "--M", "32", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gkdv: gauged solution differs"));
    // records are still written
    assert!(std::fs::read_to_string(dir.path().join("gauge.csv")).unwrap().contains("discrepancy"));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for fmt in ["csv", "json"] {
        for d in [&a, &b] {
            let o = bin(&["weyl", "--N", "32,64", "--trials", "20", "--seed", "5", "--format", fmt, "--out", d.path().to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0));
        }
        let name = format!("weyl.{fmt}");
        assert_eq!(read(a.path(), &name), read(b.path(), &name));
    }
    assert!(!a.path().join("weyl_plot.py").exists());
}

#[test]
fn plot_script_references_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["farey", "--Q", "4,8", "--plot", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let script = String::from_utf8(read(dir.path(), "farey_plot.py")).unwrap();
    assert!(script.contains("\"farey.csv\""));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "format = json\n[count]\nN = 2\nb = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let doc = from_json(&stdout(&bin(&["--config", c, "count"]))).unwrap();
    assert_eq!(doc.records[0].params["N"], Value::Int(2));
    assert_eq!(doc.records[0].values["value"], Value::Int(5));
    let doc = from_json(&stdout(&bin(&["--config", c, "count", "--b", "2"]))).unwrap();
    assert_eq!(doc.records[0].values["value"], Value::Int(61));
    std::fs::write(&cfg, "[count]\nb = two\n").unwrap();
    assert_eq!(bin(&["--config", c, "count"]).status.code(), Some(1));
}

#[test]
fn solve_exports_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["traj.txt", "traj.bin"] {
        let path = dir.path().join(name);
        let o = bin(&["solve", "--M", "16", "--T", "0.002", "--export", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let states = if name.ends_with(".bin") {
            restrictlab::gkdv::read_binary(std::fs::File::open(&path).unwrap()).unwrap()
        } else {
            restrictlab::gkdv::read_text(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap()
        };
        assert_eq!(states.len(), 3);
        assert_eq!(states[2].time(), 0.002);
    }
}

#[test]
fn thread_env_fallback_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_restrictlab"))
        .args(["count", "--N", "1"])
        .env("RESTRICTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_restrictlab"))
        .args(["count", "--N", "1"])
        .env("RESTRICTLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
