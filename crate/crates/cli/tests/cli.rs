use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedgnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedgnn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const DATA: &str = "graphs = 200\nmin_nodes = 10\nmax_nodes = 18\ndata_seed = 3\n";
const SCENARIO: &str = "clients = 3\nmalicious = 2\nattack = \"dba\"\nrounds = 4\nhidden = 8\nlr = 0.05\n";

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedgnn(&["run", "--config", "nowhere.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedgnn(&["run", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "clientz = 3\n").unwrap();
    let o = fedgnn(&["run", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[config]"), "{}", stderr(&o));
}

#[test]
fn gen_data_then_run_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("data.toml"), DATA).unwrap();
    let o = fedgnn(&["gen-data", "--config", "data.toml", "--out", "tu"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(p.join("tu/TRIANGLES_SYN_A.txt").exists());

    fs::write(p.join("run.toml"), format!("data_dir = \"tu\"\n{SCENARIO}")).unwrap();
    let o = fedgnn(&["--threads", "1", "run", "--config", "run.toml", "--out", "r"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(p.join("r/rounds.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[0].starts_with("t,"));
    for name in ["rounds.jsonl", "manifest.toml", "final.params"] {
        assert!(p.join("r").join(name).exists(), "{name}");
    }

    let o = fedgnn(&["report", "r/rounds.csv"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("4 rounds") && text.contains("clean_acc"), "{text}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("run.toml"), format!("{DATA}{SCENARIO}")).unwrap();
    for out in ["a", "b"] {
        let o = fedgnn(&["run", "--config", "run.toml", "--seed", "7", "--out", out], p);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["rounds.csv", "rounds.jsonl", "final.params"] {
        let a = fs::read(p.join("a").join(name)).unwrap();
        let b = fs::read(p.join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn sweep_writes_rows_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = format!("{DATA}{SCENARIO}sweep_param = \"gamma\"\nsweep_values = [0.2, 0.3]\nreplications = 2\n");
    fs::write(p.join("sweep.toml"), cfg.replace("rounds = 4", "rounds = 2")).unwrap();
    let o = fedgnn(&["sweep", "--config", "sweep.toml", "--out", "s"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(p.join("s/sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4);
    let agg = fs::read_to_string(p.join("s/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 2);
    let o = fedgnn(&["report", "s/sweep.csv", "--out", "summary.txt"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(p.join("summary.txt")).unwrap().contains("gamma"));
}
