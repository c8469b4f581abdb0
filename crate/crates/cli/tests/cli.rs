use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn netsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const SMALL_LP: &str = r#"
[run]
algorithm = "ALGO"
seed = 2
max_rounds = 50000
consensus_tol = 1e-3
feasibility_tol = 1e-3
objective_reference = "oracle"
objective_rel_tol = 1e-2

[graph]
kind = "KIND"
nodes = 4

[schedule]
zeta0 = ZETA
exponent = 1.0

[primal_dual]
rho = 10.0

[problem]
kind = "halfspace"
objective = [1.0, 0.5]
samples_per_node = 10

[output]
dir = "out"
"#;

fn write_config(dir: &Path, algo: &str, kind: &str, zeta: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = SMALL_LP.replace("ALGO", algo).replace("KIND", kind).replace("ZETA", zeta);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn complexity_reproduces_known_counts() {
    let o = netsp(&["complexity", "--eps", "0.002", "--delta", "1e-4", "--n", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "8868");
    assert_eq!(row[5], "true");
    assert!(row[4].parse::<u64>().unwrap() <= 8868);

    let o = netsp(&["complexity", "--eps", "0.001", "--delta", "1e-6", "--n", "32"]);
    assert_eq!(stdout(&o).lines().nth(1).unwrap().split(',').nth(3), Some("70898"));
}

#[test]
fn complexity_rejects_bad_flags() {
    assert_eq!(netsp(&["complexity", "--eps", "2", "--delta", "0.1", "--n", "1"]).status.code(), Some(2));
    assert_eq!(netsp(&["complexity", "--eps", "2"]).status.code(), Some(2));
    assert_eq!(netsp(&["complexity", "--eps", "x", "--delta", "0.1", "--n", "1"]).status.code(), Some(2));
    assert_eq!(netsp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn solve_writes_trace_and_states() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "primal_dual", "ring", "100.0");
    let o = netsp(&["solve", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged"));
    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let parsed = netsp::engine::Trace::parse_csv(&trace).unwrap();
    let last = parsed.last().unwrap();
    assert!(last.consensus_spread < 1e-3 && last.feasibility < 1e-3);
    let states = std::fs::read_to_string(dir.path().join("out/states.csv")).unwrap();
    assert_eq!(states.lines().count(), 5);
    assert!(states.starts_with("node,theta_0,theta_1"));

    let r = netsp(&["report", dir.path().join("out/trace.csv").to_str().unwrap()]);
    assert!(r.status.success());
    assert!(stdout(&r).starts_with("first_round,"));
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let cfg = write_config(dir.path(), "primal_dual", "directed_cycle", "1.0");
    let o = netsp(&["solve", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("undirected"));

    let cfg = write_config(dir.path(), "rand_proj", "directed_chain", "1.0");
    assert_eq!(netsp(&["solve", cfg.to_str().unwrap()]).status.code(), Some(5));

    let text = std::fs::read_to_string(write_config(dir.path(), "rand_proj", "directed_cycle", "1.0")).unwrap();
    std::fs::write(&cfg, text.replace("max_rounds = 50000", "max_rounds = 3")).unwrap();
    assert_eq!(netsp(&["solve", cfg.to_str().unwrap()]).status.code(), Some(3));

    std::fs::write(&cfg, "[run]\nalgorithm = 1\n").unwrap();
    assert_eq!(netsp(&["solve", cfg.to_str().unwrap()]).status.code(), Some(4));

    let missing = dir.path().join("nope.toml");
    assert_eq!(netsp(&["solve", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(netsp(&["report", missing.to_str().unwrap()]).status.code(), Some(2));

    std::fs::write(dir.path().join("bad.csv"), "not a trace\n").unwrap();
    assert_eq!(netsp(&["report", dir.path().join("bad.csv").to_str().unwrap()]).status.code(), Some(4));

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"garbage").unwrap();
    let cfg = write_config(dir.path(), "rand_proj", "directed_cycle", "1.0");
    let o = netsp(&["solve", cfg.to_str().unwrap(), "--resume", garbage.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn checkpoint_and_resume_continue_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rand_proj", "directed_cycle", "1.0");
    let text = std::fs::read_to_string(&cfg).unwrap();
    let plain = text.replace("objective_reference = \"oracle\"\nobjective_rel_tol = 1e-2\n", "");
    std::fs::write(&cfg, plain.replace("max_rounds = 50000", "max_rounds = 400")).unwrap();
    let whole = dir.path().join("whole");
    assert!(netsp(&["solve", cfg.to_str().unwrap(), "--out", whole.to_str().unwrap()]).status.code().is_some());

    std::fs::write(&cfg, plain.replace("max_rounds = 50000", "max_rounds = 150")).unwrap();
    let ckpt = dir.path().join("state.ckpt");
    let head = dir.path().join("head");
    netsp(&["solve", cfg.to_str().unwrap(), "--out", head.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()]);
    std::fs::write(&cfg, plain.replace("max_rounds = 50000", "max_rounds = 400")).unwrap();
    let tail = dir.path().join("tail");
    netsp(&["solve", cfg.to_str().unwrap(), "--out", tail.to_str().unwrap(), "--resume", ckpt.to_str().unwrap()]);

    let read = |d: &Path| netsp::engine::Trace::parse_csv(&std::fs::read_to_string(d.join("trace.csv")).unwrap()).unwrap();
    let mut joined = read(&head);
    joined.records.extend(read(&tail).records);
    assert!(joined.same_values(&read(&whole)));
    assert_eq!(
        std::fs::read_to_string(tail.join("states.csv")).unwrap(),
        std::fs::read_to_string(whole.join("states.csv")).unwrap()
    );
}

#[test]
fn ident_table() {
    let o = netsp(&["ident", "--rho", "0,1", "--nodes", "4", "--samples-per-node", "5", "--rounds", "2000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "rho,r_ls,r_sc_pd,r_sc_rp");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,0,"));

    assert_eq!(netsp(&["ident", "--rho", "-1"]).status.code(), Some(2));
    assert_eq!(netsp(&["ident", "--nodes", "0", "--rho", "1"]).status.code(), Some(2));
}

#[test]
fn ident_default_grid_has_sixteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let o = netsp(&[
        "ident", "--rho-step", "0.2", "--nodes", "2", "--samples-per-node", "2", "--rounds", "20", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 17);
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let spec = netsp::config::ExperimentSpec::load(&path).unwrap();
            spec.config.resolve(path.parent().unwrap()).unwrap();
        }
    }
}
