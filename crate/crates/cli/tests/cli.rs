use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const Y_GRAPH: &str = r#"{"nodes":["A","B","C"],
  "edges":[{"from":"A","to":"B","w":1},{"from":"A","to":"C","w":1}],
  "goals":["B","C"],"start":"A"}"#;

fn dpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_y_graph_writes_a_certified_document() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "y.json", Y_GRAPH);
    let out = dpp(&["solve", s(&scen)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["value"].as_f64(), Some(0.5));
    assert_eq!(doc["gamma_type"]["B"].as_f64(), Some(0.5));
    let keys: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        [
            "value",
            "gamma_type",
            "attacker_policies",
            "defender_policy",
            "beliefs",
            "verification",
            "metrics",
            "restricted_histories"
        ]
    );
    assert!(text.contains("\"A>B\""));
}

#[test]
fn repeated_solves_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("g.json");
    let gen = dpp(&["gen-grid", "--rows", "4", "--cols", "4", "--goal", "0,0", "--goal", "3,3", "--goal", "0,3", "--start", "2,1", "-o", s(&grid)]);
    assert_eq!(code(&gen), 0);
    let a = dpp(&["solve", s(&grid)]);
    let b = dpp(&["solve", s(&grid), "--jobs", "1"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{\"nodes\": [");
    assert_eq!(code(&dpp(&["solve", s(&bad)])), 1);
    assert_eq!(code(&dpp(&["solve", s(&dir.path().join("missing.json"))])), 1);
    let dangling = write(&dir, "d.json", &Y_GRAPH.replace("\"start\":\"A\"", "\"start\":\"Z\""));
    assert_eq!(code(&dpp(&["solve", s(&dangling)])), 1);
    let dup = dpp(&["gen-grid", "--rows", "3", "--cols", "3", "--goal", "0,0", "--goal", "0,0", "--start", "1,1"]);
    assert_eq!(code(&dup), 1);
}

#[test]
fn exhausted_round_budget_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("g.json");
    dpp(&["gen-grid", "--rows", "5", "--cols", "5", "--goal", "0,0", "--goal", "0,4", "--goal", "4,2", "--start", "2,2", "-o", s(&grid)]);
    let out = dpp(&["solve", s(&grid), "--max-iter", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
}

#[test]
fn verify_accepts_the_solution_and_rejects_an_edited_prior() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "y.json", Y_GRAPH);
    let sol = dir.path().join("sol.json");
    assert_eq!(code(&dpp(&["solve", s(&scen), "-o", s(&sol)])), 0);
    assert_eq!(code(&dpp(&["verify", s(&scen), s(&sol)])), 0);

    let mut doc: Value = serde_json::from_str(&fs::read_to_string(&sol).unwrap()).unwrap();
    doc["gamma_type"]["B"] = 0.6.into();
    doc["gamma_type"]["C"] = 0.4.into();
    let edited = write(&dir, "edited.json", &doc.to_string());
    assert_eq!(code(&dpp(&["verify", s(&scen), s(&edited)])), 2);

    let garbage = write(&dir, "garbage.json", "[]");
    assert_eq!(code(&dpp(&["verify", s(&scen), s(&garbage)])), 1);
}

#[test]
fn gen_grid_round_trips_through_solve() {
    let dir = TempDir::new().unwrap();
    let out = dpp(&["gen-grid", "--rows", "2", "--cols", "3", "--goal", "0,2", "--start", "1,0", "--weight", "2"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let grid = write(&dir, "g.json", &text);
    let sol = dpp(&["solve", s(&grid)]);
    assert_eq!(code(&sol), 0);
    let doc: Value = serde_json::from_slice(&sol.stdout).unwrap();
    // three moves of weight 2 to the only goal
    assert_eq!(doc["value"].as_f64(), Some(6.0));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("g.json");
    dpp(&["gen-grid", "--rows", "3", "--cols", "3", "--goal", "0,0", "--goal", "2,2", "--start", "1,1", "-o", s(&grid)]);
    let out = dpp(&["sweep", s(&grid), "--jobs", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "start,value,voi,rod,support,iters,ms");
    assert_eq!(lines.len(), 10);

    let some = dpp(&["sweep", s(&grid), "--starts", "r1c1,r0c1"]);
    assert_eq!(code(&some), 0);
    assert_eq!(String::from_utf8(some.stdout).unwrap().lines().count(), 3);
    assert_eq!(code(&dpp(&["sweep", s(&grid), "--starts", "nowhere"])), 1);
}

#[test]
fn dump_lp_writes_both_models() {
    let dir = TempDir::new().unwrap();
    let scen = write(&dir, "y.json", Y_GRAPH);
    let prefix = dir.path().join("model");
    let out = dpp(&["solve", s(&scen), "--dump-lp", s(&prefix), "-o", s(&dir.path().join("sol.json"))]);
    assert_eq!(code(&out), 0);
    for suffix in ["model.primal.lp", "model.dual.lp"] {
        let text = fs::read_to_string(dir.path().join(suffix)).unwrap();
        assert!(!text.trim().is_empty());
    }
}
