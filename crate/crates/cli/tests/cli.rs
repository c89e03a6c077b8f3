use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kprio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kprio"))
        .args(args)
        .env_remove("KPRIO_THREADS")
        .output()
        .expect("binary runs")
}

fn gen_graph(dir: &Path, name: &str, n: usize, p: f64, seed: u64) -> String {
    let path = dir.join(name);
    let path = path.to_str().unwrap().to_string();
    let out = kprio(&["gen-graph", "--n", &n.to_string(), "--p", &p.to_string(), "--seed", &seed.to_string(), "--out", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_graph_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_graph(dir.path(), "a.txt", 1000, 0.1, 7);
    let b = gen_graph(dir.path(), "b.txt", 1000, 0.1, 7);
    let c = gen_graph(dir.path(), "c.txt", 1000, 0.1, 8);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn two_node_complete_graph() {
    let out = kprio(&["gen-graph", "--n", "2", "--p", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert_eq!(lines[0], "2 1");
    let fields: Vec<&str> = lines[1].split(' ').collect();
    assert_eq!(&fields[..2], ["0", "1"]);
    let w: f64 = fields[2].parse().unwrap();
    assert!(w > 0.0 && w <= 1.0);
}

#[test]
fn bad_arguments_exit_with_two() {
    for args in [
        &["gen-graph", "--n", "100", "--p", "1.5"][..],
        &["gen-graph", "--n", "1000", "--p", "0.001"],
        &["gen-graph", "--n", "10"],
        &["simulate", "--n", "50", "--p", "0.3", "--places", "0"],
        &["bound", "--n", "10", "--p", "0.5", "--distances", "0.3,0.1"],
    ] {
        let out = kprio(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_graph_file_fails() {
    let out = kprio(&["sssp", "--graph", "/nonexistent/graph.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sssp_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let graph = gen_graph(dir.path(), "g.txt", 300, 0.1, 1);
    let csv = dir.path().join("runs.csv");
    let out = kprio(&[
        "sssp", "--graph", &graph, "--threads", "1,2", "--k", "1,64", "--reps", "2", "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# kprio-csv v1");
    assert_eq!(lines[1], "backend,n,p,threads,k,seed,rep,time_ms,relaxations,dead_tasks,pushes");
    assert_eq!(lines.len(), 2 + 3 * 2 * 2 * 2);
    // one place relaxes every reachable node exactly once
    for row in lines[2..].iter().filter(|r| r.split(',').nth(3) == Some("1")) {
        assert_eq!(row.split(',').nth(8), Some("300"), "{row}");
    }
}

#[test]
fn threads_default_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let graph = gen_graph(dir.path(), "g.txt", 100, 0.2, 1);
    let out = Command::new(env!("CARGO_BIN_EXE_kprio"))
        .args(["sssp", "--graph", &graph, "--backend", "hybrid"])
        .env("KPRIO_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().nth(2).unwrap();
    assert_eq!(row.split(',').nth(3), Some("3"));
}

#[test]
fn one_place_simulation_settles_every_phase() {
    let out = kprio(&["simulate", "--n", "200", "--p", "0.1", "--places", "1", "--rho", "0", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let settled = header.iter().position(|&h| h == "settled").unwrap();
    let rows: Vec<String> = lines.map(str::to_string).collect();
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r.split(',').nth(settled) == Some("1")));
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "--n", "300", "--p", "0.2", "--places", "8", "--rho", "16", "--seed", "2"];
    assert_eq!(kprio(&args).stdout, kprio(&args).stdout);
}

#[test]
fn bound_reports_both_forms() {
    let out = kprio(&["bound", "--n", "1000", "--p", "0.5", "--distances", "0,0.001,0.002,0.004", "--h-star", "0.004"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "form,w_upper,max_l");
    let w = |line: &str| line.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(lines[2].starts_with("full,") && lines[3].starts_with("simple,"));
    assert!(w(lines[3]) >= w(lines[2]) && w(lines[2]) > 0.0);
}

#[test]
fn flat_candidates_bound_to_zero() {
    let out = kprio(&["bound", "--n", "1000", "--p", "0.5", "--distances", "0.2,0.2,0.2"]);
    let text = stdout(&out);
    assert_eq!(text.lines().nth(2), Some("full,0.0,0"));
}

#[test]
fn audits_pass_on_real_backends() {
    let out = kprio(&["audit", "--backend", "all", "--ops", "20000", "--threads", "4", "--k", "0,1,4,16"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("ws: skipped"));
    assert!(text.contains("central: pass") && text.contains("hybrid: pass"));
}

#[test]
fn mutant_audit_fails_with_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("cx.csv");
    let out = kprio(&[
        "audit", "--backend", "central", "--ops", "100000", "--threads", "4", "--k", "8", "--mutant-slack", "1",
        "--counterexample", trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = fs::read_to_string(trace).unwrap();
    assert!(text.starts_with("# kprio-csv v1\nts,op,place,task,key,k,result\n"), "{text}");
}

#[test]
fn stress_runs_all_backends() {
    let out = kprio(&["audit", "--backend", "all", "--stress", "--threads", "4", "--tasks", "50000", "--k", "16"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.contains("0 duplicates, 0 lost")).count(), 3);
    assert_eq!(text.lines().filter(|l| l.contains("frozen after")).count(), 2);
}
