use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const T1: &str = "R5(R1(R2,R3(R4)),R6)";

fn queries() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("queries")
}

fn q(name: &str) -> String {
    queries().join(name).display().to_string()
}

fn appendix() -> String {
    queries().join("appendix").display().to_string()
}

fn yplus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yplus")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = yplus(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn column(table: &str, plan: &str, col: &str) -> String {
    let mut lines = table.lines().skip_while(|l| !l.starts_with("plan "));
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    let i = header.iter().position(|h| *h == col).unwrap();
    let row = lines.find(|l| l.split_whitespace().next() == Some(plan)).unwrap();
    row.split_whitespace().nth(i).unwrap().to_string()
}

#[test]
fn classify_relation_dominated() {
    let out = stdout(&["classify", &q("q3.query")]);
    assert!(out.starts_with("relation-dominated, root R1\n"), "{out}");
    let out = stdout(&["classify", &q("q1.query")]);
    assert!(out.starts_with("acyclic, not free-connex"), "{out}");
    let out = stdout(&["classify", &q("triangle.query")]);
    assert!(out.starts_with("cyclic"), "{out}");
}

#[test]
fn compare_counts_semijoins() {
    let out = stdout(&["compare", &q("q1.query"), "--data", &appendix(), "--tree", T1]);
    assert_eq!(column(&out, "two-round", "semijoins"), "3");
    assert_eq!(column(&out, "baseline", "semijoins"), "10");
    assert_eq!(column(&out, "two-round", "steps"), "9");
    assert_eq!(column(&out, "baseline", "steps"), "16");
    for plan in ["two-round", "baseline", "optimized"] {
        assert_eq!(column(&out, plan, "agrees"), "yes");
    }
}

#[test]
fn run_appendix_instance() {
    let out = stdout(&["run", &q("q1.query"), "--data", &appendix()]);
    assert!(out.contains("(4, 1, ARGENTINA) -> 18\n"), "{out}");
    assert!(out.contains("(6, 1, BRAZIL) -> 40\n"), "{out}");
    assert!(out.contains("result_rows=2\n"));
    let tree = stdout(&["run", &q("q1.query"), "--data", &appendix(), "--tree", T1]);
    assert!(tree.contains("(6, 1, BRAZIL) -> 40\n"));
    let json = stdout(&["--json", "run", &q("q1.query"), "--data", &appendix()]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["result"]["rows"][1]["annotation"].as_f64(), Some(40.0));
}

#[test]
fn run_on_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    for (r, h) in [("R1", "x1,x2"), ("R2", "x2,x3")] {
        std::fs::write(dir.path().join(format!("{r}.csv")), format!("{h}\n")).unwrap();
    }
    let out = stdout(&["run", &q("q4.query"), "--data", dir.path().to_str().unwrap()]);
    assert!(out.contains("result_rows=0\n"), "{out}");
}

#[test]
fn plan_is_deterministic() {
    let a = stdout(&["plan", &q("q1.query"), "--tree", T1]);
    assert_eq!(a.lines().filter(|l| l.contains(" <- ")).count(), 9);
    assert_eq!(a, stdout(&["plan", &q("q1.query"), "--tree", T1]));
    let base = stdout(&["plan", &q("q1.query"), "--tree", T1, "--baseline"]);
    assert_eq!(base.lines().filter(|l| l.contains(" <- ")).count(), 16);
    let opt = stdout(&["plan", &q("q1.query"), "--data", &appendix(), "--ce-mode", "accurate"]);
    assert_eq!(opt, stdout(&["plan", &q("q1.query"), "--data", &appendix(), "--ce-mode", "accurate"]));
    assert!(opt.contains("# cost (accurate)"), "{opt}");
}

#[test]
fn emit_sql_statements() {
    let out = stdout(&["emit-sql", &q("q1.query"), "--tree", T1]);
    let stmts: Vec<&str> = out.split(";\n").filter(|s| !s.trim().is_empty()).collect();
    assert_eq!(stmts.len(), 9);
    assert_eq!(stmts.iter().filter(|s| s.starts_with("CREATE TEMPORARY VIEW")).count(), 8);
    let single = stdout(&["emit-sql", &q("q1.query"), "--single"]);
    assert!(single.contains("GROUP BY R1.x1, R1.x2, R6.x8"));
    let tables = stdout(&["emit-sql", &q("q4.query"), "--temp-tables"]);
    assert!(tables.starts_with("CREATE TEMP TABLE"), "{tables}");
}

#[test]
fn star_generator_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("star");
    let out = stdout(&["gen", "star", "--degree", "1000", "--out", out_dir.to_str().unwrap()]);
    assert!(out.contains("input_rows=2001 full_join=1000000"), "{out}");
    let cmp = stdout(&["compare", out_dir.join("star.query").to_str().unwrap()]);
    let peak: usize = column(&cmp, "two-round", "max_intermediate").parse().unwrap();
    assert!(peak <= 2001, "{cmp}");
}

#[test]
fn generators_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let path = |s: &str| dir.path().join(s).display().to_string();
    let q1 = q("q1.query");
    stdout(&["gen", "zipf", "--query", &q1, "--out", &path("a"), "--seed", "9", "--semiring", "bool"]);
    stdout(&["gen", "zipf", "--query", &q1, "--out", &path("b"), "--seed", "9", "--semiring", "bool"]);
    stdout(&["gen", "zipf", "--query", &q1, "--out", &path("c"), "--seed", "10", "--semiring", "bool"]);
    let read = |d: &str| std::fs::read_to_string(dir.path().join(d).join("R1.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let cmp = stdout(&["compare", &q1, "--data", &path("a"), "--semiring", "bool"]);
    assert!(!cmp.contains(" NO"), "{cmp}");
}

#[test]
fn k_copy_and_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let q5 = q("q5.query");
    let base = dir.path().join("base").display().to_string();
    let copied = dir.path().join("k").display().to_string();
    stdout(&["gen", "pkfk", "--query", &q5, "--out", &base, "--rows", "40", "--domain", "15"]);
    stdout(&["gen", "k-copy", "--query", &q5, "--out", &copied, "--rows", "40", "--domain", "15"]);
    let lines = |d: &str, r: &str| std::fs::read_to_string(Path::new(d).join(r)).unwrap().lines().count() - 1;
    assert_eq!(lines(&copied, "R4.csv"), 5 * lines(&base, "R4.csv"));
    let cmp = stdout(&["compare", &q5, "--data", &base]);
    assert_eq!(column(&cmp, "optimized", "agrees"), "yes");
    let plan = stdout(&["plan", &q5, "--data", &base]);
    assert!(plan.contains("rewrites: cycle_elimination"), "{plan}");
}

#[test]
fn stats_table() {
    let out = stdout(&["stats", &q("q1.query"), "--data", &appendix()]);
    assert!(out.lines().any(|l| l.starts_with("R1") && l.contains("x1=3")), "{out}");
    let json = stdout(&["--json", "stats", &q("q1.query"), "--data", &appendix()]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["tables"]["R6"]["cardinality"], 3);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.query");
    std::fs::write(&bad, "relation R(a)\noutput b\n").unwrap();
    let out = yplus(&["classify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at 2:8"), "{}", String::from_utf8_lossy(&out.stderr));
    let out = yplus(&["run", &q("q1.query"), "--data", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = yplus(&["plan", &q("triangle.query"), "--baseline"]);
    assert_eq!(out.status.code(), Some(2));
}
