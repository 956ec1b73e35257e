//! End-to-end tests driving the built binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rqe")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_fig1(dir: &Path) -> (String, String) {
    let edges = dir.join("fig1.edges");
    let props = dir.join("fig1.props");
    fs::write(&edges, "1\t100\t10\n3\t101\t30\n10\t102\t30\n30\t103\t50\n").unwrap();
    fs::write(
        &props,
        "100\tlabel\towns\n101\tlabel\towns\n102\tlabel\ttransaction\n\
         103\tlabel\ttransaction\n50\tIBAN\tIE12 BOFI 9000 0112 3456 78\n",
    )
    .unwrap();
    (edges.display().to_string(), props.display().to_string())
}

fn write_query(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const QUERY2: &str = r#"
O(s, t) :- E(s, e, t), P(e, "label", "owns").
T(s, t) :- E(s, e, t), P(e, "label", "transaction").
Ans(x, z) :- O(x, y), T+(y, z).
"#;

#[test]
fn run_query2_on_fig1() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, props) = write_fig1(dir.path());
    let query = write_query(dir.path(), "q2.rq", QUERY2);
    let out = rqe(&["run", "--edges", &edges, "--props", &props, "--query", &query]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("1\t30"));
    assert!(text.contains("1\t50"));
    assert!(text.contains("3\t50"));
    assert!(text.contains("stat.result_count=3"));
    assert!(text.contains("stat.leaf_count="));

    let out = rqe(&[
        "run", "--edges", &edges, "--props", &props, "--query", &query, "--count",
    ]);
    assert!(stdout(&out).contains("count: 3"));
}

#[test]
fn explain_is_deterministic_and_mode_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, props) = write_fig1(dir.path());
    let query = write_query(dir.path(), "q2.rq", QUERY2);
    let opt = rqe(&["explain", "--edges", &edges, "--props", &props, "--query", &query]);
    let opt2 = rqe(&["explain", "--edges", &edges, "--props", &props, "--query", &query]);
    assert!(opt.status.success());
    assert_eq!(stdout(&opt), stdout(&opt2), "explain output must be byte-identical");

    let off = rqe(&[
        "explain", "--edges", &edges, "--props", &props, "--query", &query, "--rules",
        "seed=off",
    ]);
    let off_text = stdout(&off);
    assert!(off_text.contains("digraph plan"));
    // With seeding off the only fixpoint is the unseeded closure; the plan
    // chosen with all rules enabled differs.
    assert_eq!(off_text.matches("cluster_fixpoint").count(), 1);
    assert_ne!(stdout(&opt), off_text);
}

#[test]
fn exhaustive_zero_timeout_flags_all_plans() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, props) = write_fig1(dir.path());
    let query = write_query(dir.path(), "q2.rq", QUERY2);
    let out = rqe(&[
        "exhaustive", "--edges", &edges, "--props", &props, "--query", &query,
        "--timeout-ms", "0", "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("ratio.PC=n/a"), "no ratios from timed-out classes:\n{text}");
    assert!(text.contains("note: "));
}

#[test]
fn explain_pcc2_shows_two_fixpoints_and_stacking_buffer() {
    let dir = tempfile::tempdir().unwrap();
    // Tiny-prefix instance where interior seeding is estimated cheaper.
    let mut edges = String::new();
    let mut props = String::new();
    let mut e = 1000u64;
    let mut push = |edges: &mut String, props: &mut String, s: u64, t: u64, l: &str| {
        edges.push_str(&format!("{s}\t{e}\t{t}\n"));
        props.push_str(&format!("{e}\tlabel\t{l}\n"));
        e += 1;
    };
    for i in 0..10u64 {
        push(&mut edges, &mut props, i, i + 1, "r");
        push(&mut edges, &mut props, i, i + 1, "s");
    }
    for j in 1..=8u64 {
        for i in 0..60u64 {
            push(&mut edges, &mut props, j * 100_000 + i, j * 100_000 + i + 1, "s");
        }
    }
    let ef = dir.path().join("pcc2.edges");
    let pf = dir.path().join("pcc2.props");
    fs::write(&ef, edges).unwrap();
    fs::write(&pf, props).unwrap();
    let query = write_query(
        dir.path(),
        "pcc2.rq",
        "R(s, t) :- E(s, e, t), P(e, \"label\", \"r\").\n\
         S(s, t) :- E(s, e, t), P(e, \"label\", \"s\").\n\
         Ans(x, y) :- R+(x, y), S+(x, y).",
    );
    let out = rqe(&[
        "explain",
        "--edges",
        &ef.display().to_string(),
        "--props",
        &pf.display().to_string(),
        "--query",
        &query,
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(
        text.matches("cluster_fixpoint").count(),
        2,
        "two seeded fixpoint groups:\n{text}"
    );
    // Buffers: seeding relation + one stacking buffer + two fixpoints.
    assert_eq!(text.matches("Write(").count(), 4);
}

#[test]
fn exhaustive_reports_ratios() {
    let dir = tempfile::tempdir().unwrap();
    // The hub-free seeding-benefit instance.
    let mut edges = String::new();
    let mut props = String::new();
    let mut e = 10_000_000u64;
    for c in 0..20u64 {
        for i in 0..49u64 {
            edges.push_str(&format!("{}\t{e}\t{}\n", c * 1000 + i, c * 1000 + i + 1));
            props.push_str(&format!("{e}\tlabel\tt\n"));
            e += 1;
        }
    }
    for k in 0..5u64 {
        edges.push_str(&format!("{}\t{e}\t{}\n", 900_000 + k, k * 1000));
        props.push_str(&format!("{e}\tlabel\to\n"));
        e += 1;
    }
    let ef = dir.path().join("bench.edges");
    let pf = dir.path().join("bench.props");
    fs::write(&ef, edges).unwrap();
    fs::write(&pf, props).unwrap();
    let query = write_query(
        dir.path(),
        "bench.rq",
        "O(s, t) :- E(s, e, t), P(e, \"label\", \"o\").\n\
         T(s, t) :- E(s, e, t), P(e, \"label\", \"t\").\n\
         Ans(x, z) :- O(x, y), T+(y, z).",
    );
    let out = rqe(&[
        "exhaustive",
        "--edges",
        &ef.display().to_string(),
        "--props",
        &pf.display().to_string(),
        "--query",
        &query,
        "--jobs",
        "2",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("ratio.PC="));
    assert!(text.contains("ratio.AT="));
    assert!(!text.contains("ratio.PC=n/a"), "both plan classes exist:\n{text}");
    // Both result counts agree across plans.
    let counts: Vec<&str> = text
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("stat."))
        .map(|l| l.split(',').nth(5).unwrap())
        .collect();
    assert_eq!(counts.len(), 2);
    assert_eq!(counts[0], counts[1]);
}

#[test]
fn count_plans_star_matches_prediction() {
    let out = rqe(&[
        "count-plans", "--shape", "star", "--min-n", "2", "--max-n", "4", "--recursive",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    for line in ["star,2,true,7,7", "star,3,true,22,22", "star,4,true,69,69"] {
        assert!(text.contains(line), "missing `{line}` in:\n{text}");
    }
}

#[test]
fn count_plans_rows_deterministic_across_runs() {
    let strip_timing = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| l.rsplit_once(',').map(|(a, _)| a.to_string()).unwrap_or_default())
            .collect()
    };
    let a = strip_timing(stdout(&rqe(&[
        "count-plans", "--shape", "star", "--min-n", "2", "--max-n", "4", "--recursive",
    ])));
    let b = strip_timing(stdout(&rqe(&[
        "count-plans", "--shape", "star", "--min-n", "2", "--max-n", "4", "--recursive",
    ])));
    assert_eq!(a, b);
}

#[test]
fn count_plans_chain_grows_slower_than_star() {
    let star = stdout(&rqe(&[
        "count-plans", "--shape", "star", "--min-n", "4", "--max-n", "4",
    ]));
    let chain = stdout(&rqe(&[
        "count-plans", "--shape", "chain", "--min-n", "4", "--max-n", "4",
    ]));
    let leaf = |s: &str| -> u64 {
        s.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap()
    };
    assert!(leaf(&chain) < leaf(&star));
}

#[test]
fn templates_run_in_all_modes() {
    let dir = tempfile::tempdir().unwrap();
    let bindings = write_query(dir.path(), "bindings.txt", "l1 = l0\nl2 = l1\nl3 = l2\nc1 = 3\n");
    let out = rqe(&[
        "templates",
        "--gen-random",
        "90,3",
        "--seed",
        "5",
        "--bindings",
        &bindings,
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 21, "7 templates x 3 modes:\n{text}");
    // Result counts agree across the three modes of each template.
    for chunk in rows.chunks(3) {
        let count = |row: &str| row.split(',').nth(5).unwrap().to_string();
        assert_eq!(count(chunk[0]), count(chunk[1]));
        assert_eq!(count(chunk[1]), count(chunk[2]));
    }
}

#[test]
fn ingest_rdf_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rdf = write_query(dir.path(), "data.nt", "a\tknows\tb\nb\tknows\tc\na\tlikes\tc\n");
    let oe = dir.path().join("out.edges");
    let op = dir.path().join("out.props");
    let out = rqe(&[
        "ingest-rdf",
        "--rdf",
        &rdf,
        "--out-edges",
        &oe.display().to_string(),
        "--out-props",
        &op.display().to_string(),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&oe).unwrap().lines().count(), 3);
    assert_eq!(fs::read_to_string(&op).unwrap().lines().count(), 3);

    // The emitted files load back and answer a path query.
    let query = write_query(
        dir.path(),
        "q.rq",
        "K(s, t) :- E(s, e, t), P(e, \"label\", \"knows\").\nAns(x, y) :- K+(x, y).",
    );
    let run = rqe(&[
        "run",
        "--edges",
        &oe.display().to_string(),
        "--props",
        &op.display().to_string(),
        "--query",
        &query,
        "--count",
    ]);
    assert!(run.status.success());
    assert!(stdout(&run).contains("count: 3"), "a->b, b->c, a->c");
}

#[test]
fn missing_file_fails_naming_the_path() {
    let out = rqe(&[
        "run", "--edges", "/nonexistent/x.edges", "--props", "/nonexistent/x.props", "--query",
        "/nonexistent/q.rq",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/x.edges"), "stderr: {err}");
}

#[test]
fn rdf_graph_source_flag_works() {
    let dir = tempfile::tempdir().unwrap();
    let rdf = write_query(dir.path(), "d.nt", "x\tp\ty\ny\tp\tz\n");
    let query = write_query(
        dir.path(),
        "q.rq",
        "Pp(s, t) :- E(s, e, t), P(e, \"label\", \"p\").\nAns(a, b) :- Pp+(a, b).",
    );
    let out = rqe(&["run", "--rdf", &rdf, "--query", &query, "--count"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("count: 3"));
}
