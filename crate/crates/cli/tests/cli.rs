use std::path::Path;
use std::process::{Command, Output};

use qubolin::mkp;
use qubolin::solver::SampleSet;
use qubolin::QuboMatrix;
use serde_json::Value;

fn qubolin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qubolin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qubolin(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const EQ6: &str = r#"{"n":3,"terms":[[0,0,-3],[0,1,2],[0,2,7],[1,1,-5],[1,2,7],[2,2,-8]]}"#;

#[test]
fn worked_example_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("q.json"), EQ6).unwrap();
    ok(d, &["order", "--in", "q.json", "--out", "g.json"]);
    assert_eq!(
        read_json(&d.join("g.json")),
        serde_json::json!({"n": 3, "edges": [[0, 1], [0, 2]]})
    );
    ok(
        d,
        &["order", "--in", "q.json", "--out", "gs.json", "--sparse"],
    );
    assert_eq!(read_json(&d.join("gs.json")), read_json(&d.join("g.json")));

    ok(
        d,
        &[
            "linearize",
            "--in",
            "q.json",
            "--order",
            "g.json",
            "--out",
            "lin.json",
        ],
    );
    let lin = QuboMatrix::read_json(d.join("lin.json")).unwrap();
    let expected = QuboMatrix::from_dense(&[
        vec![6.0, 0.0, 0.0],
        vec![0.0, -5.0, 7.0],
        vec![0.0, 0.0, -8.0],
    ])
    .unwrap();
    assert_eq!(lin, expected);
    let report = read_json(&d.join("lin.report.json"));
    assert_eq!(report["removed_count"], 2);
}

#[test]
fn unverified_order_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("q.json"), EQ6).unwrap();
    // (1, 0) scores positive on this instance
    std::fs::write(d.join("bad.json"), r#"{"n":3,"edges":[[1,0]]}"#).unwrap();
    let out = qubolin(
        d,
        &[
            "linearize",
            "--in",
            "q.json",
            "--order",
            "bad.json",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("edge (1, 0)") && err.contains("score"),
        "{err}"
    );
    assert!(!d.join("x.json").exists());
    ok(
        d,
        &[
            "linearize",
            "--in",
            "q.json",
            "--order",
            "bad.json",
            "--out",
            "x.json",
            "--no-verify",
        ],
    );
}

#[test]
fn brute_force_size_limit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen", "hard", "--n", "26", "--seed", "3", "--out", "h26.json",
        ],
    );
    ok(
        d,
        &[
            "solve", "--in", "h26.json", "--method", "brute", "--out", "s26.json",
        ],
    );
    let set = SampleSet::read_json(d.join("s26.json")).unwrap();
    assert_eq!(set.samples.len(), 1);

    ok(
        d,
        &[
            "gen", "hard", "--n", "27", "--seed", "3", "--out", "h27.json",
        ],
    );
    let out = qubolin(
        d,
        &[
            "solve", "--in", "h27.json", "--method", "brute", "--out", "s27.json",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("limit is 26"));
}

#[test]
fn generators_write_instances_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen", "synth", "--n", "180", "--s", "10", "--p", "0.5", "--seed", "1", "--out",
            "s.json",
        ],
    );
    let q = QuboMatrix::read_json(d.join("s.json")).unwrap();
    assert_eq!(q.od_count(), 16110);
    let manifest = read_json(&d.join("s.manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([1]));
    assert_eq!(manifest["parameters"]["p"], 0.5);

    ok(
        d,
        &[
            "gen", "hard", "--n", "500", "--seed", "3", "--out", "h.json",
        ],
    );
    let h = QuboMatrix::read_json(d.join("h.json")).unwrap();
    assert!(h.terms().all(|(_, _, v)| v == 1.0 || v == -1.0));

    ok(
        d,
        &[
            "gen", "mkp", "--n", "100", "--m", "5", "--alpha", "0.25", "--seed", "7", "--out",
            "k.txt",
        ],
    );
    let insts = mkp::read_orlib(d.join("k.txt")).unwrap();
    assert_eq!(insts.len(), 1);
    assert_eq!((insts[0].n(), insts[0].m()), (100, 5));
    assert_eq!(insts[0], mkp::generate_mkp(100, 5, 0.25, 7).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        qubolin(d, &["gen", "synth", "--n", "5", "--out", "x.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        qubolin(
            d,
            &["gen", "synth", "--n", "1", "--p", "1", "--out", "x.json"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        qubolin(
            d,
            &["solve", "--in", "x.json", "--method", "tabu", "--out", "y"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        qubolin(d, &["exp", "od-reduction", "--seeds", "9-1", "--out", "y"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn encode_solve_decode_reports_feasible_solution() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen", "mkp", "--n", "10", "--m", "1", "--alpha", "0.5", "--seed", "4", "--out",
            "k.txt",
        ],
    );
    let inst = &mkp::read_orlib(d.join("k.txt")).unwrap()[0];
    let lambda = (inst.values().iter().sum::<u64>() + 1).to_string();
    ok(
        d,
        &[
            "encode",
            "--mkp",
            "k.txt",
            "--lambda",
            &lambda,
            "--linearize",
            "--out",
            "lin.json",
        ],
    );
    let q = QuboMatrix::read_json(d.join("lin.json")).unwrap();
    assert!(q.n() <= 26, "n = {}", q.n());
    ok(
        d,
        &[
            "solve", "--in", "lin.json", "--method", "brute", "--out", "s.json",
        ],
    );
    ok(
        d,
        &[
            "decode",
            "--mkp",
            "k.txt",
            "--layout",
            "lin.layout.json",
            "--samples",
            "s.json",
            "--out",
            "r.json",
        ],
    );
    let report = read_json(&d.join("r.json"));
    let optimum = mkp::dp_knapsack_oracle(inst).unwrap().score;
    assert_eq!(report["feasible"], 1);
    assert_eq!(report["best_feasible_objective"], optimum);
    assert_eq!(report["best_gap"], 0.0);

    ok(
        d,
        &[
            "solve",
            "--in",
            "lin.json",
            "--sweeps",
            "300",
            "--restarts",
            "6",
            "--out",
            "sa.json",
        ],
    );
    ok(
        d,
        &[
            "decode",
            "--mkp",
            "k.txt",
            "--layout",
            "lin.layout.json",
            "--samples",
            "sa.json",
            "--out",
            "r2.json",
        ],
    );
    assert_eq!(
        read_json(&d.join("r2.json"))["samples"]
            .as_array()
            .unwrap()
            .len(),
        6
    );
}

#[test]
fn plain_encoding_linearized_by_order_matches_direct_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen", "mkp", "--n", "30", "--m", "2", "--alpha", "0.5", "--seed", "2", "--out",
            "k.txt",
        ],
    );
    ok(
        d,
        &[
            "encode",
            "--mkp",
            "k.txt",
            "--lambda",
            "2",
            "--out",
            "plain.json",
        ],
    );
    ok(
        d,
        &[
            "encode",
            "--mkp",
            "k.txt",
            "--lambda",
            "2",
            "--linearize",
            "--out",
            "lin.json",
        ],
    );
    ok(
        d,
        &[
            "linearize",
            "--in",
            "plain.json",
            "--order",
            "plain.order.json",
            "--out",
            "via.json",
            "--no-verify",
        ],
    );
    assert_eq!(
        QuboMatrix::read_json(d.join("via.json")).unwrap(),
        QuboMatrix::read_json(d.join("lin.json")).unwrap()
    );
}

#[test]
fn solve_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["gen", "hard", "--n", "40", "--seed", "1", "--out", "h.json"],
    );
    for out in ["a.json", "b.json"] {
        ok(
            d,
            &[
                "solve",
                "--in",
                "h.json",
                "--sweeps",
                "50",
                "--restarts",
                "4",
                "--seed",
                "9",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );
}

#[test]
fn experiment_commands_write_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "exp",
            "od-reduction",
            "--n",
            "30",
            "--p",
            "0.1,2.0",
            "--seeds",
            "1-3",
            "--out",
            "od.csv",
        ],
    );
    let rows = std::fs::read_to_string(d.join("od.csv")).unwrap();
    assert_eq!(rows.lines().count(), 7);
    assert!(rows.starts_with("n,p,seed,edges,od_before,od_after,reduction_pct"));
    assert_eq!(
        std::fs::read_to_string(d.join("od.means.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let manifest = read_json(&d.join("od.manifest.json"));
    assert_eq!(manifest["cell_seconds"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2, 3]));

    // same grid, same rows
    ok(
        d,
        &[
            "exp",
            "od-reduction",
            "--n",
            "30",
            "--p",
            "0.1,2.0",
            "--seeds",
            "1-3",
            "--out",
            "od2.csv",
        ],
    );
    assert_eq!(rows, std::fs::read_to_string(d.join("od2.csv")).unwrap());

    ok(
        d,
        &[
            "exp",
            "timing",
            "--sizes",
            "10,20,30,40",
            "--seeds",
            "1",
            "--repeats",
            "1",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(
        std::fs::read_to_string(d.join("t.csv"))
            .unwrap()
            .lines()
            .count(),
        9
    );
    assert_eq!(
        std::fs::read_to_string(d.join("t.fits.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let short = qubolin(
        d,
        &["exp", "timing", "--sizes", "10,20,30", "--out", "t2.csv"],
    );
    assert_eq!(short.status.code(), Some(2));

    ok(
        d,
        &[
            "exp",
            "mkp-gap",
            "--n",
            "12",
            "--count",
            "2",
            "--sweeps",
            "50",
            "--samples",
            "5",
            "--out",
            "gap.csv",
        ],
    );
    let gap = std::fs::read_to_string(d.join("gap.csv")).unwrap();
    assert_eq!(gap.lines().count(), 5);
    assert!(gap.lines().nth(1).unwrap().contains(",baseline,"));
    assert!(gap.lines().nth(2).unwrap().contains(",linearized,"));
}

#[test]
fn gap_requires_reference_for_multi_constraint_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen",
            "mkp",
            "--n",
            "10",
            "--m",
            "3",
            "--alpha",
            "0.5",
            "--out",
            "multi.txt",
        ],
    );
    let out = qubolin(
        d,
        &["exp", "mkp-gap", "--mkp", "multi.txt", "--out", "g.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multi-0"));
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qubolin"))
        .current_dir(dir.path())
        .env("QUBOLIN_THREADS", "0")
        .args(["gen", "hard", "--n", "5", "--out", "h.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let capped = Command::new(env!("CARGO_BIN_EXE_qubolin"))
        .current_dir(dir.path())
        .env("QUBOLIN_THREADS", "2")
        .args([
            "exp",
            "od-reduction",
            "--n",
            "12",
            "--p",
            "1",
            "--seeds",
            "1-2",
            "--out",
            "o.csv",
        ])
        .output()
        .unwrap();
    assert!(capped.status.success());
}
