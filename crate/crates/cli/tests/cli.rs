use std::path::{Path, PathBuf};
use std::process::Command as Process;

use bnsearch::data::{load_dataset, save_dataset, LoadOptions};
use bnsearch::families::{bounded_subsets, RankedFamilyTable};
use bnsearch::model::{forward_sample, load_network, random_network, save_network};
use bnsearch::ordsearch::{network_for_ordering, Ordering};
use bnsearch::scoring::{family_score, ScoreConfig};
use bnsearch::adtree::ContingencyTable;
use bnsearch::ParentSet;
use bnsearch_cli::*;
use clap::Parser;
use tempfile::TempDir;

const DETERMINISTIC: &str = "\
var A 2
var B 2
cpt A 1 0
parents B A
cpt B 0 0 1
cpt B 1 1 0
";

const UNIFORM: &str = "\
var A 2
var B 2
cpt A 0.5 0.5
cpt B 0.5 0.5
";

fn parse(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("bnsearch").chain(args.iter().copied())).unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let mut out = Vec::new();
    run(parse(args), &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

fn run_err(args: &[&str]) -> bnsearch::Error {
    run(parse(args), &mut Vec::new()).unwrap_err()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a random network and `m` records sampled from it.
fn synthetic(dir: &TempDir, n: usize, m: usize, seed: u64) -> (PathBuf, PathBuf) {
    let cards: Vec<usize> = (0..n).map(|i| 2 + i % 2).collect();
    let net = random_network(&cards, 2, seed);
    let net_path = dir.path().join(format!("net{seed}.bn"));
    let data_path = dir.path().join(format!("data{seed}.tsv"));
    save_network(&net_path, &net).unwrap();
    save_dataset(&data_path, &forward_sample(&net, m, seed).unwrap()).unwrap();
    (net_path, data_path)
}

fn summary_fields(out: &str) -> Vec<String> {
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), LearnSummary::HEADER);
    lines.next().unwrap().split('\t').map(str::to_owned).collect()
}

/// Drops the wall-clock columns of a summary row.
fn untimed(fields: &[String]) -> Vec<String> {
    fields
        .iter()
        .enumerate()
        .filter(|(i, _)| !(3..=5).contains(i))
        .map(|(_, f)| f.clone())
        .collect()
}

#[test]
fn sample_deterministic_network_repeats_one_row() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("det.bn");
    std::fs::write(&net, DETERMINISTIC).unwrap();
    let out = dir.path().join("d.tsv");
    run_ok(&["sample", s(&net), "-m", "50", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| *r == "0\t1"));
}

#[test]
fn sample_zero_records_fails() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("u.bn");
    std::fs::write(&net, UNIFORM).unwrap();
    let err = run_err(&["sample", s(&net), "-m", "0", "--out", s(&dir.path().join("x.tsv"))]);
    assert_eq!(err.kind(), "no_records");
}

#[test]
fn sample_bytes_repeat_under_seed() {
    let dir = TempDir::new().unwrap();
    let (net, _) = synthetic(&dir, 6, 10, 1);
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    let c = dir.path().join("c.tsv");
    run_ok(&["sample", s(&net), "-m", "200", "--seed", "9", "--out", s(&a)]);
    run_ok(&["sample", s(&net), "-m", "200", "--seed", "9", "--out", s(&b)]);
    run_ok(&["sample", s(&net), "-m", "200", "--seed", "10", "--out", s(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn generate_then_sample() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("alarm.bn");
    let out = run_ok(&["generate", "--alarm", "--seed", "3", "--out", s(&net)]);
    assert_eq!(out.lines().nth(1).unwrap(), "37\t46\t4");
    let data = dir.path().join("alarm.tsv");
    run_ok(&["sample", s(&net), "-m", "20", "--out", s(&data)]);
    assert_eq!(load_network(&net).unwrap().n_nodes(), 37);
}

/// Best score over every DAG on five nodes with at most `k` parents, via
/// all orderings against the unpruned table.
fn exhaustive_optimum(data_path: &Path, k: usize) -> f64 {
    let data = load_dataset(data_path, &LoadOptions::default()).unwrap();
    let n = data.n_vars();
    let cfg = ScoreConfig::default();
    let scored: Vec<Vec<(ParentSet, f64)>> = (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            bounded_subsets(&others, k)
                .into_iter()
                .map(|p| {
                    let t = ContingencyTable::from_records(&data, i, &p.to_vec());
                    (p, family_score(&t, &cfg))
                })
                .collect()
        })
        .collect();
    let table = RankedFamilyTable::unpruned(&scored).unwrap();
    let mut best = f64::NEG_INFINITY;
    permutations(n, &mut |perm| {
        let o = Ordering::from_perm(perm.to_vec()).unwrap();
        best = best.max(network_for_ordering(&o, &table).1);
    });
    best
}

fn permutations(n: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
        if prefix.len() == used.len() {
            f(prefix);
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                go(prefix, used, f);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    go(&mut Vec::new(), &mut vec![false; n], f);
}

#[test]
fn learn_order_finds_exhaustive_optimum() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synthetic(&dir, 5, 400, 2);
    let fields = summary_fields(&run_ok(&[
        "learn", s(&data), "--method", "order", "-c", "all", "-k", "2", "--tabu", "3", "--restarts", "20",
    ]));
    let score: f64 = fields[1].parse().unwrap();
    let optimum = exhaustive_optimum(&data, 2);
    assert!((score - optimum).abs() <= 1e-9 * optimum.abs(), "{score} vs {optimum}");
}

#[test]
fn learn_dag_with_zero_budget_scores_empty_network() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synthetic(&dir, 5, 300, 3);
    let fields = summary_fields(&run_ok(&["learn", s(&data), "--method", "dag", "--max-steps", "0"]));
    let loaded = load_dataset(&data, &LoadOptions::default()).unwrap();
    let empty = rescore(&loaded, &vec![ParentSet::empty(); 5], ScoreConfig::default()).unwrap();
    assert_eq!(fields[1].parse::<f64>().unwrap(), empty);
    assert_eq!(fields[6], "0");
}

#[test]
fn learn_is_reproducible_and_matches_rescoring() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synthetic(&dir, 8, 500, 4);
    for method in ["order", "dag"] {
        let net = dir.path().join(format!("{method}.bn"));
        let trace = dir.path().join(format!("{method}.trace.tsv"));
        let args = [
            "learn", s(&data), "--method", method, "--restarts", "3", "--tabu", "10", "--seed", "5", "--out", s(&net),
            "--trace", s(&trace),
        ];
        let a = summary_fields(&run_ok(&args));
        let b = summary_fields(&run_ok(&args));
        assert_eq!(untimed(&a), untimed(&b));

        let learned = load_network(&net).unwrap();
        let loaded = load_dataset(&data, &LoadOptions::default()).unwrap();
        let rescored = rescore(&loaded, learned.parents(), ScoreConfig::default()).unwrap();
        let score: f64 = a[1].parse().unwrap();
        assert!((score - rescored).abs() <= 1e-9 * score.abs(), "{method}: {score} vs {rescored}");

        let text = std::fs::read_to_string(&trace).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("# precompute_seconds"));
    }
}

#[test]
fn family_cache_is_reused_and_keyed() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synthetic(&dir, 6, 300, 6);
    let cache = dir.path().join("families.cache");
    let args = ["learn", s(&data), "-k", "2", "--family-cache", s(&cache)];
    let first = summary_fields(&run_ok(&args));
    assert!(cache.exists());
    let second = summary_fields(&run_ok(&args));
    assert_eq!(untimed(&first), untimed(&second));
    let err = run_err(&["learn", s(&data), "-k", "3", "--family-cache", s(&cache)]);
    assert_eq!(err.kind(), "cache_mismatch");
}

#[test]
fn eval_direct_modes() {
    let dir = TempDir::new().unwrap();
    let uniform = dir.path().join("u.bn");
    std::fs::write(&uniform, UNIFORM).unwrap();
    let det = dir.path().join("d.bn");
    std::fs::write(&det, DETERMINISTIC).unwrap();
    let data = dir.path().join("d.tsv");
    run_ok(&["sample", s(&det), "-m", "30", "--out", s(&data)]);

    let mut out = Vec::new();
    let ll = cmd_eval(&eval_args(&det, &data, None), &mut out).unwrap();
    assert_eq!(ll, 0.0);
    let ll = cmd_eval(&eval_args(&uniform, &data, None), &mut out).unwrap();
    assert!((ll + 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

fn eval_args(network: &Path, dataset: &Path, folds: Option<usize>) -> EvalArgs {
    match parse(&["eval", s(network), s(dataset)]).command {
        Command::Eval(mut a) => {
            a.folds = folds;
            a
        }
        _ => unreachable!(),
    }
}

#[test]
fn eval_folds_average_held_out_scores() {
    let dir = TempDir::new().unwrap();
    let (net, data) = synthetic(&dir, 6, 500, 7);
    let out = run_ok(&["eval", s(&net), s(&data), "--folds", "5"]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "5-fold");
    let cv: f64 = row[2].parse().unwrap();
    let direct: f64 = run_ok(&["eval", s(&net), s(&data)]).lines().nth(1).unwrap().split('\t').nth(2).unwrap().parse().unwrap();
    assert!(cv.is_finite() && cv < 0.0);
    assert!((cv - direct).abs() < 0.5);
}

#[test]
fn eval_rejects_schema_mismatch() {
    let dir = TempDir::new().unwrap();
    let (net, _) = synthetic(&dir, 4, 10, 8);
    let other = dir.path().join("other.tsv");
    std::fs::write(&other, "X\tY\n0\t1\n1\t0\n").unwrap();
    let err = run_err(&["eval", s(&net), s(&other)]);
    assert_eq!(err.kind(), "schema");
}

#[test]
fn bench_agrees_on_easy_instance() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synthetic(&dir, 6, 2000, 9);
    let prefix = dir.path().join("trace-");
    let args = ["bench", s(&data), "-c", "all", "-k", "2", "--restarts", "10", "--trace-prefix", s(&prefix)];
    let out = run_ok(&args);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(out.lines().next().unwrap(), BENCH_HEADER);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][1], rows[1][1]), ("order", "dag"));
    let order: f64 = rows[0][2].parse().unwrap();
    let dag: f64 = rows[1][2].parse().unwrap();
    assert!((order - dag).abs() <= 1e-12 * order.abs(), "{order} vs {dag}");

    for method in ["order", "dag"] {
        let trace = std::fs::read_to_string(dir.path().join(format!("trace-data9.{method}.tsv"))).unwrap();
        let best: Vec<f64> = trace
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(best.windows(2).all(|w| w[0] <= w[1]));
    }

    let again = run_ok(&args);
    let scores = |t: &str| t.lines().map(|l| l.split('\t').take(3).collect::<Vec<_>>().join("\t")).collect::<Vec<_>>();
    assert_eq!(scores(&out), scores(&again));
}

#[test]
fn binary_reports_machine_readable_errors() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.tsv");
    let output = Process::new(env!("CARGO_BIN_EXE_bnsearch"))
        .args(["learn", s(&missing)])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.starts_with("error\tio\t"), "{stderr}");

    let bad = Process::new(env!("CARGO_BIN_EXE_bnsearch"))
        .args(["learn", s(&missing), "--ess=-1"])
        .output()
        .unwrap();
    assert!(String::from_utf8(bad.stderr).unwrap().starts_with("error\tconfig\t"));
}

#[test]
fn binary_round_trip() {
    let dir = TempDir::new().unwrap();
    let (net, _) = synthetic(&dir, 5, 10, 11);
    let data = dir.path().join("d.tsv");
    let learned = dir.path().join("l.bn");
    let bin = env!("CARGO_BIN_EXE_bnsearch");
    let ok = |args: &[&str]| {
        let o = Process::new(bin).args(args).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(&["sample", s(&net), "-m", "300", "--out", s(&data)]);
    ok(&["learn", s(&data), "--schema", s(&net), "--out", s(&learned), "--restarts", "2"]);
    let out = ok(&["eval", s(&learned), s(&data)]);
    assert!(out.lines().nth(1).unwrap().starts_with("direct\t300\t-"));
}
