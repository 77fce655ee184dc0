use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use msbtree::cli::{self, Cli};
use msbtree::measures::DiscreteMeasure;
use clap::Parser;
use tempfile::TempDir;

fn gmm_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/gmm5.json")
}

fn write_measure(dir: &Path, name: &str, support: Vec<Vec<f64>>, weights: Vec<f64>) -> PathBuf {
    let path = dir.join(name);
    DiscreteMeasure::new(support, weights).unwrap().write(&path).unwrap();
    path
}

fn paths(files: &[PathBuf]) -> Vec<String> {
    files.iter().map(|p| p.display().to_string()).collect()
}

fn parse(args: &[&str], rest: &[String]) -> Cli {
    let mut all: Vec<String> = std::iter::once("msbtree".to_string()).chain(args.iter().map(|s| s.to_string())).collect();
    all.extend_from_slice(rest);
    Cli::try_parse_from(all).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msbtree"))
}

fn three_measures(dir: &Path) -> Vec<PathBuf> {
    vec![
        write_measure(dir, "a.json", vec![vec![0.0], vec![1.0], vec![2.5]], vec![0.2, 0.5, 0.3]),
        write_measure(dir, "b.json", vec![vec![-1.0], vec![0.5], vec![1.5]], vec![0.4, 0.4, 0.2]),
        write_measure(dir, "c.json", vec![vec![0.3], vec![2.0], vec![3.0]], vec![0.3, 0.3, 0.4]),
    ]
}

#[test]
fn two_diracs_give_one_edge_at_distance_over_eta() {
    let dir = TempDir::new().unwrap();
    let a = write_measure(dir.path(), "a.json", vec![vec![0.0, 0.0]], vec![1.0]);
    let b = write_measure(dir.path(), "b.json", vec![vec![3.0, 4.0]], vec![1.0]);
    let out = dir.path().join("out");
    let cli = parse(&["solve", "--eta", "2", "--cost", "euclidean", "--out-dir", out.to_str().unwrap()], &paths(&[a, b]));
    let cli::Command::Solve(args) = &cli.command else { panic!() };
    let report = cli::cmd_solve(args).unwrap();
    assert_eq!(report.edges, vec![[1, 2]]);
    assert!((report.total_cost - 2.5).abs() < 1e-12);

    let tree: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["edges"], serde_json::json!([[1, 2]]));
    assert_eq!(tree["prufer"], serde_json::json!([]));
    assert_eq!(tree["cost"], serde_json::json!(2.5));
    assert!(fs::read_to_string(out.join("tree.dot")).unwrap().contains("1 -- 2"));
    assert_eq!(fs::read_to_string(out.join("weights.csv")).unwrap(), ",1,2\n1,,2.50000000000000\n2,2.50000000000000,\n");
}

#[test]
fn unreadable_file_exits_with_code_2_and_names_it() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    let a = write_measure(dir.path(), "a.json", vec![vec![0.0]], vec![1.0]);
    let out = bin()
        .args(["solve", "--eta", "1"])
        .arg(&a)
        .arg(&missing)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
    assert!(err["error"]["message"].as_str().unwrap().contains("missing.json"));
}

#[test]
fn non_convergence_exits_with_code_1() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let out = bin()
        .args(["weights", "--eta", "0.1", "--max-iter", "1"])
        .args(&files)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "non_convergence");
}

#[test]
fn invalid_eta_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let out = bin().args(["solve", "--eta", "-1"]).args(&files).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--eta"));
}

#[test]
fn enumerate_three_measures_gives_three_rows() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let cli = parse(&["enumerate", "--eta", "1", "--out-dir", dir.path().to_str().unwrap()], &paths(&files));
    let cli::Command::Enumerate(args) = &cli.command else { panic!() };
    let rows = cli::cmd_enumerate(args).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].additive_cost <= w[1].additive_cost));
    for r in &rows {
        assert!(r.gap().unwrap() < 1e-6, "{r:?}");
    }
    let csv = fs::read_to_string(dir.path().join("enumerate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("rank,prufer,additive_cost,direct_cost,direct_method\n"));
}

#[test]
fn enumerate_refuses_beyond_the_bound() {
    let dir = TempDir::new().unwrap();
    let files: Vec<PathBuf> = (0..9)
        .map(|k| write_measure(dir.path(), &format!("m{k}.json"), vec![vec![k as f64]], vec![1.0]))
        .collect();
    let out = bin().args(["enumerate", "--eta", "1"]).args(&files).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--max-s 8"));
}

#[test]
fn solve_tree_is_rank_one_of_enumerate() {
    let dir = TempDir::new().unwrap();
    let gen = parse(&["gen", gmm_spec().to_str().unwrap(), "--n", "4", "--seed", "3", "--out-dir", dir.path().to_str().unwrap()], &[]);
    let cli::Command::Gen(g) = &gen.command else { panic!() };
    let files = cli::cmd_gen(g).unwrap();
    assert_eq!(files.len(), 5);

    let solve = parse(&["solve", "--eta", "1", "--out-dir", dir.path().join("s").to_str().unwrap()], &paths(&files));
    let cli::Command::Solve(s) = &solve.command else { panic!() };
    let report = cli::cmd_solve(s).unwrap();
    assert_eq!(report.edge_weights.len(), 10);

    let en = parse(&["enumerate", "--eta", "1", "--top-k", "0", "--out-dir", dir.path().join("e").to_str().unwrap()], &paths(&files));
    let cli::Command::Enumerate(e) = &en.command else { panic!() };
    let rows = cli::cmd_enumerate(e).unwrap();
    assert_eq!(rows.len(), 125);
    assert_eq!(rows[0].prufer, report.prufer);
    assert!((rows[0].additive_cost - report.total_cost).abs() <= 1e-9);
    assert!(rows.iter().all(|r| r.gap().unwrap() <= 1e-5));
}

#[test]
fn oracle_gaps() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let cli = parse(&["oracle", "--eta", "1", "--tree", "2", "--out-dir", dir.path().to_str().unwrap()], &paths(&files));
    let cli::Command::Oracle(args) = &cli.command else { panic!() };
    let r = cli::cmd_oracle(args).unwrap();
    assert_eq!(r.edges, vec![[1, 2], [2, 3]]);
    assert!(r.tensor_gap < 1e-6 && r.cost_gap < 1e-6, "{r:?}");
    assert!(dir.path().join("oracle.json").exists());

    let two = parse(&["oracle", "--eta", "1", "--out-dir", dir.path().to_str().unwrap()], &paths(&files[..2]));
    let cli::Command::Oracle(args) = &two.command else { panic!() };
    let r = cli::cmd_oracle(args).unwrap();
    assert!(r.tensor_gap < 1e-12, "{r:?}");
}

#[test]
fn oracle_with_zero_cost_matrices() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let zeros = vec![vec![0.0; 3]; 3];
    let spec = serde_json::json!({"costs": [
        {"pair": [1, 2], "matrix": zeros},
        {"pair": [1, 3], "matrix": zeros},
        {"pair": [3, 2], "matrix": zeros},
    ]});
    let cost_file = dir.path().join("costs.json");
    fs::write(&cost_file, spec.to_string()).unwrap();
    let cost = format!("matrix:{}", cost_file.display());
    let cli = parse(&["oracle", "--eta", "1", "--cost", &cost, "--tree", "3", "--out-dir", dir.path().to_str().unwrap()], &paths(&files));
    let cli::Command::Oracle(args) = &cli.command else { panic!() };
    let r = cli::cmd_oracle(args).unwrap();
    assert!(r.tensor_gap < 1e-9 && r.cost_gap < 1e-9, "{r:?}");
}

#[test]
fn gen_is_deterministic_and_sized() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        assert_eq!(cli::run(["msbtree", "gen", gmm_spec().to_str().unwrap(), "--n", "25", "--seed", "11", "--out-dir", dir.path().to_str().unwrap()]), 0);
    }
    for k in 1..=5 {
        let name = format!("mu{k}.json");
        let x = fs::read(a.path().join(&name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(&name)).unwrap());
        let m = DiscreteMeasure::read(a.path().join(&name)).unwrap();
        assert_eq!(m.len(), 25);
    }

    let c = TempDir::new().unwrap();
    assert_eq!(cli::run(["msbtree", "gen", gmm_spec().to_str().unwrap(), "--n", "1", "--out-dir", c.path().to_str().unwrap()]), 0);
    let m = DiscreteMeasure::read(c.path().join("mu1.json")).unwrap();
    assert_eq!((m.len(), m.entropy()), (1, 0.0));
}

#[test]
fn gen_rejects_malformed_spec() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"interval": [0, 1], "mixtures": [[{"mean": 0, "std": 1, "weight": 0.5}]]}"#).unwrap();
    let out = bin().arg("gen").arg(&spec).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn solve_outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let outs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for out in &outs {
        let status = bin()
            .args(["solve", "--eta", "0.7", "--threads", "1", "--seed", "5"])
            .args(&files)
            .arg("--out-dir")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["weights.csv", "tree.dot", "tree.json", "prufer.txt", "report.json"] {
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
    assert!(outs[0].join("timings.json").exists());
}

#[test]
fn weights_command_prints_the_matrix() {
    let dir = TempDir::new().unwrap();
    let files = three_measures(dir.path());
    let out = bin().args(["weights", "--eta", "1"]).args(&files).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(",1,2,3\n"));
    assert_eq!(stdout, fs::read_to_string(dir.path().join("weights.csv")).unwrap());
}

#[test]
fn image_files_are_accepted_as_measures() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let files = ["blob_a.pgm", "blob_b.pgm", "blob_c.csv"].map(|f| data.join(f));
    let dir = TempDir::new().unwrap();
    let cli = parse(&["solve", "--eta", "2", "--out-dir", dir.path().to_str().unwrap()], &paths(&files));
    let cli::Command::Solve(args) = &cli.command else { panic!() };
    let report = cli::cmd_solve(args).unwrap();
    assert_eq!(report.edges, vec![[1, 2], [2, 3]]);
}
