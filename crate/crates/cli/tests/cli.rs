use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const POS: [&str; 12] = [
    "CCO", "CCCO", "OCC(C)C", "OC1CCCC1", "CC(O)CC", "OCCCCC", "OCC=C", "OCc1ccccc1", "OCCN", "OC(C)(C)C", "OCCOC", "OCC#C",
];
const NEG: [&str; 12] = [
    "CCC", "CCCC", "CC(C)C", "C1CCCC1", "CC(C)CC", "CCCCCC", "CC=C", "Cc1ccccc1", "CCCN", "CC(C)(C)C", "CCCOC", "CCC#C",
];

fn bmpnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmpnn"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = bmpnn(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_dataset(dir: &Path, extra: &[&str]) {
    let mut s = String::from("name,smiles,label\n");
    for (i, m) in POS.iter().enumerate() {
        s += &format!("p{i},{m},1\n");
    }
    for (i, m) in NEG.iter().enumerate() {
        s += &format!("n{i},{m},0\n");
    }
    for line in extra {
        s += line;
        s.push('\n');
    }
    fs::write(dir.join("mols.csv"), s).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

const FAST: [&str; 6] = ["--epochs", "4", "--hidden", "12", "--mode", "2d"];

#[test]
fn featurize_counts_and_logs_failures() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("three.csv"), "smiles,label\nCCO,1\nCCN,0\nc1ccccc1,1\n").unwrap();
    let out = ok(&["featurize", "three.csv", "-o", "f3"], t.path());
    assert!(out.starts_with("3 graphs"), "{out}");
    assert_eq!(csv_rows(&t.path().join("f3/failures.csv")).len(), 0);

    write_dataset(t.path(), &["broken,C1CC,1"]);
    let out = ok(&["featurize", "mols.csv", "-o", "f", "--mode", "noisy3d:0.5"], t.path());
    assert!(out.starts_with("24 graphs"), "{out}");
    let fails = csv_rows(&t.path().join("f/failures.csv"));
    assert_eq!(fails.len(), 1);
    assert_eq!(fails[0][0], "25");
    assert_eq!(fails[0][1], "broken");
    let manifest = json(&t.path().join("f/manifest.json"));
    assert_eq!(manifest["command"], "featurize");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["data"]["mode"], "noisy3d:0.5");
}

#[test]
fn train_evaluate_predict() {
    let t = tempfile::tempdir().unwrap();
    write_dataset(t.path(), &["broken,C1CC,1"]);
    ok(&["featurize", "mols.csv", "-o", "f", "--mode", "2d"], t.path());

    let mut args = vec!["train", "f/graphs.bmc", "-o", "run", "--seeds", "0,1,2,3,4"];
    args.extend(FAST);
    ok(&args, t.path());
    for s in 0..5 {
        let m = json(&t.path().join(format!("run/seed_{s}/metrics.json")));
        assert_eq!(m["seed"], s);
        assert_eq!(m["history"]["epochs"].as_array().unwrap().len(), 4);
        assert!(t.path().join(format!("run/seed_{s}/model.ckpt")).exists());
    }
    let agg = json(&t.path().join("run/aggregate.json"));
    let f1 = &agg["metrics"]["f1"];
    assert_eq!(f1["values"].as_array().unwrap().len(), 5);
    assert!(f1["margin"].as_f64().unwrap() >= 0.0);

    // Without a test split the reported metrics are on the full cache, which
    // evaluate must reproduce exactly.
    let mut args = vec!["train", "f/graphs.bmc", "-o", "full", "--seeds", "7", "--test-fraction", "0"];
    args.extend(FAST);
    ok(&args, t.path());
    let trained = json(&t.path().join("full/seed_7/metrics.json"))["test"].clone();
    ok(
        &["evaluate", "--checkpoint", "full/seed_7/model.ckpt", "f/graphs.bmc", "-o", "eval.json"],
        t.path(),
    );
    assert_eq!(json(&t.path().join("eval.json")), trained);

    let out = ok(&["predict", "--checkpoint", "full/seed_7/model.ckpt", "mols.csv"], t.path());
    let mut r = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 25);
    assert_eq!(&rows[24][1], "broken");
    assert!(rows[24][2].is_empty() && !rows[24][3].is_empty());
    for row in &rows[..24] {
        let p: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn rerun_from_written_config_is_bit_identical() {
    let t = tempfile::tempdir().unwrap();
    write_dataset(t.path(), &[]);
    let mut args = vec!["train", "mols.csv", "-o", "a", "--seeds", "3,4", "--dropout", "0.3"];
    args.extend(FAST);
    ok(&args, t.path());
    ok(&["train", "mols.csv", "-o", "b", "--config", "a/config.toml"], t.path());
    for f in ["seed_3/metrics.json", "seed_4/metrics.json", "aggregate.json", "seed_3/model.ckpt"] {
        assert_eq!(fs::read(t.path().join("a").join(f)).unwrap(), fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn relevance_scores_and_difference_table() {
    let t = tempfile::tempdir().unwrap();
    write_dataset(t.path(), &[]);
    let mut args = vec!["train", "mols.csv", "-o", "run", "--seeds", "0", "--test-fraction", "0"];
    args.extend(FAST);
    ok(&args, t.path());
    let ckpt = "run/seed_0/model.ckpt";

    fs::write(t.path().join("single.csv"), "name,smiles,label\nmethane,C,0\nethanol,CCO,1\n").unwrap();
    ok(&["relevance", "--checkpoint", ckpt, "single.csv", "-o", "rel", "--svg"], t.path());
    let rows = csv_rows(&t.path().join("rel/relevance.csv"));
    let methane: Vec<_> = rows.iter().filter(|r| r[0] == "methane").collect();
    assert_eq!(methane.len(), 1);
    assert_eq!(methane[0][3].parse::<f64>().unwrap(), 0.5);
    let ethanol: Vec<f64> = rows.iter().filter(|r| r[0] == "ethanol").map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(ethanol.len(), 3);
    assert_eq!(ethanol.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
    assert_eq!(ethanol.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    let svg = fs::read_to_string(t.path().join("rel/0002_ethanol.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<circle"));

    fs::write(
        t.path().join("pair.csv"),
        "name,smiles,label\nR,C[C@H](N)C(=O)O,1\nS,C[C@@H](N)C(=O)O,1\n",
    )
    .unwrap();
    ok(&["relevance", "--checkpoint", ckpt, "pair.csv", "-o", "pair", "--diff"], t.path());
    let scores = csv_rows(&t.path().join("pair/relevance.csv"));
    let sum = |name: &str| scores.iter().filter(|r| r[0] == name).map(|r| r[3].parse::<f64>().unwrap()).sum::<f64>();
    let diff = csv_rows(&t.path().join("pair/difference.csv"));
    let last = diff.last().unwrap();
    assert_eq!(last[0], "sum");
    assert!((last[2].parse::<f64>().unwrap() - sum("R")).abs() < 1e-12);
    assert!((last[4].parse::<f64>().unwrap() - (sum("R") - sum("S"))).abs() < 1e-12);
    assert_eq!(diff.len(), 6 + 1);
}

#[test]
fn diversity_of_duplicate_groups() {
    let t = tempfile::tempdir().unwrap();
    let groups = ["CCCCCCCCO", "c1ccc2ccccc2c1", "OC(=O)C(N)CS", "FC(F)(F)C(F)(F)F"];
    let mut s = String::from("name,smiles,label\n");
    for (g, m) in groups.iter().enumerate() {
        for k in 0..2 {
            s += &format!("g{g}_{k},{m},0\n");
        }
    }
    fs::write(t.path().join("dups.csv"), s).unwrap();
    ok(&["diversity", "dups.csv", "-o", "div"], t.path());
    let summary = json(&t.path().join("div/summary.json"));
    assert_eq!(summary["clusters"], 4);
    assert_eq!(summary["entropy_bits"].as_f64().unwrap(), 2.0);
    assert_eq!(summary["singletons"], 0);
    let rows = csv_rows(&t.path().join("div/clusters.csv"));
    assert_eq!(rows.len(), 8);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][1], pair[1][1]);
    }
}

#[test]
fn ablation_table_shape() {
    let t = tempfile::tempdir().unwrap();
    write_dataset(t.path(), &[]);
    ok(
        &["ablate3d", "mols.csv", "-o", "ab", "--seeds", "1,2", "--epochs", "3", "--hidden", "8"],
        t.path(),
    );
    let table = json(&t.path().join("ab/ablation.json"));
    let arms: Vec<&str> = table["arms"].as_array().unwrap().iter().map(|a| a["arm"].as_str().unwrap()).collect();
    assert_eq!(arms, ["3d", "noisy3d:0.5", "2d"]);
    for a in table["arms"].as_array().unwrap() {
        for m in ["f1", "accuracy", "auc", "loss"] {
            assert_eq!(a["metrics"][m]["values"].as_array().unwrap().len(), 2, "{m}");
        }
    }
    assert_eq!(csv_rows(&t.path().join("ab/ablation.csv")).len(), 3 * 4);
}

#[test]
fn select_and_tune_write_reports() {
    let t = tempfile::tempdir().unwrap();
    write_dataset(t.path(), &[]);
    ok(
        &[
            "select-features", "mols.csv", "-o", "sel", "--mode", "2d", "--epochs", "2", "--hidden", "8", "--cv-folds", "2",
            "--max-rounds", "1", "--features", "atomic_number,electronegativity,bond_length,rotatable_bonds",
        ],
        t.path(),
    );
    let ranking = csv_rows(&t.path().join("sel/ranking.csv"));
    assert_eq!(ranking.len(), 4);
    let kept = json(&t.path().join("sel/features.json"));
    assert!(!kept["features"].as_array().unwrap().is_empty());
    // The selected list feeds straight back into training.
    let mut args = vec!["train", "mols.csv", "-o", "run", "--seeds", "0", "--features-file", "sel/features.json"];
    args.extend(FAST);
    ok(&args, t.path());

    ok(
        &["tune", "mols.csv", "-o", "tn", "--mode", "2d", "--epochs", "2", "--cv-folds", "2", "--trials", "2"],
        t.path(),
    );
    let r = json(&t.path().join("tn/tune.json"));
    assert_eq!(r["trials"].as_array().unwrap().len(), 2);
    let chosen = r["chosen"].as_u64().unwrap() as usize;
    assert_eq!(r["trials"][chosen]["pareto"], true);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(bmpnn(&["train", "missing.csv", "-o", "x"], t.path()).status.code(), Some(1));
    assert_eq!(bmpnn(&["frobnicate"], t.path()).status.code(), Some(1));
    assert_eq!(bmpnn(&["train", "x.csv", "-o", "x", "--mode", "5d"], t.path()).status.code(), Some(1));
    fs::write(t.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    write_dataset(t.path(), &[]);
    assert_eq!(
        bmpnn(&["predict", "--checkpoint", "junk.ckpt", "mols.csv"], t.path()).status.code(),
        Some(1)
    );
    assert_eq!(bmpnn(&["--help"], t.path()).status.code(), Some(0));
}
