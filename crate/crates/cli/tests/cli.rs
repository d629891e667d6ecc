use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = "a1\tA\na2\tA\nb1\tB\nA\troot\nB\troot\n";
const CHAIN: &str = "c0\troot\nc1\tc0\nc2\tc1\n";
const STAR: &str = "s0\troot\ns1\troot\ns2\troot\ns3\troot\n";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guided-proto"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cost_of_toy_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let tax = write(dir.path(), "toy.tsv", TOY);
    let out = dir.path().join("cost.csv");
    ok(&["cost", s(&tax), "--out", s(&out)]);
    let rows = read_csv(&out);
    assert_eq!(rows[0], ["", "a1", "a2", "b1"]);
    assert_eq!(rows[1][1..], ["0", "2", "4"]);
    assert_eq!(rows[2][1..], ["2", "0", "4"]);
    assert_eq!(rows[3][1..], ["4", "4", "0"]);

    let stdout = ok(&["cost", s(&tax)]).stdout;
    assert_eq!(stdout, fs::read(&out).unwrap());
}

#[test]
fn cost_of_all_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let tax = write(dir.path(), "toy.tsv", TOY);
    let out = dir.path().join("cost.csv");
    ok(&["cost", s(&tax), "--nodes", "all", "--out", s(&out)]);
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.len() == 7));
}

#[test]
fn invalid_taxonomy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cyclic = write(dir.path(), "bad.tsv", "a\tb\nb\ta\n");
    let out = bin(&["cost", s(&cyclic)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(bin(&["cost", "/nonexistent/tax.tsv"]).status.code(), Some(2));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn embed_chain_is_nearly_exact_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let tax = write(dir.path(), "chain.tsv", CHAIN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    // the path root-c0-c1-c2 embeds isometrically on a line; descent in the
    // plane reaches it only sublinearly
    for out in [&a, &b] {
        ok(&[
            "embed",
            s(&tax),
            "--nodes",
            "all",
            "--dim",
            "2",
            "--steps",
            "20000",
            "--seed",
            "3",
            "--out-dir",
            s(out),
        ]);
    }
    let report = json(&a.join("report.json"));
    let sfd = report["distortion"]["scale_free_distortion"].as_f64().unwrap();
    assert!(sfd < 1e-4, "{sfd}");
    for f in ["report.json", "prototypes.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_csv(&a.join("prototypes.csv")).len(), 1 + 4);
}

#[test]
fn embed_star_on_a_line_is_distorted() {
    let dir = tempfile::tempdir().unwrap();
    let tax = write(dir.path(), "star.tsv", STAR);
    let out = dir.path().join("e");
    ok(&["embed", s(&tax), "--dim", "1", "--out-dir", s(&out)]);
    let sfd = json(&out.join("report.json"))["distortion"]["scale_free_distortion"]
        .as_f64()
        .unwrap();
    assert!(sfd > 0.05, "{sfd}");
    assert_eq!(read_csv(&out.join("prototypes.csv")).len(), 5);
}

#[test]
fn synth_writes_rows_per_class_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let tax = write(dir.path(), "toy.tsv", TOY);
    let out = dir.path().join("d.csv");
    ok(&[
        "synth",
        s(&tax),
        "--per-class",
        "7",
        "--dims",
        "3",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    let rows = read_csv(&out);
    assert_eq!(rows[0], ["x0", "x1", "x2", "label"]);
    assert_eq!(rows.len(), 1 + 21);
    for class in ["a1", "a2", "b1"] {
        assert_eq!(rows.iter().filter(|r| r[3] == class).count(), 7);
    }
    let side = json(&dir.path().join("d.csv.json"));
    assert_eq!(side["rows"], 21);
    assert_eq!(side["params"]["per_class"], 7);
}

/// Well-separated synthetic data and a small linear model.
fn setup(dir: &Path, taxonomy: &str, extra: &str) -> (PathBuf, PathBuf) {
    let tax = write(dir, "tax.tsv", taxonomy);
    let data = dir.join("data.csv");
    ok(&[
        "synth",
        s(&tax),
        "--per-class",
        "20",
        "--dims",
        "4",
        "--noise",
        "0.05",
        "--seed",
        "2",
        "--out",
        s(&data),
    ]);
    let config = write(
        dir,
        "run.json",
        &format!(
            r#"{{
  "taxonomy": "tax.tsv",
  "dataset": "data.csv",
  "test_fraction": 0.25,
  "seeds": [0],
  "train": {{
    "embedding_dim": 3,
    "architecture": {{"type": "linear"}},
    "optimizer": {{"type": "adam", "lr": 0.05}},
    "epochs": 40,
    "batch_size": 16{extra}
  }}
}}"#
        ),
    );
    (config, data)
}

#[test]
fn train_writes_artifacts_per_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = setup(dir.path(), TOY, "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        "train",
        s(&config),
        "--out-dir",
        s(&a),
        "--seeds",
        "1,2",
        "--epochs",
        "5",
        "--threads",
        "2",
    ]);
    ok(&[
        "train",
        s(&config),
        "--out-dir",
        s(&b),
        "--seeds",
        "1,2",
        "--epochs",
        "5",
        "--threads",
        "1",
    ]);
    assert!(a.join("config.json").exists());
    let agg = json(&a.join("aggregate.json"));
    assert_eq!(agg["n_seeds"], 2);
    assert_eq!(agg["per_seed"][0]["seed"], 1);
    for seed in ["seed-1", "seed-2"] {
        for f in [
            "checkpoint.json",
            "history.csv",
            "eval.json",
            "confusion.csv",
            "prototypes.csv",
            "test_embeddings.csv",
        ] {
            let pa = a.join(seed).join(f);
            assert!(pa.exists(), "{}", pa.display());
            assert_eq!(
                fs::read(&pa).unwrap(),
                fs::read(b.join(seed).join(f)).unwrap(),
                "{seed}/{f}"
            );
        }
        assert_eq!(read_csv(&a.join(seed).join("history.csv")).len(), 1 + 5);
    }
    assert_eq!(
        fs::read(a.join("aggregate.json")).unwrap(),
        fs::read(b.join("aggregate.json")).unwrap()
    );
}

#[test]
fn train_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = setup(dir.path(), TOY, r#", "lambda": -1"#);
    assert_eq!(
        bin(&["train", s(&config), "--out-dir", s(&dir.path().join("o"))])
            .status
            .code(),
        Some(2)
    );
    let typo = write(dir.path(), "typo.json", r#"{"taxonomy": "tax.tsv", "seed": 3}"#);
    assert_eq!(bin(&["train", s(&typo)]).status.code(), Some(2));
}

#[test]
fn train_divergence_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = setup(dir.path(), TOY, "");
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace(r#"{"type": "adam", "lr": 0.05}"#, r#"{"type": "sgd", "lr": 1e200}"#);
    fs::write(&config, text).unwrap();
    let out = bin(&["train", s(&config), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

fn trained(dir: &Path, taxonomy: &str) -> (PathBuf, PathBuf) {
    let (config, data) = setup(dir, taxonomy, "");
    let out = dir.join("run");
    ok(&["train", s(&config), "--out-dir", s(&out)]);
    (out.join("seed-0").join("checkpoint.json"), data)
}

#[test]
fn eval_of_memorized_data_has_no_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, data) = trained(dir.path(), TOY);
    let out = dir.path().join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--scheme",
        "min-ec",
        "--out-dir",
        s(&out),
    ]);
    let report = json(&out.join("eval.json"));
    assert_eq!(report["er"].as_f64().unwrap(), 0.0);
    assert_eq!(report["ac"].as_f64().unwrap(), 0.0);
    let confusion = read_csv(&out.join("confusion.csv"));
    assert_eq!(confusion[0], ["true\\predicted", "a1", "a2", "b1"]);
    assert_eq!(confusion[1][1..], ["20", "0", "0"]);
}

#[test]
fn eval_missing_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x0,label\n1,a1\n");
    let out = bin(&[
        "eval",
        "--checkpoint",
        "/nonexistent/ck.json",
        "--data",
        s(&data),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn min_expected_cost_matches_max_prob_under_uniform_costs() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, data) = trained(dir.path(), STAR);
    let mut predictions = Vec::new();
    for scheme in ["max-prob", "min-expected-cost"] {
        let out = dir.path().join(format!("{scheme}.csv"));
        ok(&[
            "infer",
            "--checkpoint",
            s(&ck),
            "--features",
            s(&data),
            "--scheme",
            scheme,
            "--out",
            s(&out),
        ]);
        let rows = read_csv(&out);
        predictions.push(rows.iter().skip(1).map(|r| r[2].clone()).collect::<Vec<_>>());
    }
    assert_eq!(predictions[0].len(), 80);
    assert_eq!(predictions[0], predictions[1]);
}

#[test]
fn infer_single_row_deterministic_and_exact_search() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, data) = trained(dir.path(), TOY);
    let one = write(dir.path(), "one.csv", "id,x0,x1,x2,x3\nq,0.1,-0.2,0.3,0.0\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["infer", "--checkpoint", s(&ck), "--features", s(&one), "--out", s(&a)]);
    ok(&["infer", "--checkpoint", s(&ck), "--features", s(&one), "--out", s(&b)]);
    let rows = read_csv(&a);
    assert_eq!(rows.len(), 2);
    assert_eq!(
        rows[0],
        [
            "id",
            "scheme",
            "prediction",
            "is_leaf",
            "top1",
            "p1",
            "top2",
            "p2",
            "top3",
            "p3",
            "expected_cost"
        ]
    );
    assert_eq!(rows[1][0], "q");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let kd = dir.path().join("kd.csv");
    let scan = dir.path().join("scan.csv");
    ok(&["infer", "--checkpoint", s(&ck), "--features", s(&data), "--out", s(&kd)]);
    ok(&[
        "infer",
        "--checkpoint",
        s(&ck),
        "--features",
        s(&data),
        "--exhaustive",
        "--out",
        s(&scan),
    ]);
    assert_eq!(fs::read(&kd).unwrap(), fs::read(&scan).unwrap());

    let any = dir.path().join("any.csv");
    ok(&[
        "infer",
        "--checkpoint",
        s(&ck),
        "--features",
        s(&data),
        "--scheme",
        "any-node",
        "--out",
        s(&any),
    ]);
    assert_eq!(read_csv(&any).len(), 61);
}

#[test]
fn infer_rejects_missing_feature_column() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, _) = trained(dir.path(), TOY);
    let bad = write(dir.path(), "bad.csv", "x0,x1,x2\n1,2,3\n");
    let out = bin(&[
        "infer",
        "--checkpoint",
        s(&ck),
        "--features",
        s(&bad),
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x3"));
}
