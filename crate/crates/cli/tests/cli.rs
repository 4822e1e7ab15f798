use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mauc::dataset::{class_counts_for, load_csv};
use mauc::LinearSoftmaxModel;
use ndarray::{array, Array1, Array2};
use serde_json::Value;

fn mauc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mauc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn assert_schema(name: &str, v: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn blobs(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let run = mauc(&[
        "synth",
        "--kind",
        "blobs",
        "--n",
        "600",
        "--d",
        "5",
        "--rho",
        "0.6,0.3,0.1",
        "--sep",
        "6",
        "--seed",
        seed,
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0);
    out
}

/// Three classes, each concentrated on its own feature axis.
fn separable_csv(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("sep.csv");
    let mut text = String::new();
    for m in 0..30 {
        let y = m % 3;
        let mut row = [0.0; 3];
        row[y] = 1.0 + m as f64 / 100.0;
        text.push_str(&format!("{y},{},{},{}\n", row[0], row[1], row[2]));
    }
    fs::write(&path, text).unwrap();
    path
}

fn save_model(dir: &Path, name: &str, w: Array2<f64>) -> std::path::PathBuf {
    let path = dir.join(name);
    let c = w.nrows();
    LinearSoftmaxModel::new(w, Array1::zeros(c))
        .unwrap()
        .save(&path)
        .unwrap();
    path
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 5] = [
        (
            "eval",
            &["--data", "--format", "--label-col", "--model", "--pairs", "--json"],
        ),
        (
            "verify",
            &["--loss", "--trials", "--max-n", "--seed", "--perturb", "--json"],
        ),
        (
            "bench",
            &[
                "--loss", "--sizes", "--nc", "--d", "--rho", "--trials", "--seed", "--grad", "--out",
            ],
        ),
        (
            "train",
            &[
                "--data",
                "--format",
                "--label-col",
                "--loss",
                "--lr",
                "--momentum",
                "--wd",
                "--epochs",
                "--batch",
                "--lr-decay",
                "--eval-every",
                "--seed",
                "--out",
                "--trace",
                "--baseline",
                "--json",
            ],
        ),
        ("synth", &["--kind", "--n", "--d", "--rho", "--sep", "--seed", "--out"]),
    ];
    for (cmd, flags) in cases {
        let help = stdout(&mauc(&[cmd, "--help"]));
        for f in flags {
            assert!(help.contains(f), "{cmd} help lacks {f}");
        }
    }
}

#[test]
fn unknown_flags_are_errors() {
    assert_eq!(code(&mauc(&["verify", "--loss", "exp", "--bogus"])), 2);
    assert_eq!(code(&mauc(&["verify", "--loss", "cubic"])), 2);
}

#[test]
fn synth_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = blobs(dir.path(), "a.csv", "3");
    let b = blobs(dir.path(), "b.csv", "3");
    let c = blobs(dir.path(), "c.csv", "4");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let ds = load_csv(&a, 0).unwrap();
    assert_eq!((ds.len(), ds.dim(), ds.n_classes()), (600, 5, 3));
    assert_eq!(ds.class_counts(), class_counts_for(600, &[0.6, 0.3, 0.1]).unwrap());

    let u = dir.path().join("u.csv");
    let run = mauc(&[
        "synth",
        "--kind",
        "uniform",
        "--n",
        "101",
        "--d",
        "4",
        "--rho",
        "0.2,0.1,0.7",
        "--out",
        p(&u),
    ]);
    assert_eq!(code(&run), 0);
    let ds = load_csv(&u, 0).unwrap();
    assert_eq!(ds.class_counts(), class_counts_for(101, &[0.2, 0.1, 0.7]).unwrap());
    assert!(ds.features().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn synth_rejects_bad_rho() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let run = mauc(&[
        "synth",
        "--kind",
        "uniform",
        "--n",
        "10",
        "--d",
        "2",
        "--rho",
        "0.5,0.6",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 2);
    assert!(!out.exists());
}

#[test]
fn eval_perfect_and_constant_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = separable_csv(dir.path());
    let perfect = save_model(dir.path(), "perfect.txt", 10.0 * Array2::eye(3));
    let constant = save_model(dir.path(), "constant.txt", Array2::zeros((3, 3)));

    let v = json(&mauc(&["eval", "--data", p(&data), "--model", p(&perfect), "--json"]));
    assert_schema("eval", &v);
    assert_eq!(v["mauc"].as_f64().unwrap(), 1.0);
    assert_eq!(v["mauc_ova"].as_f64().unwrap(), 1.0);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 5);

    let v = json(&mauc(&[
        "eval",
        "--data",
        p(&data),
        "--model",
        p(&constant),
        "--pairs",
        "2",
        "--json",
    ]));
    assert_schema("eval", &v);
    assert_eq!(v["mauc"].as_f64().unwrap(), 0.5);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 2);

    let text = stdout(&mauc(&["eval", "--data", p(&data), "--model", p(&perfect)]));
    assert!(text.contains("MAUC       1.000000"));
}

#[test]
fn eval_libsvm_pads_missing_trailing_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.svm");
    fs::write(&data, "0 1:2\n1 2:2\n0 1:3\n1 2:1.5\n").unwrap();
    let model = save_model(dir.path(), "m.txt", array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let v = json(&mauc(&[
        "eval",
        "--data",
        p(&data),
        "--format",
        "libsvm",
        "--model",
        p(&model),
        "--json",
    ]));
    assert_eq!(v["mauc"].as_f64().unwrap(), 1.0);
}

#[test]
fn eval_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = separable_csv(dir.path());
    let wide = save_model(dir.path(), "wide.txt", Array2::zeros((3, 4)));
    assert_eq!(code(&mauc(&["eval", "--data", p(&data), "--model", p(&wide)])), 3);
    let two = save_model(dir.path(), "two.txt", Array2::zeros((2, 3)));
    assert_eq!(code(&mauc(&["eval", "--data", p(&data), "--model", p(&two)])), 3);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0,1,2\n1,x,3\n").unwrap();
    let model = save_model(dir.path(), "m.txt", Array2::zeros((2, 2)));
    let run = mauc(&["eval", "--data", p(&bad), "--model", p(&model)]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 2"));

    let garbled = dir.path().join("garbled.txt");
    fs::write(&garbled, "not a model\n").unwrap();
    assert_eq!(code(&mauc(&["eval", "--data", p(&data), "--model", p(&garbled)])), 2);
    assert_eq!(
        code(&mauc(&["eval", "--data", "/nonexistent.csv", "--model", p(&model)])),
        2
    );
}

#[test]
fn verify_passes_on_exact_and_bernstein_kernels() {
    let v = json(&mauc(&["verify", "--loss", "exp:alpha=1", "--trials", "50", "--json"]));
    assert_schema("verify", &v);
    assert_eq!(v["passed"], Value::Bool(true));
    assert!(v["worst_loss_dev"].as_f64().unwrap() <= 1e-9);

    let run = mauc(&[
        "verify",
        "--loss",
        "bernstein:base=logit,K=12",
        "--trials",
        "30",
        "--max-n",
        "128",
    ]);
    assert_eq!(code(&run), 0);
    assert!(stdout(&run).trim_end().ends_with("PASS"));
}

#[test]
fn verify_catches_a_corrupted_kernel_and_echoes_the_seed() {
    let run = mauc(&[
        "verify",
        "--loss",
        "squared",
        "--trials",
        "4",
        "--seed",
        "17",
        "--perturb",
        "1e-6",
    ]);
    assert_eq!(code(&run), 1);
    let text = stdout(&run);
    assert!(text.contains("FAIL seed 17"));
    assert!(text.contains("replay with --seed 20 --trials 1"));

    let out = mauc(&[
        "verify",
        "--loss",
        "squared",
        "--trials",
        "2",
        "--perturb",
        "1e-6",
        "--json",
    ]);
    assert_eq!(code(&out), 1);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema("verify", &v);
    assert_eq!(v["failures"].as_array().unwrap().len(), 2);

    // Replaying a failing seed alone reproduces the same instance.
    let one = mauc(&[
        "verify",
        "--loss",
        "squared",
        "--trials",
        "1",
        "--seed",
        "1",
        "--perturb",
        "1e-6",
        "--json",
    ]);
    let w: Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(w["failures"][0]["naive_loss"], v["failures"][1]["naive_loss"]);
}

#[test]
fn bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let run = mauc(&[
        "bench",
        "--loss",
        "squared",
        "--sizes",
        "32,64",
        "--d",
        "10",
        "--trials",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_schema("bench", &v);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r["trials"] == 1 && r["nc"] == 5 && r["ratio"].as_f64().unwrap() > 0.0));

    let csv = dir.path().join("b.csv");
    let run = mauc(&[
        "bench",
        "--sizes",
        "32",
        "--nc",
        "3",
        "--d",
        "4",
        "--trials",
        "2",
        "--grad",
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&run), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("loss,N,nc,d,trials,naive_ms,fast_ms,ratio"));
    assert!(lines.next().unwrap().starts_with("exp:alpha=1,32,3,4,2,"));
}

#[test]
fn bench_rejects_bad_configs() {
    assert_eq!(code(&mauc(&["bench", "--sizes", "16384"])), 2);
    assert_eq!(code(&mauc(&["bench", "--sizes", "64,32"])), 2);
    assert_eq!(code(&mauc(&["bench", "--nc", "3", "--rho", "0.5,0.5"])), 2);
}

#[test]
fn bench_ratio_grows_on_the_default_protocol() {
    for loss in ["exp:alpha=1", "squared:alpha=1"] {
        let run = mauc(&["bench", "--loss", loss]);
        assert_eq!(code(&run), 0);
        let ratios: Vec<f64> = stdout(&run)
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(ratios.len(), 6);
        assert!(ratios[0] >= 1.0, "{loss}: N=32 ratio {}", ratios[0]);
        // One inversion is tolerated among the N <= 64 rows.
        let inversions: Vec<usize> = (1..ratios.len()).filter(|&k| ratios[k] < ratios[k - 1]).collect();
        assert!(inversions.iter().all(|&k| k == 1), "{loss}: {ratios:?}");
    }
}

#[test]
fn train_reaches_high_mauc_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), "d.csv", "5");
    let (m1, m2) = (dir.path().join("m1.txt"), dir.path().join("m2.txt"));
    let t1 = dir.path().join("t1.csv");
    let args = |m: &Path| {
        vec![
            "train".to_string(),
            "--data".into(),
            p(&data).into(),
            "--epochs".into(),
            "100".into(),
            "--seed".into(),
            "2".into(),
            "--out".into(),
            p(m).into(),
            "--json".into(),
        ]
    };
    let mut first = args(&m1);
    first.extend(["--trace".to_string(), p(&t1).to_string()]);
    let v = json(&Command::new(env!("CARGO_BIN_EXE_mauc")).args(&first).output().unwrap());
    assert_schema("train", &v);
    assert!(v["test_mauc"].as_f64().unwrap() >= 0.99, "{v}");
    let _ = json(
        &Command::new(env!("CARGO_BIN_EXE_mauc"))
            .args(args(&m2))
            .output()
            .unwrap(),
    );
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());

    let trace = fs::read_to_string(&t1).unwrap();
    assert!(trace.starts_with("epoch,risk,val_mauc,lr\n"));
    assert_eq!(trace.lines().count(), 101);

    let (mc, tc) = (dir.path().join("ce.txt"), dir.path().join("ce.csv"));
    let v = json(&mauc(&[
        "train",
        "--data",
        p(&data),
        "--baseline",
        "ce",
        "--epochs",
        "50",
        "--out",
        p(&mc),
        "--trace",
        p(&tc),
        "--json",
    ]));
    assert_schema("train", &v);
    assert_eq!(v["objective"], "ce");
    let ce = fs::read_to_string(&tc).unwrap();
    assert_eq!(ce.lines().next(), trace.lines().next());
    assert_eq!(ce.lines().count(), 51);
    LinearSoftmaxModel::load(&mc).unwrap();
}

#[test]
fn train_divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), "d.csv", "6");
    let m = dir.path().join("m.txt");
    let run = mauc(&[
        "train",
        "--data",
        p(&data),
        "--lr",
        "1e200",
        "--epochs",
        "5",
        "--out",
        p(&m),
    ]);
    assert_eq!(code(&run), 4);
    assert!(String::from_utf8_lossy(&run.stderr).contains("non-finite"));
}
