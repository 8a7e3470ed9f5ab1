use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Mutex;

use svnn::linalg::io::read_matrix;
use svnn::linalg::{RandomSource, SymmetricOperator};
use svnn::model::{Activation, Architecture, Task, TrainedModel, VNNModel};

// Benchmarks in this file need the machine to themselves.
static SERIAL: Mutex<()> = Mutex::new(());

fn svnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svnn"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = svnn(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_gen(dir: &Path) {
    ok(&[
        "gen",
        "--preset",
        "sparsecov",
        "--n",
        "20",
        "--samples",
        "200",
        "--seed",
        "1",
        "--out",
        p(dir),
    ]);
}

#[test]
fn gen_is_deterministic() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&[
        "gen",
        "--preset",
        "sparsecov",
        "--seed",
        "1",
        "--out",
        p(&a),
    ]);
    ok(&[
        "gen",
        "--preset",
        "sparsecov",
        "--seed",
        "1",
        "--out",
        p(&b),
    ]);
    for name in ["X.csv", "y.csv", "splits.json", "meta.json", "true_cov.txt"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(listed.contains(&"X.csv") && listed.contains(&"config.txt"));
    assert_eq!(manifest["config"]["seed"], "1");
}

#[test]
fn spiked_metadata_records_model() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "gen",
        "--preset",
        "spiked",
        "--r",
        "2",
        "--c0",
        "5",
        "--n",
        "100",
        "--out",
        p(tmp.path()),
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("meta.json")).unwrap()).unwrap();
    let params = &meta["params"];
    assert_eq!(params["betas"].as_array().unwrap().len(), 2);
    assert_eq!(params["theta"], 1.0);
    let supports = params["supports"].as_array().unwrap();
    assert_eq!(supports.len(), 2);
    assert!(supports.iter().all(|s| s.as_array().unwrap().len() == 5));
}

#[test]
fn usage_errors_exit_2() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let out = svnn(&["gen", "--preset", "nope", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let out = svnn(&[
        "train",
        "--data",
        p(&tmp.path().join("missing")),
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(
        svnn(&["gen", "--no-such-flag", "1", "--out", "x"])
            .status
            .code(),
        Some(2)
    );

    let cfg = tmp.path().join("c.txt");
    fs::write(&cfg, "command=gen\nunknown_key=4\n").unwrap();
    assert_eq!(
        svnn(&["--config", p(&cfg), "--out", p(tmp.path())])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn hard_threshold_at_zero_keeps_support() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    small_gen(&data);
    let out = tmp.path().join("s");
    ok(&[
        "sparsify",
        "--data",
        p(&data),
        "--method",
        "hard",
        "--tau",
        "0",
        "--out",
        p(&out),
    ]);
    let m = read_matrix(&out.join("sparsified.txt")).unwrap();
    let ds = svnn::data::load_dataset(&data).unwrap();
    let c = svnn::covariance::sample_covariance(&ds.train_rows()).unwrap();
    assert_eq!(m.nnz(), c.support().nnz());
    assert_eq!(m.to_dense(), c.matrix);
}

#[test]
fn rcv_prints_expected_nnz() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    small_gen(&data);
    let out = tmp.path().join("s");
    let stdout = ok(&[
        "sparsify",
        "--data",
        p(&data),
        "--method",
        "rcv",
        "--p",
        "0.5",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    let input = stats["input_nnz"].as_f64().unwrap();
    let expected = 0.5 * (input - 20.0) + 20.0;
    assert_eq!(stats["expected_nnz"].as_f64().unwrap(), expected);
    assert!(
        stdout.contains(&format!("expected nnz: {expected}\n")),
        "{stdout}"
    );
    assert!(stats["q"].as_f64().unwrap() > 0.0);
}

#[test]
fn acv_without_off_diagonals_is_rejected() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("eye.txt");
    fs::write(&m, "3\n1 0 0\n0 2 0\n0 0 3\n").unwrap();
    let out = svnn(&[
        "sparsify",
        "--input",
        p(&m),
        "--method",
        "acv",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    small_gen(&data);
    let out = tmp.path().join("t");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--epochs",
        "2",
        "--lr",
        "0",
        "--seed",
        "5",
        "--layers",
        "4",
        "--hidden",
        "3",
        "--out",
        p(&out),
    ]);
    let trained = TrainedModel::load_checkpoint(&out.join("checkpoint.json")).unwrap();
    let arch = Architecture {
        input_features: 1,
        layer_widths: vec![4],
        order: 1,
        readout_hidden: 3,
        activation: Activation::Relu,
        task: Task::Regression,
    };
    let init = VNNModel::init(arch, &mut RandomSource::new(5, 0x696e_6974)).unwrap();
    assert_eq!(trained.model.params(), init.params());
    assert_eq!(
        fs::read_to_string(out.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn echoed_config_replays_training() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    small_gen(&data);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&[
        "train",
        "--data",
        p(&data),
        "--epochs",
        "3",
        "--method",
        "soft",
        "--tau",
        "0.5",
        "--out",
        p(&a),
    ]);
    ok(&["--config", p(&a.join("config.txt")), "--out", p(&b)]);
    for name in ["checkpoint.json", "history.csv", "metrics.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    // Command-line flags beat the file.
    let c = tmp.path().join("c");
    ok(&[
        "train",
        "--config",
        p(&a.join("config.txt")),
        "--epochs",
        "1",
        "--out",
        p(&c),
    ]);
    assert_eq!(
        fs::read_to_string(c.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn stability_single_cell_and_parallel_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let common = [
        "stability",
        "--n",
        "30",
        "--samples",
        "200",
        "--epochs",
        "3",
    ];
    let one = tmp.path().join("one");
    ok(&[
        &common[..],
        &[
            "--methods",
            "hard",
            "--t-grid",
            "80",
            "--seeds",
            "2",
            "--out",
            p(&one),
        ],
    ]
    .concat());
    let csv = fs::read_to_string(one.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("t,seed,sparsifier,empirical_distance,bound,mae_or_acc,P,Q,c0,min_gap,slope_fit\n80,2,hard,"));

    let grid = [
        "--t-grid",
        "50,200",
        "--seeds",
        "0,1,2",
        "--methods",
        "dense,hard,acv,pca",
        "--pca-components",
        "3",
    ];
    let (s1, s8) = (tmp.path().join("s1"), tmp.path().join("s8"));
    ok(&[&common[..], &grid, &["--parallel", "1", "--out", p(&s1)]].concat());
    ok(&[&common[..], &grid, &["--parallel", "8", "--out", p(&s8)]].concat());
    assert_eq!(
        fs::read(s1.join("sweep.csv")).unwrap(),
        fs::read(s8.join("sweep.csv")).unwrap()
    );
    assert_eq!(
        fs::read(s1.join("summary.json")).unwrap(),
        fs::read(s8.join("summary.json")).unwrap()
    );
}

fn bench_rows(dir: &Path, args: &[&str]) -> Vec<(String, usize, f64)> {
    ok(&[&["bench", "--out", p(dir)], args].concat());
    fs::read_to_string(dir.join("bench.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn bench_timings_are_stable_and_track_nnz() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let same = bench_rows(
        &tmp.path().join("a"),
        &["--methods", "dense,dense", "--n", "600"],
    );
    let ratio = same[1].2 / same[0].2;
    assert!((0.8..=1.25).contains(&ratio), "same matrix twice: {ratio}");

    let half = bench_rows(
        &tmp.path().join("b"),
        &["--methods", "dense,rcv", "--p", "0.5", "--n", "600"],
    );
    let frac = half[1].1 as f64 / half[0].1 as f64;
    assert!((frac - 0.5).abs() < 0.05, "nnz fraction {frac}");
    let ratio = half[1].2 / half[0].2;
    assert!((0.35..=0.8).contains(&ratio), "p = 0.5 time ratio {ratio}");
}

#[test]
fn freq_outputs() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tmp = tempfile::tempdir().unwrap();
    let rows = |dir: &Path| -> Vec<Vec<f64>> {
        fs::read_to_string(dir.join("freq.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let k0 = tmp.path().join("k0");
    ok(&[
        "freq",
        "--taps",
        "0.7",
        "--dims",
        "2",
        "--resolution",
        "4",
        "--out",
        p(&k0),
    ]);
    let r = rows(&k0);
    assert_eq!(r.len(), 16);
    assert!(r.iter().all(|row| row[2] == 0.7));

    let (one, two) = (tmp.path().join("1d"), tmp.path().join("2d"));
    let taps = "0.3,-1.2,0.45";
    ok(&[
        "freq",
        "--taps",
        taps,
        "--resolution",
        "9",
        "--lambda-min",
        "-1",
        "--lambda-max",
        "2",
        "--out",
        p(&one),
    ]);
    ok(&[
        "freq",
        "--taps",
        taps,
        "--dims",
        "2",
        "--resolution",
        "9",
        "--lambda-min",
        "-1",
        "--lambda-max",
        "2",
        "--out",
        p(&two),
    ]);
    let (r1, r2) = (rows(&one), rows(&two));
    assert_eq!((r1.len(), r2.len()), (9, 81));
    for row in r2.iter().filter(|row| row[0] == row[1]) {
        let uni = r1.iter().find(|u| u[0] == row[0]).unwrap();
        assert!((uni[1] - row[2]).abs() <= 1e-12);
    }
    assert_eq!(
        svnn(&["freq", "--taps", "1", "--dims", "3", "--out", p(&one)])
            .status
            .code(),
        Some(2)
    );
}
