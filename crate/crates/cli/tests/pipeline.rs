use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowbridge_cli::commands::{FINAL_CHECKPOINT, REAL_TEST, SIM};
use flowbridge_cli::config::default_model_spec;
use flowbridge_cli::manifest::Manifest;
use flowbridge_cli::PipelineConfig;
use flowbridge_core::checkpoint::{load_model, model_checkpoint, Precision};
use flowbridge_core::{FlowModel, RngStream, Tensor};
use flowbridge_spectra::{load_dataset, save_dataset, DatasetDomain, FilterConfig};

fn tiny_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.seed = 11;
    c.benchmark.n_sim = 240;
    c.benchmark.n_real = 240;
    c.benchmark.n_test = 120;
    c.benchmark.filter = FilterConfig {
        k: 5,
        quantile: 0.8,
        reference: 100,
    };
    c.model = default_model_spec();
    c.model.subnet_width = 16;
    c.train.epochs = 2;
    c.train.batch_size = 64;
    c.train.checkpoint_every = 1;
    c.train.discriminator.width = 16;
    c.eval.forest.n_trees = 10;
    c.resolved()
}

fn write_config(dir: &Path, c: &PipelineConfig) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, c.to_canonical_json()).unwrap();
    p
}

fn flowbridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowbridge")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = flowbridge(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates data under `root/data` and returns (config path, data dir).
fn setup(root: &Path) -> (PathBuf, PathBuf) {
    let cfg = write_config(root, &tiny_config());
    let data = root.join("data");
    ok(&["generate-data", "--config", s(&cfg), "--out", s(&data)]);
    (cfg, data)
}

#[test]
fn same_seed_gives_identical_files() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), &tiny_config());
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    ok(&["generate-data", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["generate-data", "--config", s(&cfg), "--out", s(&b)]);
    let ma = Manifest::load(&a.join("manifest.json")).unwrap();
    assert_eq!(ma.outputs.len(), 4);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    for name in ma.outputs.keys() {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = root.path().join("c");
    ok(&["generate-data", "--config", s(&cfg), "--out", s(&c), "--seed", "12"]);
    let mc = Manifest::load(&c.join("manifest.json")).unwrap();
    assert_ne!(ma.outputs[SIM], mc.outputs[SIM]);
}

#[test]
fn generated_splits_have_configured_sizes() {
    let root = tempfile::tempdir().unwrap();
    let (_, data) = setup(root.path());
    let sim = load_dataset(&data.join(SIM)).unwrap();
    let real = load_dataset(&data.join("real_train.csv")).unwrap();
    let test = load_dataset(&data.join(REAL_TEST)).unwrap();
    assert_eq!((sim.len(), real.len(), test.len()), (240, 240, 120));
    assert!(real.labels.iter().all(Option::is_none));
    assert!(test.labels.iter().all(Option::is_some));
}

#[test]
fn missing_config_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nope.json");
    let out = flowbridge(&["generate-data", "--config", s(&missing), "--out", s(&root.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let p = root.path().join("c.json");
    fs::write(&p, r#"{"seed": 1, "epochs": 3}"#).unwrap();
    let out = flowbridge(&["generate-data", "--config", s(&p), "--out", s(&root.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonempty_output_needs_force() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let again = flowbridge(&["generate-data", "--config", s(&cfg), "--out", s(&data)]);
    assert_eq!(again.status.code(), Some(2));
    ok(&["generate-data", "--config", s(&cfg), "--out", s(&data), "--force"]);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_flowbridge"))
        .args(["generate-data", "--out", s(&root.path().join("o"))])
        .env("FLOWBRIDGE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_epochs_checkpoint_equals_initialization() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let out = root.path().join("train");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--epochs", "0"]);
    let loaded = load_model::<f64>(&out.join(FINAL_CHECKPOINT)).unwrap();

    let c = tiny_config();
    let mut init = FlowModel::<f64>::build(c.model.clone(), &RngStream::new(c.seed).derive("model-init")).unwrap();
    let sim = load_dataset(&data.join(SIM)).unwrap();
    let real = load_dataset(&data.join("real_train.csv")).unwrap();
    let both = Tensor::new(vec![sim.len() + real.len(), sim.dim()], [sim.spectra.data(), real.spectra.data()].concat()).unwrap();
    init.fit_standardizer(&both).unwrap();
    assert_eq!(
        model_checkpoint(&loaded, Precision::F64).to_bytes(),
        model_checkpoint(&init, Precision::F64).to_bytes()
    );
}

#[test]
fn untrained_transfer_returns_input_values() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let train = root.path().join("train");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&train), "--epochs", "0"]);
    let moved = root.path().join("moved.csv");
    ok(&["transfer", "--checkpoint", s(&train.join(FINAL_CHECKPOINT)), "--in", s(&data.join(SIM)), "--out", s(&moved)]);
    let a = load_dataset(&data.join(SIM)).unwrap();
    let b = load_dataset(&moved).unwrap();
    assert!(b.spectra.max_abs_diff(&a.spectra) < 1e-12);
    assert_eq!(a.labels, b.labels);
    assert_eq!(b.domain, DatasetDomain::Transferred);
    assert!(root.path().join("moved.csv.manifest.json").exists());
}

#[test]
fn transfer_rejects_wrong_width() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let train = root.path().join("train");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&train), "--epochs", "0"]);
    let mut sim = load_dataset(&data.join(SIM)).unwrap();
    let keep: Vec<usize> = (0..32).collect();
    sim.wavelengths.truncate(32);
    sim.spectra = Tensor::from_fn(&[sim.len(), 32], |i| sim.spectra.row(i / 32)[keep[i % 32]]);
    let narrow = root.path().join("narrow.csv");
    save_dataset(&sim, &narrow).unwrap();
    let out = flowbridge(&[
        "transfer",
        "--checkpoint",
        s(&train.join(FINAL_CHECKPOINT)),
        "--in",
        s(&narrow),
        "--out",
        s(&root.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn grid_mismatch_fails_before_training() {
    let root = tempfile::tempdir().unwrap();
    let (_, data) = setup(root.path());
    let mut c = tiny_config();
    c.model.input_shape = flowbridge_core::InputShape::Sequence { length: 32, channels: 1 };
    let cfg = write_config(root.path(), &c);
    let out_dir = root.path().join("train");
    let out = flowbridge(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.join(FINAL_CHECKPOINT).exists());
    assert!(!out_dir.join("train_stats.csv").exists());
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let full = root.path().join("full");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&full)]);
    let half = root.path().join("half");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&half), "--epochs", "1"]);
    let resumed = root.path().join("resumed");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&resumed),
        "--resume",
        s(&half.join(FINAL_CHECKPOINT)),
    ]);
    assert_eq!(fs::read(full.join(FINAL_CHECKPOINT)).unwrap(), fs::read(resumed.join(FINAL_CHECKPOINT)).unwrap());
    assert!(full.join("checkpoints/epoch_0001.cinn").exists());
    assert!(full.join("checkpoints/epoch_0002.cinn").exists());
    let stats = fs::read_to_string(full.join("train_stats.csv")).unwrap();
    assert!(stats.lines().count() > 2);
    let m = Manifest::load(&full.join("manifest.json")).unwrap();
    assert_eq!(m.seed, 11);
    assert_eq!(m.inputs.len(), 2);
}

#[test]
fn eval_reports_three_sources_deterministically() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let train = root.path().join("train");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&train), "--epochs", "1"]);
    let ck = train.join(FINAL_CHECKPOINT);
    let (e1, e2) = (root.path().join("e1"), root.path().join("e2"));
    for e in [&e1, &e2] {
        ok(&["eval", "--checkpoint", s(&ck), "--data-dir", s(&data), "--out", s(e), "--config", s(&cfg)]);
    }
    let m1 = fs::read_to_string(e1.join("metrics.csv")).unwrap();
    assert_eq!(m1, fs::read_to_string(e2.join("metrics.csv")).unwrap());
    let rows: Vec<Vec<&str>> = m1.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["source", "ba", "auroc", "f1"]);
    assert_eq!(rows.len(), 4);
    let sources: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    assert_eq!(sources, ["sim", "transferred", "real"]);
    for r in &rows[1..] {
        assert_eq!(r.len(), 4);
        for v in &r[1..] {
            assert!((0.0..=1.0).contains(&v.parse::<f64>().unwrap()));
        }
    }
    let report = flowbridge(&["report", "--eval-dir", s(&e1)]);
    assert!(report.status.success());
    let md = fs::read_to_string(e1.join("report.md")).unwrap();
    assert!(md.contains("| transferred |"));
    for f in ["pca.svg", "wavelength_diff.svg", "metrics.svg", "pca_coords.csv", "wavelength_diff.csv"] {
        assert!(e1.join(f).exists(), "{f}");
    }
}

#[test]
fn eval_without_test_labels_is_a_data_error() {
    let root = tempfile::tempdir().unwrap();
    let (cfg, data) = setup(root.path());
    let train = root.path().join("train");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&train), "--epochs", "0"]);
    let test = load_dataset(&data.join(REAL_TEST)).unwrap();
    save_dataset(&test.unlabeled(), &data.join(REAL_TEST)).unwrap();
    let out = flowbridge(&[
        "eval",
        "--checkpoint",
        s(&train.join(FINAL_CHECKPOINT)),
        "--data-dir",
        s(&data),
        "--out",
        s(&root.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_every_stage() {
    let root = tempfile::tempdir().unwrap();
    let mut c = tiny_config();
    c.train.epochs = 1;
    let cfg = write_config(root.path(), &c);
    let out = root.path().join("run");
    ok(&["run", "--config", s(&cfg), "--out", s(&out)]);
    for f in [
        "config.json",
        "data/manifest.json",
        "train/model.cinn",
        "train/manifest.json",
        "transferred.csv",
        "transferred.csv.manifest.json",
        "eval/metrics.csv",
        "eval/report.md",
        "eval/manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join(".flowbridge.lock").exists());
}
