use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flowbridge_core::checkpoint::{load_model, trainer_checkpoint, trainer_from_checkpoint, Checkpoint};
use flowbridge_core::objectives::{TrainData, TrainStats, Trainer};
use flowbridge_core::{FlowModel, RngStream, Tensor, TissueLabel};
use flowbridge_eval::{run_downstream_eval, transfer_sim_to_real, EvalConfig, EvalInputs, TrainSource};
use flowbridge_spectra::{generate_benchmark, load_dataset, save_dataset, SpectralDataset};
use serde_json::Value;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::manifest::{DirLock, Manifest, MANIFEST};

pub const SIM: &str = "sim.csv";
pub const REAL_TRAIN: &str = "real_train.csv";
pub const REAL_TEST: &str = "real_test.csv";
pub const REAL_TRAIN_LABELS: &str = "real_train_labels.csv";
pub const FINAL_CHECKPOINT: &str = "model.cinn";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TRAIN_STATS: &str = "train_stats.csv";
pub const TRANSFERRED: &str = "transferred.csv";

fn log(msg: impl AsRef<str>) {
    eprintln!("[flowbridge] {}", msg.as_ref());
}

fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut s = String::from("class\n");
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("class") {
        return Err(CliError::Data(format!("{}: expected header 'class'", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::Data(format!("{}: line {}: bad class '{l}'", path.display(), i + 2)))
        })
        .collect()
}

/// Loads the real training split with labels restored from the sidecar file.
pub fn load_labeled_real_train(data_dir: &Path) -> Result<SpectralDataset> {
    let mut real = load_dataset(&data_dir.join(REAL_TRAIN))?;
    let labels = read_labels(&data_dir.join(REAL_TRAIN_LABELS))?;
    if labels.len() != real.len() {
        return Err(CliError::Data(format!(
            "{} has {} labels for {} spectra",
            REAL_TRAIN_LABELS,
            labels.len(),
            real.len()
        )));
    }
    real.labels = labels.into_iter().map(Some).collect();
    real.validate()?;
    Ok(real)
}

fn named(dir: &Path, names: &[&str]) -> Vec<(String, PathBuf)> {
    names.iter().map(|n| (n.to_string(), dir.join(n))).collect()
}

pub struct GenerateArgs<'a> {
    pub config: &'a PipelineConfig,
    pub out: &'a Path,
    pub force: bool,
}

/// Writes the simulated, pseudo-real training and pseudo-real test splits.
/// Labels of the training split go to a sidecar file that only evaluation reads.
pub fn generate_data(args: GenerateArgs<'_>) -> Result<()> {
    let cfg = args.config;
    for w in cfg.validate()? {
        log(format!("warning: {w}"));
    }
    let _lock = DirLock::acquire(args.out, args.force)?;
    let t = Instant::now();
    let b = generate_benchmark(&cfg.benchmark, &RngStream::new(cfg.benchmark.seed))?;
    log(format!(
        "generated {} sim / {} real / {} test spectra in {:.1}s (kNN threshold {:.4e})",
        b.sim.len(),
        b.real_train.len(),
        b.test.len(),
        t.elapsed().as_secs_f64(),
        b.filter_threshold
    ));
    save_dataset(&b.sim, &args.out.join(SIM))?;
    save_dataset(&b.real_train, &args.out.join(REAL_TRAIN))?;
    save_dataset(&b.test, &args.out.join(REAL_TEST))?;
    write_labels(&b.hidden_labels, &args.out.join(REAL_TRAIN_LABELS))?;

    let mut m = Manifest::new("generate-data", cfg.seed, &cfg.benchmark);
    m.arg("filter_threshold", b.filter_threshold).arg("warnings", &b.warnings);
    m.outputs(args.out, &[SIM, REAL_TRAIN, REAL_TEST, REAL_TRAIN_LABELS])?;
    m.write(&args.out.join(MANIFEST))
}

pub struct TrainArgs<'a> {
    pub config: &'a PipelineConfig,
    pub data: &'a Path,
    pub out: &'a Path,
    pub epochs: Option<usize>,
    pub resume: Option<&'a Path>,
    pub force: bool,
}

fn stack(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<Tensor<f64>> {
    let data = [a.data(), b.data()].concat();
    Tensor::new(vec![a.rows() + b.rows(), a.cols()], data).map_err(|e| CliError::Data(e.to_string()))
}

/// Trains the flow on simulated and unlabeled pseudo-real spectra.
pub fn train(args: TrainArgs<'_>) -> Result<()> {
    let mut cfg = args.config.clone();
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let sim = load_dataset(&args.data.join(SIM))?;
    let real = load_dataset(&args.data.join(REAL_TRAIN))?;
    sim.same_grid(&real)?;
    let tissue: Vec<TissueLabel> = sim.required_labels()?.into_iter().map(TissueLabel::Class).collect();

    let mut model = FlowModel::<f64>::build(cfg.model.clone(), &RngStream::new(cfg.seed).derive("model-init"))?;
    if model.dim() != sim.dim() {
        return Err(CliError::Data(format!(
            "model expects {} wavelengths, data has {}",
            model.dim(),
            sim.dim()
        )));
    }
    if let Some(bad) = tissue.iter().find(|t| !matches!(t, TissueLabel::Class(c) if *c < cfg.model.tissue_classes)) {
        return Err(CliError::Data(format!("tissue label {bad:?} outside the model's classes")));
    }

    let _lock = DirLock::acquire(args.out, args.force)?;
    let mut trainer = match args.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.spec()? != cfg.model {
                return Err(CliError::Usage(format!("{} was trained with a different model spec", path.display())));
            }
            let t = trainer_from_checkpoint::<f64>(&ck, Some(cfg.train.clone()))?;
            log(format!("resuming from epoch {}", t.epoch));
            t
        }
        None => {
            model.fit_standardizer(&stack(&sim.spectra, &real.spectra)?)?;
            Trainer::new(model, cfg.train.clone())?
        }
    };

    let ck_dir = args.out.join(CHECKPOINT_DIR);
    let every = cfg.train.checkpoint_every;
    let total = cfg.train.epochs;
    let data = TrainData {
        sim: &sim.spectra,
        sim_tissue: &tissue,
        real: &real.spectra,
    };
    let mut stats = TrainStats::default();
    let t = Instant::now();
    let outcome = trainer.run(&data, &mut stats, |tr: &Trainer<f64>| -> Result<()> {
        log(format!("epoch {}/{total} ({:.1}s)", tr.epoch, t.elapsed().as_secs_f64()));
        if every > 0 && tr.epoch % every == 0 {
            fs::create_dir_all(&ck_dir).map_err(|e| CliError::io(&ck_dir, e))?;
            trainer_checkpoint(tr).save(&ck_dir.join(format!("epoch_{:04}.cinn", tr.epoch)))?;
        }
        Ok(())
    });
    let stats_path = args.out.join(TRAIN_STATS);
    fs::write(&stats_path, stats.to_csv()).map_err(|e| CliError::io(&stats_path, e))?;
    outcome?;
    trainer_checkpoint(&trainer).save(&args.out.join(FINAL_CHECKPOINT))?;

    let mut m = Manifest::new("train", cfg.seed, &cfg);
    m.inputs(&named(args.data, &[SIM, REAL_TRAIN]))?;
    m.arg("epochs", total).arg("resumed_from", args.resume.map(|p| p.display().to_string()));
    m.outputs(args.out, &[FINAL_CHECKPOINT])?;
    m.write(&args.out.join(MANIFEST))
}

pub struct TransferArgs<'a> {
    pub checkpoint: &'a Path,
    pub input: &'a Path,
    pub out: &'a Path,
}

/// Maps a labeled simulated dataset into the real domain.
pub fn transfer(args: TransferArgs<'_>) -> Result<()> {
    let model = load_model::<f64>(args.checkpoint)?;
    let ds = load_dataset(args.input)?;
    let t = Instant::now();
    let out = transfer_sim_to_real(&model, &ds)?;
    log(format!("transferred {} spectra in {:.1}s", out.len(), t.elapsed().as_secs_f64()));
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_dataset(&out, args.out)?;

    let mut m = Manifest::new("transfer", 0, &model.spec());
    m.inputs(&[
        ("checkpoint".into(), args.checkpoint.to_path_buf()),
        ("input".into(), args.input.to_path_buf()),
    ])?;
    let name = args.out.file_name().and_then(|n| n.to_str()).unwrap_or(TRANSFERRED).to_string();
    let dir = args.out.parent().unwrap_or(Path::new("."));
    m.outputs(dir, &[&name])?;
    let mut mpath = args.out.as_os_str().to_owned();
    mpath.push(".manifest.json");
    m.write(Path::new(&mpath))
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub data_dir: &'a Path,
    pub out: &'a Path,
    /// Precomputed transfer of the simulated split.
    pub transferred: Option<&'a Path>,
    pub config: &'a EvalConfig,
    pub force: bool,
}

pub const EVAL_OUTPUTS: [&str; 7] = [
    "metrics.csv",
    "wavelength_diff.csv",
    "pca_coords.csv",
    "report.json",
    "pca.svg",
    "wavelength_diff.svg",
    "metrics.svg",
];

/// Scores forests trained on simulated, transferred and real spectra.
pub fn eval(args: EvalArgs<'_>) -> Result<()> {
    let model = load_model::<f64>(args.checkpoint)?;
    let sim = load_dataset(&args.data_dir.join(SIM))?;
    let test = load_dataset(&args.data_dir.join(REAL_TEST))?;
    test.required_labels()?;
    let real = load_labeled_real_train(args.data_dir)?;
    let transferred = args.transferred.map(load_dataset).transpose()?;
    let _lock = DirLock::acquire(args.out, args.force)?;
    let inputs = EvalInputs {
        sim: &sim,
        transferred: transferred.as_ref(),
        real_train: &real,
        test: &test,
    };
    let t = Instant::now();
    let report = run_downstream_eval(&model, inputs, args.config)?;
    log(format!("evaluated in {:.1}s", t.elapsed().as_secs_f64()));
    for m in &report.metrics {
        log(format!("{:>12}: BA {:.4}  AUROC {:.4}  F1 {:.4}", m.source.as_str(), m.ba, m.auroc, m.f1));
    }
    for w in &report.warnings {
        log(format!("warning: {w}"));
    }
    report.write(args.out)?;

    let mut m = Manifest::new("eval", args.config.seed, args.config);
    let mut files = named(args.data_dir, &[SIM, REAL_TRAIN, REAL_TRAIN_LABELS, REAL_TEST]);
    files.push(("checkpoint".into(), args.checkpoint.to_path_buf()));
    if let Some(p) = args.transferred {
        files.push(("transferred".into(), p.to_path_buf()));
    }
    m.inputs(&files)?;
    // report.json carries wall-clock runtimes, so it is left out of the hashes
    let hashed: Vec<&str> = EVAL_OUTPUTS.iter().copied().filter(|n| *n != "report.json").collect();
    m.outputs(args.out, &hashed)?;
    m.write(&args.out.join(MANIFEST))
}

fn parse_metrics(text: &str) -> Result<Vec<(String, [f64; 3])>> {
    let mut lines = text.lines();
    if lines.next() != Some("source,ba,auroc,f1") {
        return Err(CliError::Data("metrics.csv: unexpected header".into()));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| f.get(i).and_then(|v| v.parse::<f64>().ok());
            match (f.first(), num(1), num(2), num(3)) {
                (Some(s), Some(a), Some(b), Some(c)) if f.len() == 4 => Ok((s.to_string(), [a, b, c])),
                _ => Err(CliError::Data(format!("metrics.csv: bad row '{l}'"))),
            }
        })
        .collect()
}

/// Renders `report.md` from the files written by [`eval`].
pub fn report(eval_dir: &Path) -> Result<String> {
    let read = |name: &str| {
        let p = eval_dir.join(name);
        fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
    };
    let metrics = parse_metrics(&read("metrics.csv")?)?;
    let summary: Value = serde_json::from_str(&read("report.json")?)
        .map_err(|e| CliError::Data(format!("report.json: {e}")))?;
    let get = |src: TrainSource| metrics.iter().find(|(s, _)| s == src.as_str()).map(|(_, v)| *v);
    let (Some(sim), Some(tr), Some(real)) = (get(TrainSource::Sim), get(TrainSource::Transferred), get(TrainSource::Real))
    else {
        return Err(CliError::Data("metrics.csv must list sim, transferred and real".into()));
    };

    let mut md = String::from("# Simulated-to-real transfer report\n\n");
    md.push_str("## Downstream classification\n\n");
    md.push_str("Forests trained on each source, scored on the held-out pseudo-real split.\n\n");
    md.push_str("| training data | BA | AUROC | F1 |\n|---|---|---|---|\n");
    for (s, v) in &metrics {
        let _ = writeln!(md, "| {s} | {:.4} | {:.4} | {:.4} |", v[0], v[1], v[2]);
    }
    md.push_str("\nOrderings (sim < transferred <= real):\n\n");
    for (i, name) in ["BA", "AUROC", "F1"].iter().enumerate() {
        let holds = sim[i] < tr[i] && tr[i] <= real[i];
        let _ = writeln!(
            md,
            "- {name}: transferred - sim = {:+.4}, real - transferred = {:+.4} ({})",
            tr[i] - sim[i],
            real[i] - tr[i],
            if holds { "holds" } else { "does not hold" }
        );
    }
    md.push_str("\n## Realism\n\n");
    if let Some(w) = summary.get("diff_win_fraction").and_then(Value::as_f64) {
        let _ = writeln!(
            md,
            "Transferred spectra are closer to the pseudo-real class means than raw simulations at {:.1}% of wavelengths.\n",
            100.0 * w
        );
    }
    if let Some(r) = summary.pointer("/pca/explained_variance_ratio").and_then(Value::as_array) {
        let r: Vec<String> = r.iter().filter_map(Value::as_f64).map(|v| format!("{:.1}%", 100.0 * v)).collect();
        let _ = writeln!(md, "PCA fitted on pseudo-real spectra, explained variance: {}.\n", r.join(", "));
    }
    md.push_str("![PCA embedding](pca.svg)\n\n![Per-wavelength difference](wavelength_diff.svg)\n\n![Metrics](metrics.svg)\n");
    if let Some(w) = summary.get("warnings").and_then(Value::as_array).filter(|w| !w.is_empty()) {
        md.push_str("\n## Warnings\n\n");
        for x in w {
            let _ = writeln!(md, "- {}", x.as_str().unwrap_or_default());
        }
    }
    let path = eval_dir.join("report.md");
    fs::write(&path, &md).map_err(|e| CliError::io(&path, e))?;
    Ok(md)
}

pub struct RunArgs<'a> {
    pub config: &'a PipelineConfig,
    pub out: &'a Path,
    pub force: bool,
}

/// generate-data, train, transfer, eval and report in one go.
pub fn run(args: RunArgs<'_>) -> Result<()> {
    let cfg = args.config;
    cfg.validate()?;
    let _lock = DirLock::acquire(args.out, args.force)?;
    let t = Instant::now();
    let (data, train_dir, eval_dir) = (args.out.join("data"), args.out.join("train"), args.out.join("eval"));
    let config_path = args.out.join("config.json");
    fs::write(&config_path, cfg.to_canonical_json() + "\n").map_err(|e| CliError::io(&config_path, e))?;
    generate_data(GenerateArgs {
        config: cfg,
        out: &data,
        force: args.force,
    })?;
    train(TrainArgs {
        config: cfg,
        data: &data,
        out: &train_dir,
        epochs: None,
        resume: None,
        force: args.force,
    })?;
    let ck = train_dir.join(FINAL_CHECKPOINT);
    let transferred = args.out.join(TRANSFERRED);
    transfer(TransferArgs {
        checkpoint: &ck,
        input: &data.join(SIM),
        out: &transferred,
    })?;
    eval(EvalArgs {
        checkpoint: &ck,
        data_dir: &data,
        out: &eval_dir,
        transferred: Some(&transferred),
        config: &cfg.eval,
        force: args.force,
    })?;
    report(&eval_dir)?;
    log(format!("pipeline finished in {:.1}s", t.elapsed().as_secs_f64()));
    Ok(())
}
