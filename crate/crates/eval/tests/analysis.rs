use flowbridge_core::{FlowModel, ModelSpec, RngStream, Tensor};
use flowbridge_eval::{
    pca_fit, per_wavelength_abs_diff, rf_train, run_downstream_eval, transfer_real_to_sim, transfer_sim_to_real,
    EvalConfig, EvalInputs, ForestConfig, TrainSource,
};
use flowbridge_spectra::{generate_benchmark, BenchmarkConfig, DatasetDomain, FilterConfig, SpectralDataset};

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn small_benchmark(seed: u64) -> (SpectralDataset, SpectralDataset, SpectralDataset) {
    let cfg = BenchmarkConfig {
        n_sim: 1500,
        n_real: 1500,
        n_test: 600,
        filter: FilterConfig {
            k: 5,
            quantile: 0.8,
            reference: 500,
        },
        ..BenchmarkConfig::default()
    };
    let b = generate_benchmark(&cfg, &RngStream::new(seed)).unwrap();
    let mut real = b.real_train.clone();
    real.labels = b.hidden_labels.iter().map(|&c| Some(c)).collect();
    (b.sim, real, b.test)
}

#[test]
fn pca_ratios_match_independent_eigensolver() {
    let (_, real, _) = small_benchmark(1);
    let x = &real.spectra;
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64).collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| (0..n).map(|i| (x.row(i)[a] - mean[a]) * (x.row(i)[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    let ev = jacobi_eigenvalues(cov);
    let total: f64 = ev.iter().sum();
    let (pca, _) = pca_fit(x, 5).unwrap();
    for (r, e) in pca.explained_variance_ratio.iter().zip(&ev) {
        assert!((r - e / total).abs() < 1e-8, "{r} vs {}", e / total);
    }
}

#[test]
fn pca_basis_is_orthonormal_and_complete() {
    let mut rng = RngStream::new(2);
    let x = Tensor::from_fn(&[200, 6], |i| rng.normal() * (1.0 + (i % 6) as f64));
    let (pca, w) = pca_fit(&x, 6).unwrap();
    assert!(w.is_empty());
    for a in 0..6 {
        for b in 0..6 {
            let dot: f64 = pca.components[a].iter().zip(&pca.components[b]).map(|(u, v)| u * v).sum();
            assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }
    let total: f64 = pca.explained_variance_ratio.iter().sum();
    assert!((total - 1.0).abs() < 1e-10);
    assert!(pca.explained_variance_ratio.windows(2).all(|r| r[0] >= r[1]));
    let back = pca.reconstruct(&pca.project(&x).unwrap()).unwrap();
    assert!(back.max_abs_diff(&x) < 1e-8);
}

#[test]
fn forest_agrees_with_reference_implementation() {
    // scikit-learn RandomForestClassifier(n_estimators=100), defaults, mean over 20 seeds
    const REFERENCE_ACCURACY: f64 = 0.8333;
    let text = include_str!("data/toy2d.csv");
    let (mut tr, mut ytr, mut te, mut yte) = (vec![], vec![], vec![], vec![]);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let row = vec![f[1].parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap()];
        let y: usize = f[3].parse().unwrap();
        if f[0] == "train" {
            tr.push(row);
            ytr.push(y);
        } else {
            te.push(row);
            yte.push(y);
        }
    }
    let forest = rf_train(&Tensor::from_rows(&tr).unwrap(), &ytr, &ForestConfig::default(), &RngStream::new(0)).unwrap();
    let pred = forest.predict(&Tensor::from_rows(&te).unwrap()).unwrap();
    let acc = pred.iter().zip(&yte).filter(|(a, b)| a == b).count() as f64 / yte.len() as f64;
    assert!((acc - REFERENCE_ACCURACY).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn forest_is_deterministic_across_thread_counts() {
    let mut rng = RngStream::new(5);
    let y: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let x = Tensor::from_fn(&[300, 4], |i| rng.normal() + y[i / 4] as f64);
    let cfg = ForestConfig {
        n_trees: 20,
        ..ForestConfig::default()
    };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| rf_train(&x, &y, &cfg, &RngStream::new(9)).unwrap().predict_proba(&x).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn untrained_transfer_is_identity_and_round_trips() {
    let (sim, _, _) = small_benchmark(3);
    let model = FlowModel::<f64>::build(ModelSpec::spectral(64, 3), &RngStream::new(0)).unwrap();
    let moved = transfer_sim_to_real(&model, &sim).unwrap();
    assert_eq!(moved.spectra, sim.spectra);
    assert_eq!(moved.labels, sim.labels);
    assert_eq!(moved.domain, DatasetDomain::Transferred);
    let back = transfer_real_to_sim(&model, &moved).unwrap();
    assert_eq!(back.spectra, sim.spectra);
}

#[test]
fn unlabeled_input_cannot_be_transferred() {
    let (_, real, _) = small_benchmark(4);
    let model = FlowModel::<f64>::build(ModelSpec::spectral(64, 3), &RngStream::new(0)).unwrap();
    assert!(transfer_sim_to_real(&model, &real.unlabeled()).is_err());
    let wrong = FlowModel::<f64>::build(ModelSpec::spectral(32, 3), &RngStream::new(0)).unwrap();
    assert!(transfer_sim_to_real(&wrong, &real).is_err());
}

#[test]
fn wavelength_diff_of_offset_sets() {
    let (sim, _, _) = small_benchmark(5);
    let mut shifted = sim.clone();
    shifted.spectra = sim.spectra.map(|v| v + 0.125);
    for per_class in [false, true] {
        let d = per_wavelength_abs_diff(&sim, &shifted, per_class).unwrap();
        assert!(d.iter().all(|v| (v - 0.125).abs() < 1e-12));
        assert!(per_wavelength_abs_diff(&sim, &sim, per_class).unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn report_has_three_sources_and_is_reproducible() {
    let (sim, real, test) = small_benchmark(6);
    let model = FlowModel::<f64>::build(ModelSpec::spectral(64, 3), &RngStream::new(0)).unwrap();
    let cfg = EvalConfig {
        forest: ForestConfig {
            n_trees: 15,
            ..ForestConfig::default()
        },
        ..EvalConfig::default()
    };
    let inputs = EvalInputs {
        sim: &sim,
        transferred: None,
        real_train: &real,
        test: &test,
    };
    let a = run_downstream_eval(&model, inputs, &cfg).unwrap();
    let b = run_downstream_eval(&model, inputs, &cfg).unwrap();
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert_eq!(a.metrics.len(), 3);
    assert_eq!(a.metrics_csv().lines().count(), 4);
    for m in &a.metrics {
        for v in [m.ba, m.auroc, m.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    // identity transfer: transferred spectra equal the simulations
    assert_eq!(a.diff_sim, a.diff_transferred);
    assert!(a.metrics_for(TrainSource::Real).ba > 0.5);

    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    for f in ["metrics.csv", "wavelength_diff.csv", "pca_coords.csv", "report.json", "pca.svg", "wavelength_diff.svg", "metrics.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn missing_labels_or_empty_sets_are_rejected() {
    let (sim, real, test) = small_benchmark(7);
    let model = FlowModel::<f64>::build(ModelSpec::spectral(64, 3), &RngStream::new(0)).unwrap();
    let empty = sim.select(&[]);
    let cfg = EvalConfig::default();
    let bad = [
        EvalInputs { sim: &empty, transferred: None, real_train: &real, test: &test },
        EvalInputs { sim: &sim, transferred: None, real_train: &real, test: &test.unlabeled() },
    ];
    for inputs in bad {
        assert!(run_downstream_eval(&model, inputs, &cfg).is_err());
    }
}

#[test]
fn identity_distortion_closes_the_gap() {
    let cfg = BenchmarkConfig {
        n_sim: 3000,
        n_real: 3000,
        n_test: 1500,
        distortion_id: 0,
        filter: FilterConfig {
            k: 5,
            quantile: 0.8,
            reference: 500,
        },
        ..BenchmarkConfig::default()
    };
    let b = generate_benchmark(&cfg, &RngStream::new(10)).unwrap();
    let mut real = b.real_train.clone();
    real.labels = b.hidden_labels.iter().map(|&c| Some(c)).collect();
    let model = FlowModel::<f64>::build(ModelSpec::spectral(64, 3), &RngStream::new(0)).unwrap();
    let inputs = EvalInputs {
        sim: &b.sim,
        transferred: None,
        real_train: &real,
        test: &b.test,
    };
    let r = run_downstream_eval(&model, inputs, &EvalConfig::default()).unwrap();
    let ba: Vec<f64> = r.metrics.iter().map(|m| m.ba).collect();
    let spread = ba.iter().cloned().fold(f64::MIN, f64::max) - ba.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 0.03, "{ba:?}");
}
