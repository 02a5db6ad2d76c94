use std::time::Instant;

use flowbridge_core::{RngStream, Tensor};
use flowbridge_spectra::filter::nearest_rank;
use flowbridge_spectra::simulate::MIN_REFLECTANCE;
use flowbridge_spectra::{
    filter_by_threshold, generate_benchmark, knn_distances, knn_plausibility_filter, load_dataset, make_pseudo_real,
    save_dataset, simulate_spectrum, BenchmarkConfig, ClassConfig, DataError, DatasetDomain, DatasetMeta,
    DistortionConfig, FilterConfig, GridConfig, LayerParams, LayerRanges, SpectralDataset, TissueParams,
};
use proptest::prelude::*;

fn small(n_sim: usize, n_real: usize, n_test: usize) -> BenchmarkConfig {
    BenchmarkConfig {
        n_sim,
        n_real,
        n_test,
        filter: FilterConfig {
            k: 3,
            quantile: 0.8,
            reference: 300,
        },
        ..BenchmarkConfig::default()
    }
}

fn dataset(rows: Vec<Vec<f64>>, domain: DatasetDomain) -> SpectralDataset {
    let d = rows[0].len();
    let grid = (0..d).map(|i| 500.0 + i as f64).collect();
    let labels = (0..rows.len()).map(|i| Some(i % 2)).collect();
    SpectralDataset::new(grid, Tensor::from_rows(&rows).unwrap(), labels, domain, DatasetMeta::default()).unwrap()
}

#[test]
fn noise_moment_matches_sigma() {
    let cfg = DistortionConfig {
        noise_sigma: 0.01,
        ..DistortionConfig::identity()
    };
    let s = vec![0.5; 64];
    let n = 10_000;
    let mut sums = vec![(0.0, 0.0); 64];
    let base = RngStream::new(3);
    for i in 0..n {
        let y = make_pseudo_real(&s, &cfg, &mut base.derive_index(i));
        for (acc, (a, b)) in sums.iter_mut().zip(y.iter().zip(&s)) {
            acc.0 += a - b;
            acc.1 += (a - b) * (a - b);
        }
    }
    for (s1, s2) in sums {
        let mean = s1 / n as f64;
        let std = (s2 / n as f64 - mean * mean).sqrt();
        assert!((std - 0.01).abs() < 0.001, "std {std}");
    }
}

#[test]
fn planted_outliers_are_removed() {
    let mut rng = RngStream::new(5);
    let sigma = 0.02;
    let real: Vec<Vec<f64>> = (0..400).map(|_| (0..16).map(|_| 0.4 + sigma * rng.normal()).collect()).collect();
    let mut sim: Vec<Vec<f64>> = (0..900).map(|_| (0..16).map(|_| 0.4 + sigma * rng.normal()).collect()).collect();
    let planted = 100;
    for _ in 0..planted {
        sim.push((0..16).map(|_| 0.4 + 10.0 * sigma + sigma * rng.normal()).collect());
    }
    let real = dataset(real, DatasetDomain::PseudoReal);
    let sim = dataset(sim, DatasetDomain::Sim);
    let dist = knn_distances(&sim, &real, 5).unwrap();
    let (kept, threshold) = knn_plausibility_filter(&sim, &real, 5, 0.9).unwrap();
    assert!(dist[900..].iter().all(|&d| d > threshold));
    assert_eq!(kept.len(), 900);
}

#[test]
fn exact_copies_survive_median_filter() {
    let mut rng = RngStream::new(6);
    let real: Vec<Vec<f64>> = (0..50).map(|_| (0..8).map(|_| rng.uniform()).collect()).collect();
    let mut sim = real[..10].to_vec();
    sim.extend((0..30).map(|_| (0..8).map(|_| rng.uniform()).collect::<Vec<_>>()));
    let (kept, _) = knn_plausibility_filter(
        &dataset(sim.clone(), DatasetDomain::Sim),
        &dataset(real, DatasetDomain::PseudoReal),
        1,
        0.5,
    )
    .unwrap();
    for copy in &sim[..10] {
        assert!((0..kept.len()).any(|i| kept.row(i) == copy.as_slice()));
    }
}

#[test]
fn k_larger_than_real_set_is_an_error() {
    let a = dataset(vec![vec![0.1, 0.2]; 3], DatasetDomain::Sim);
    let b = dataset(vec![vec![0.1, 0.2]; 2], DatasetDomain::PseudoReal);
    assert!(matches!(knn_plausibility_filter(&a, &b, 3, 0.5), Err(DataError::Config(_))));
}

#[test]
fn filtering_twice_at_the_same_threshold_removes_nothing() {
    let b = generate_benchmark(&small(300, 300, 10), &RngStream::new(2)).unwrap();
    let cand = b.sim.clone();
    let (once, t) = knn_plausibility_filter(&cand, &b.real_train, 3, 0.7).unwrap();
    let twice = filter_by_threshold(&once, &b.real_train, 3, t).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn nearest_centroid_separates_two_blood_volume_classes() {
    let mut cfg = small(600, 50, 50);
    let layers = |v_hb| {
        vec![LayerRanges {
            v_hb,
            ..LayerRanges::FULL
        }]
    };
    cfg.classes = vec![
        ClassConfig {
            name: "low".into(),
            layers: layers([0.0, 0.02]),
        },
        ClassConfig {
            name: "high".into(),
            layers: layers([0.15, 0.3]),
        },
    ];
    cfg.filter.quantile = 1.0;
    let b = generate_benchmark(&cfg, &RngStream::new(8)).unwrap();
    let (train, test) = (400, 200);
    let labels = b.sim.required_labels().unwrap();
    let d = b.sim.dim();
    // log reflectance makes blood absorption additive
    let feat = |i: usize| b.sim.row(i).iter().map(|v| v.ln()).collect::<Vec<_>>();
    let mut centroids = vec![vec![0.0; d]; 2];
    let mut counts = [0usize; 2];
    for i in 0..train {
        counts[labels[i]] += 1;
        for (c, v) in centroids[labels[i]].iter_mut().zip(feat(i)) {
            *c += v;
        }
    }
    for (c, n) in centroids.iter_mut().zip(counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut correct = [0usize; 2];
    let mut support = [0usize; 2];
    for i in train..train + test {
        let f = feat(i);
        let dist = |c: &Vec<f64>| c.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let pred = if dist(&centroids[0]) <= dist(&centroids[1]) { 0 } else { 1 };
        support[labels[i]] += 1;
        correct[labels[i]] += (pred == labels[i]) as usize;
    }
    let ba = (0..2).map(|k| correct[k] as f64 / support[k] as f64).sum::<f64>() / 2.0;
    assert!(ba > 0.9, "BA {ba}");
}

#[test]
fn fixed_seed_gives_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(200, 150, 40);
    let mut hashes = vec![];
    for run in 0..2 {
        let b = generate_benchmark(&cfg, &RngStream::new(11)).unwrap();
        let mut bytes = vec![];
        for (name, ds) in [("sim", &b.sim), ("real", &b.real_train), ("test", &b.test)] {
            let p = dir.path().join(format!("{name}{run}.csv"));
            save_dataset(ds, &p).unwrap();
            bytes.push(std::fs::read(&p).unwrap());
        }
        hashes.push(bytes);
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn generation_is_independent_of_thread_count() {
    let cfg = small(150, 100, 20);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| generate_benchmark(&cfg, &RngStream::new(4)).unwrap());
    let b = four.install(|| generate_benchmark(&cfg, &RngStream::new(4)).unwrap());
    assert_eq!(a, b);
}

#[test]
fn saved_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let b = generate_benchmark(&small(100, 80, 30), &RngStream::new(1)).unwrap();
    for ds in [&b.sim, &b.real_train, &b.test] {
        let p = dir.path().join("set.csv");
        save_dataset(ds, &p).unwrap();
        assert_eq!(&load_dataset(&p).unwrap(), ds);
    }
}

#[test]
fn missing_column_file_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "domain,w500,w510\nsim,0.1,0.2\n").unwrap();
    match load_dataset(&p) {
        Err(DataError::MissingColumn { column, .. }) => assert_eq!(column, "class"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn large_file_loads_quickly() {
    let mut rng = RngStream::new(0);
    let n = 20_000;
    let rows = Tensor::from_fn(&[n, 64], |_| rng.uniform().max(MIN_REFLECTANCE));
    let grid = GridConfig::default().wavelengths().unwrap();
    let ds = SpectralDataset::new(grid, rows, vec![Some(1); n], DatasetDomain::Sim, DatasetMeta::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("big.csv");
    save_dataset(&ds, &p).unwrap();
    let start = Instant::now();
    let back = load_dataset(&p).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(back.len(), n);
    assert!(secs < 2.0, "{secs} s");
}

#[test]
fn nearest_rank_quantile_one_is_maximum() {
    assert_eq!(nearest_rank(&[3.0, 9.0, 1.0], 1.0), 9.0);
}

fn layer() -> impl Strategy<Value = LayerParams> {
    let f = LayerRanges::FULL;
    (
        f.v_hb[0]..=f.v_hb[1],
        f.so2[0]..=f.so2[1],
        f.a_mie[0]..=f.a_mie[1],
        f.b_mie[0]..=f.b_mie[1],
        f.d[0]..=f.d[1],
    )
        .prop_map(|(v_hb, so2, a_mie, b_mie, d)| LayerParams {
            v_hb,
            so2,
            a_mie,
            b_mie,
            d,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spectra_lie_in_unit_interval(layers in prop::collection::vec(layer(), 1..=3)) {
        let grid = GridConfig::default().wavelengths().unwrap();
        let s = simulate_spectrum(&TissueParams { layers, class: 0 }, &grid).unwrap();
        prop_assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn reflectance_is_monotone_in_blood_volume(
        layers in prop::collection::vec(layer(), 1..=3),
        a in 0.0f64..=0.3,
        b in 0.0f64..=0.3,
    ) {
        let grid = GridConfig::default().wavelengths().unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut p = TissueParams { layers, class: 0 };
        p.layers[0].v_hb = lo;
        let r_lo = simulate_spectrum(&p, &grid).unwrap();
        p.layers[0].v_hb = hi;
        let r_hi = simulate_spectrum(&p, &grid).unwrap();
        prop_assert!(r_hi.iter().zip(&r_lo).all(|(h, l)| h <= l));
    }

    #[test]
    fn pseudo_real_stays_in_unit_interval(seed in any::<u64>(), id in 0u32..3, level in 0.0f64..1.0) {
        let cfg = DistortionConfig::preset(id).unwrap();
        let s = vec![level.max(MIN_REFLECTANCE); 64];
        let y = make_pseudo_real(&s, &cfg, &mut RngStream::new(seed));
        prop_assert!(y.iter().all(|&v| v > 0.0 && v <= 1.0));
    }
}
