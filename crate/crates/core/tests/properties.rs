use dabag::{
    accuracy, bayes_classify, calibrate, class_weights, dtm_hat, filter_anomalies, fit, fit_ensemble, inn_step,
    test_error, test_statistic, AnomalyConfig, BaggingMode, ClassDensity, ClassifierSpec, DaBaggingConfig, Dataset,
    GaussianMixtureOracle, Metric, ResampleConfig, RngStream,
};
use proptest::prelude::*;

fn labeled(points: &[(f64, f64)], labels: &[usize], classes: usize) -> Dataset {
    Dataset::labeled(points.iter().flat_map(|&(a, b)| [a, b]).collect(), 2, labels.to_vec(), classes).unwrap()
}

/// Labels over `classes` with every class present.
fn full_labels(raw: &[usize], classes: usize) -> Vec<usize> {
    let mut y: Vec<usize> = raw.iter().map(|v| v % classes + 1).collect();
    for (c, v) in y.iter_mut().enumerate().take(classes) {
        *v = c + 1;
    }
    y
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predictions_are_label_permutation_equivariant(
        pts in points(12..40),
        raw in prop::collection::vec(0usize..100, 40),
        queries in points(10..11),
        kind in 0usize..4,
        shift in 1usize..3,
    ) {
        let classes = 3;
        let y = full_labels(&raw[..pts.len()], classes);
        // cyclic relabeling ℓ -> σ(ℓ)
        let sigma = |l: usize| (l - 1 + shift) % classes + 1;
        let y2: Vec<usize> = y.iter().map(|&l| sigma(l)).collect();
        let spec = match kind {
            0 => ClassifierSpec::knn(1),
            1 => ClassifierSpec::Logistic { max_iter: 100, l2: 1e-2, tol: 1e-10 },
            2 => ClassifierSpec::Lda { ridge: 1e-6 },
            _ => ClassifierSpec::Tree { max_depth: 40, min_leaf: 1, max_features: None },
        };
        let a = fit(&spec, &labeled(&pts, &y, classes), &RngStream::new(0)).unwrap();
        let b = fit(&spec, &labeled(&pts, &y2, classes), &RngStream::new(0)).unwrap();
        for (qa, qb) in &queries {
            let x = [*qa, *qb];
            prop_assert_eq!(sigma(a.predict(&x, &RngStream::new(1)).unwrap()), b.predict(&x, &RngStream::new(1)).unwrap());
        }
    }

    #[test]
    fn bayes_rule_ignores_joint_prior_scaling(
        q in prop::collection::vec(0.05f64..1.0, 3),
        scale in 0.01f64..100.0,
        x in -3.0f64..10.0,
    ) {
        let classes = || vec![
            ClassDensity::gaussian(vec![0.0], vec![1.0]).unwrap(),
            ClassDensity::gaussian(vec![2.0], vec![2.0]).unwrap(),
            ClassDensity::gaussian(vec![5.0], vec![0.5]).unwrap(),
        ];
        let a = GaussianMixtureOracle::new(q.clone(), classes()).unwrap();
        let b = GaussianMixtureOracle::new(q.iter().map(|v| v * scale).collect(), classes()).unwrap();
        prop_assert_eq!(bayes_classify(&a, &[x]).unwrap(), bayes_classify(&b, &[x]).unwrap());
    }

    #[test]
    fn accuracy_and_error_sum_to_one(pairs in prop::collection::vec((1usize..5, 1usize..5), 1..200)) {
        let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let s = accuracy(&p, &t).unwrap() + test_error(&p, &t).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_ignores_row_order(
        pts in points(30..60),
        raw in prop::collection::vec(0usize..100, 60),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let y = full_labels(&raw[..pts.len()], 2);
        prop_assume!(y.iter().filter(|&&l| l == 1).count() >= 8 && y.iter().filter(|&&l| l == 2).count() >= 8);
        let d = labeled(&pts, &y, 2);
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.shuffle(&mut RngStream::new(perm_seed).rng());
        let shuffled = d.select(&order);
        let cfg = AnomalyConfig { k: 3, ..Default::default() };
        let m = Metric::euclidean();
        let a = calibrate(&d, &cfg, &m, &RngStream::new(11)).unwrap();
        let b = calibrate(&shuffled, &cfg, &m, &RngStream::new(11)).unwrap();
        prop_assert_eq!(a.thresholds, b.thresholds);
    }

    #[test]
    fn detector_is_monotone_beyond_the_data(
        pts in points(30..60),
        raw in prop::collection::vec(0usize..100, 60),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let y = full_labels(&raw[..pts.len()], 2);
        prop_assume!(y.iter().filter(|&&l| l == 1).count() >= 8 && y.iter().filter(|&&l| l == 2).count() >= 8);
        let d = labeled(&pts, &y, 2);
        let m = Metric::euclidean();
        let cal = calibrate(&d, &AnomalyConfig { k: 3, ..Default::default() }, &m, &RngStream::new(2)).unwrap();
        let n = pts.len() as f64;
        let c = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let radius = pts.iter().map(|p| ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt()).fold(0.0, f64::max);
        // past the radius every distance to the data grows along the ray
        let mut seen = false;
        for step in 0..60 {
            let s = radius * (1.0 + step as f64 * 0.15);
            let x = [c.0 + s * angle.cos(), c.1 + s * angle.sin()];
            let t = test_statistic(&x, &d, &cal, &m).unwrap();
            prop_assert!(!(seen && !t), "flipped back at s = {}", s);
            seen |= t;
        }
        prop_assert!(seen);
    }

    #[test]
    fn flagged_points_exceed_every_threshold(
        pts in points(30..60),
        raw in prop::collection::vec(0usize..100, 60),
        queries in points(1..40),
    ) {
        let y = full_labels(&raw[..pts.len()], 2);
        prop_assume!(y.iter().filter(|&&l| l == 1).count() >= 8 && y.iter().filter(|&&l| l == 2).count() >= 8);
        let d = labeled(&pts, &y, 2);
        let m = Metric::euclidean();
        let cfg = AnomalyConfig { k: 3, ..Default::default() };
        let cal = calibrate(&d, &cfg, &m, &RngStream::new(3)).unwrap();
        prop_assert!(cal.thresholds.iter().all(|&c| c >= 0.0));
        let test = Dataset::new(queries.iter().flat_map(|&(a, b)| [a * 2.0, b * 2.0]).collect(), 2).unwrap();
        let part = filter_anomalies(&test, &d, &cal, &m).unwrap();
        prop_assert_eq!(part.inliers.len() + part.anomalies.len(), test.n_rows());
        for &i in &part.anomalies {
            for l in 1..=2 {
                let class = d.select(&d.rows_of_class(l).unwrap());
                prop_assert!(dtm_hat(test.row(i), &class, 3, &m).unwrap() > cal.thresholds[l - 1]);
            }
        }
        for i in 0..test.n_rows() {
            prop_assert_eq!(test_statistic(test.row(i), &d, &cal, &m).unwrap(), part.anomalies.contains(&i));
        }
    }

    #[test]
    fn class_weights_live_on_the_simplex(
        pts in points(5..40),
        raw in prop::collection::vec(0usize..100, 40),
        k in 1usize..10,
        q in (-5.0f64..5.0, -5.0f64..5.0),
    ) {
        let y = full_labels(&raw[..pts.len()], 3);
        let d = labeled(&pts, &y, 3);
        let w = class_weights(&[q.0, q.1], &d, k, &Metric::euclidean(), &RngStream::new(0)).unwrap();
        let total: f64 = w.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for v in w.weights() {
            let scaled = v * w.k() as f64;
            prop_assert!(v >= 0.0 && (scaled - scaled.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn resampled_rows_are_copies(
        pts in points(4..30),
        raw in prop::collection::vec(0usize..100, 30),
        test_pts in points(1..15),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let y = full_labels(&raw[..pts.len()], 2);
        let d = labeled(&pts, &y, 2);
        let test = Dataset::new(test_pts.iter().flat_map(|&(a, b)| [a, b]).collect(), 2).unwrap();
        let cfg = ResampleConfig::default().with_k(k);
        let out = inn_step(&d, &test, &cfg, &Metric::euclidean(), &RngStream::new(seed)).unwrap();
        prop_assert_eq!(out.n_rows(), test.n_rows() * cfg.draws(d.n_rows(), test.n_rows()));
        let labels = d.labels().unwrap();
        for (row, &l) in out.rows().zip(out.labels().unwrap()) {
            prop_assert!((0..d.n_rows()).any(|i| d.row(i) == row && labels[i] == l));
        }
    }

    #[test]
    fn odd_two_class_ensembles_never_tie(
        pts in points(10..40),
        raw in prop::collection::vec(0usize..100, 40),
        half in 0usize..5,
        q in (-5.0f64..5.0, -5.0f64..5.0),
    ) {
        let y = full_labels(&raw[..pts.len()], 2);
        let d = labeled(&pts, &y, 2);
        let cfg = DaBaggingConfig::new(2 * half + 1, ClassifierSpec::tree(), BaggingMode::ClassicalBootstrap);
        let model = fit_ensemble(&d, &d.without_labels(), &cfg, &RngStream::new(half as u64)).unwrap();
        let counts = model.vote_counts(&[q.0, q.1], &RngStream::new(0)).unwrap();
        prop_assert_ne!(counts[0], counts[1]);
        let frac = model.vote_fraction(&[q.0, q.1], &RngStream::new(0)).unwrap();
        let want = if frac[1] > frac[0] { 2 } else { 1 };
        prop_assert_eq!(model.predict(&[q.0, q.1], &RngStream::new(0)).unwrap(), want);
    }
}
