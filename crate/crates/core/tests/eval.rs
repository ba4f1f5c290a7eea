use dabag::ensemble::variance_vs_b;
use dabag::eval::aggregate;
use dabag::{
    gen_setting1, run_experiment, AnomalyConfig, BaggingMode, ClassifierSpec, DaBaggingConfig, ExperimentPlan, Method,
    MethodConfig, RngStream, Scenario, ScenarioSpec,
};

fn small_plan() -> ExperimentPlan {
    ExperimentPlan {
        scenarios: vec![
            ScenarioSpec::two_class(Scenario::Setting1, 120, 100, 0.2, 0.1, 4),
            ScenarioSpec::two_class(Scenario::Setting2, 120, 100, 0.5, 0.1, 5),
        ],
        methods: vec![
            MethodConfig::new(Method::DaBagging, ClassifierSpec::knn(3), 5),
            MethodConfig::new(Method::Bagging, ClassifierSpec::tree(), 5),
            MethodConfig::new(Method::Single, ClassifierSpec::lda(), 1),
        ],
        reps: 2,
        anomaly: Some(AnomalyConfig::default()),
    }
}

fn strip_runtime(mut r: dabag::ExperimentResult) -> dabag::ExperimentResult {
    for rec in &mut r.records {
        rec.runtime_secs = 0.0;
    }
    r
}

#[test]
fn experiment_is_identical_across_thread_counts() {
    let plan = small_plan();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| strip_runtime(run_experiment(&plan).unwrap()))
    };
    let one = run(1);
    assert_eq!(one.records.len(), 2 * 2 * 3);
    assert_eq!(one, run(4));
}

#[test]
fn aggregates_recompute_from_records() {
    let r = run_experiment(&small_plan()).unwrap();
    assert_eq!(aggregate(&r.records), r.aggregates);
    for a in &r.aggregates {
        let acc: Vec<f64> = r
            .records
            .iter()
            .filter(|x| x.scenario_index == a.scenario_index && x.method_index == a.method_index)
            .filter_map(|x| x.accuracy)
            .collect();
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        assert!((a.mean_accuracy.unwrap() - mean).abs() < 1e-12);
        for rec in &r.records {
            for v in [rec.accuracy, rec.error, rec.type_i, rec.power].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn deterministic_member_has_no_variance() {
    let g = gen_setting1(100, 60, 0.3, 0.0, &RngStream::new(1)).unwrap();
    let test = g.labeled_inliers();
    // one observed class: every bootstrap gives the same constant member
    let one_class = g.train.with_labels(vec![1; g.train.n_rows()], 2).unwrap();
    let cfg = DaBaggingConfig::new(1, ClassifierSpec::tree(), BaggingMode::ClassicalBootstrap);
    let rows = variance_vs_b(&one_class, &test, &cfg, &[1], 5, &RngStream::new(2)).unwrap();
    assert_eq!(rows[0].variance, Some(0.0));
    let rows = variance_vs_b(&g.train, &test, &cfg, &[1], 1, &RngStream::new(2)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].variance, None);
    let rows = variance_vs_b(&g.train, &test, &cfg, &[1, 3], 4, &RngStream::new(2)).unwrap();
    assert!(rows.iter().all(|r| r.variance.unwrap() >= 0.0));
}
