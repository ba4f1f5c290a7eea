use dabag::rng::multinomial;
use dabag::{
    gen_setting1, gen_toy3, inn_resample, inn_step, resample_batch, Dataset, Metric, Purpose, ResampleConfig, RngStream,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Replays one step with an exhaustive neighbor sort and the same streams.
fn step_oracle(current: &Dataset, test: &Dataset, k: usize, draws: usize, rng: &RngStream) -> Vec<usize> {
    let labels = current.labels().unwrap();
    let classes = current.n_classes();
    let mut out = Vec::new();
    for j in 0..test.n_rows() {
        let point = rng.child(j as u64);
        let q = test.row(j);
        let mut order: Vec<(f64, usize)> = (0..current.n_rows())
            .map(|i| (current.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut pi = vec![0.0; classes];
        for &(_, i) in &order[..k] {
            pi[labels[i] - 1] += 1.0 / k as f64;
        }
        let counts = multinomial(&mut point.tagged(Purpose::Multinomial).rng(), draws as u64, &pi);
        assert_eq!(counts.iter().sum::<u64>(), draws as u64);
        for (c, &n_c) in counts.iter().enumerate() {
            let members: Vec<usize> = (0..current.n_rows()).filter(|&i| labels[i] == c + 1).collect();
            let mut r = point.tagged(Purpose::WithinClass).child(c as u64 + 1).rng();
            for _ in 0..n_c {
                out.push(members[r.random_range(0..members.len())]);
            }
        }
    }
    out
}

#[test]
fn step_matches_replayed_oracle() {
    for seed in 0..50u64 {
        let mut r = RngStream::new(seed).rng();
        let f: Vec<f64> = (0..12 * 2).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let mut y: Vec<usize> = (0..12).map(|_| r.random_range(1..=2)).collect();
        y[0] = 1;
        y[1] = 2;
        let current = Dataset::labeled(f, 2, y, 2).unwrap();
        let test = Dataset::new((0..4 * 2).map(|_| r.sample::<f64, _>(StandardNormal)).collect(), 2).unwrap();
        let cfg = ResampleConfig::default().with_k(3);
        let stream = RngStream::new(1000 + seed);
        let out = inn_step(&current, &test, &cfg, &Metric::euclidean(), &stream).unwrap();
        let want = current.select(&step_oracle(&current, &test, 3, 3, &stream));
        assert_eq!(out.n_rows(), 12);
        assert_eq!(out.class_counts().unwrap(), want.class_counts().unwrap(), "seed {seed}");
        assert_eq!(out, want, "seed {seed}");
    }
}

#[test]
fn toy_example_moves_toward_test_proportions() {
    let q = [10.0 / 21.0, 10.0 / 21.0, 1.0 / 21.0];
    let cfg = ResampleConfig::default().with_k(5);
    assert_eq!(cfg.draws(300, 300), 1);
    let mut mean = [0.0; 3];
    for seed in 0..10u64 {
        let g = gen_toy3(300, 300, &q, &RngStream::new(seed)).unwrap();
        let mut d = g.train.clone();
        let stream = RngStream::new(50 + seed);
        for t in 1..=5 {
            d = inn_step(&d, &g.test, &cfg, &Metric::euclidean(), &stream.child(t)).unwrap();
            assert_eq!(d.n_rows(), 300);
        }
        let p = d.class_proportions().unwrap();
        assert!(p[2] < 1.0 / 3.0, "seed {seed}: {p:?}");
        for (m, v) in mean.iter_mut().zip(&p) {
            *m += v / 10.0;
        }
    }
    assert!(mean[2] < 0.12, "{mean:?}");
    assert!(mean[0] > 0.4 && mean[1] > 0.4, "{mean:?}");
}

#[test]
fn one_step_keeps_proportions_when_test_matches_train() {
    let mut mean = 0.0;
    for seed in 0..50u64 {
        let g = gen_setting1(500, 500, 0.5, 0.0, &RngStream::new(seed)).unwrap();
        let out =
            inn_step(&g.train, &g.test, &ResampleConfig::default(), &Metric::euclidean(), &RngStream::new(seed + 900))
                .unwrap();
        mean += out.class_proportions().unwrap()[0] / 50.0;
    }
    assert!((mean - 0.5).abs() <= 0.03, "{mean}");
}

#[test]
fn proportions_approach_the_test_proportion() {
    let (mut toward, mut total) = (0, 0);
    for seed in 0..50u64 {
        let mut r = RngStream::new(seed).rng();
        let mut f = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let c = if i < 100 { 1 } else { 2 };
            f.push(if c == 1 { 0.0 } else { 10.0 } + r.sample::<f64, _>(StandardNormal));
            y.push(c);
        }
        let train = Dataset::labeled(f, 1, y, 2).unwrap();
        let test_rows: Vec<f64> =
            (0..200).map(|i| if i < 40 { 0.0 } else { 10.0 } + r.sample::<f64, _>(StandardNormal)).collect();
        let test = Dataset::new(test_rows, 1).unwrap();
        let cfg = ResampleConfig::default().with_k([1, 3, 5][seed as usize % 3]);
        let (_, trace) = inn_resample(&train, &test, &cfg, &Metric::euclidean(), &RngStream::new(seed + 77)).unwrap();
        assert!(trace.proportions[0][0] < trace.initial_proportions[0]);
        let mut prev = trace.initial_proportions[0];
        for p in &trace.proportions {
            total += 1;
            if (p[0] - 0.2).abs() <= (prev - 0.2).abs() {
                toward += 1;
            }
            prev = p[0];
        }
    }
    assert!(toward as f64 >= 0.8 * total as f64, "{toward} of {total}");
}

#[test]
fn batch_mean_proportion_tracks_q1() {
    let g = gen_setting1(500, 500, 0.1, 0.0, &RngStream::new(5)).unwrap();
    let batch =
        resample_batch(&g.train, &g.test, &ResampleConfig::default(), &Metric::euclidean(), 50, &RngStream::new(6))
            .unwrap();
    assert_eq!(batch.len(), 50);
    let mean: f64 = batch.iter().map(|(_, t)| t.final_proportions()[0]).sum::<f64>() / 50.0;
    assert!((mean - 0.1).abs() <= 0.03, "{mean}");
}

#[test]
fn batch_is_identical_across_thread_counts() {
    let g = gen_setting1(120, 80, 0.2, 0.0, &RngStream::new(8)).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            resample_batch(&g.train, &g.test, &ResampleConfig::default(), &Metric::euclidean(), 4, &RngStream::new(3))
                .unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}
