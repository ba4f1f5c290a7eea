// Brute-force and finite-difference oracles, shared with the acceptance
// target. Each suite checks `instances` random instances and returns how
// many it checked, or a description of the first mismatch.

#![allow(dead_code, clippy::needless_range_loop)]

use dabag::classifiers::logistic::LogisticObjective;
use dabag::classifiers::tree::TreeNode;
use dabag::{
    calibrate, class_weights, dtm_hat, filter_anomalies, fit, fit_ensemble, k_nearest, AnomalyConfig, BaggingMode,
    ClassifierSpec, DaBaggingConfig, Dataset, FittedClassifier, Metric, RngStream,
};
use rand::Rng;

pub type Outcome = Result<usize, String>;

fn random_dataset<R: Rng>(r: &mut R, n: usize, p: usize, classes: usize) -> Dataset {
    let f: Vec<f64> = (0..n * p).map(|_| r.random_range(-3.0..3.0)).collect();
    let mut y: Vec<usize> = (0..n).map(|_| r.random_range(1..=classes)).collect();
    // every class present
    for (i, l) in (1..=classes).enumerate() {
        y[i] = l;
    }
    Dataset::labeled(f, p, y, classes).unwrap()
}

fn sq_dist_loop(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

/// Index order of every row by distance, exhaustively sorted.
fn sorted_by_distance(x: &[f64], d: &Dataset) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = (0..d.n_rows()).map(|i| (sq_dist_loop(x, d.row(i)), i)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    all
}

pub fn nearest_neighbors(instances: usize) -> Outcome {
    let mut r = RngStream::new(101).rng();
    let m = Metric::euclidean();
    for inst in 0..instances {
        let d = random_dataset(&mut r, 200, 10, 3);
        let x: Vec<f64> = (0..10).map(|_| r.random_range(-3.0..3.0)).collect();
        let k = 7;
        let got = k_nearest(&x, &d, k, &m, &RngStream::new(inst as u64)).map_err(|e| e.to_string())?;
        let oracle = sorted_by_distance(&x, &d);
        let mut want: Vec<usize> = oracle[..k].iter().map(|p| p.1).collect();
        let mut have = got.indices.clone();
        want.sort_unstable();
        have.sort_unstable();
        if want != have {
            return Err(format!("instance {inst}: neighbors {have:?}, oracle {want:?}"));
        }
        for (i, dist) in got.indices.iter().zip(&got.distances) {
            if (dist - sq_dist_loop(&x, d.row(*i)).sqrt()).abs() > 1e-12 {
                return Err(format!("instance {inst}: distance to row {i} is {dist}"));
            }
        }
        let w = class_weights(&x, &d, k, &m, &RngStream::new(inst as u64)).map_err(|e| e.to_string())?;
        let labels = d.labels().unwrap();
        let mut recount = vec![0usize; 3];
        for &(_, i) in &oracle[..k] {
            recount[labels[i] - 1] += 1;
        }
        if w.counts() != recount.as_slice() {
            return Err(format!("instance {inst}: class counts {:?}, oracle {recount:?}", w.counts()));
        }
    }
    Ok(instances)
}

fn dtm_oracle(x: &[f64], d: &Dataset, k: usize) -> f64 {
    let all = sorted_by_distance(x, d);
    let s: f64 = all[..k].iter().map(|p| p.0).sum();
    (s / k as f64).sqrt()
}

pub fn dtm_scores(instances: usize) -> Outcome {
    let mut r = RngStream::new(202).rng();
    let m = Metric::euclidean();
    for inst in 0..instances {
        let n = r.random_range(20..80);
        let p = r.random_range(1..6);
        let d = Dataset::new((0..n * p).map(|_| r.random_range(-3.0..3.0)).collect(), p).unwrap();
        let k = r.random_range(1..=10);
        let x: Vec<f64> = (0..p).map(|_| r.random_range(-5.0..5.0)).collect();
        let got = dtm_hat(&x, &d, k, &m).map_err(|e| e.to_string())?;
        let want = dtm_oracle(&x, &d, k);
        if (got - want).abs() > 1e-12 * want.max(1.0) {
            return Err(format!("instance {inst}: dtm {got}, oracle {want}"));
        }
    }
    // full detector against a per-class recomputation
    let d = random_dataset(&mut r, 120, 3, 2);
    let cfg = AnomalyConfig { k: 4, alpha: 0.1, split_fraction: 0.5 };
    let cal = calibrate(&d, &cfg, &m, &RngStream::new(7)).map_err(|e| e.to_string())?;
    let test = Dataset::new((0..200 * 3).map(|_| r.random_range(-6.0..6.0)).collect(), 3).unwrap();
    let part = filter_anomalies(&test, &d, &cal, &m).map_err(|e| e.to_string())?;
    let flags = part.flags();
    for j in 0..test.n_rows() {
        let mut all_above = true;
        for l in 1..=2 {
            let class = d.select(&d.rows_of_class(l).unwrap());
            let s = dtm_oracle(test.row(j), &class, cfg.k);
            if (s - part.scores[j][l - 1]).abs() > 1e-12 * s.max(1.0) {
                return Err(format!("test row {j}: class {l} score {}, oracle {s}", part.scores[j][l - 1]));
            }
            all_above &= s > cal.thresholds[l - 1];
        }
        if all_above != flags[j] {
            return Err(format!("test row {j}: flagged {}, oracle {all_above}", flags[j]));
        }
    }
    Ok(instances + 1)
}

fn smallest_argmax(v: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best + 1
}

pub fn vote_tallies(instances: usize) -> Outcome {
    let mut r = RngStream::new(303).rng();
    let mut checked = 0;
    while checked < instances {
        let classes = r.random_range(2..=4);
        let train = random_dataset(&mut r, 60, 2, classes);
        let test = Dataset::new((0..20 * 2).map(|_| r.random_range(-3.0..3.0)).collect(), 2).unwrap();
        let b = r.random_range(1..=12);
        let base = if r.random_bool(0.5) { ClassifierSpec::knn(2) } else { ClassifierSpec::tree() };
        let mode = if r.random_bool(0.5) { BaggingMode::DomainAdaptive } else { BaggingMode::ClassicalBootstrap };
        let cfg = DaBaggingConfig::new(b, base, mode);
        let model = fit_ensemble(&train, &test, &cfg, &RngStream::new(checked as u64)).map_err(|e| e.to_string())?;
        let s = RngStream::new(9).child(checked as u64);
        let table = model.vote_table(&test, &s).map_err(|e| e.to_string())?;
        for j in 0..test.n_rows() {
            let x = test.row(j);
            let mut tally = vec![0usize; classes];
            for (bi, member) in model.members().iter().enumerate() {
                tally[member.predict(x, &s.child(bi as u64 + 1)).unwrap() - 1] += 1;
            }
            let counts = model.vote_counts(x, &s).unwrap();
            if counts != tally {
                return Err(format!("instance {checked}: counts {counts:?}, tally {tally:?}"));
            }
            let want = smallest_argmax(&tally);
            if model.predict(x, &s).unwrap() != want {
                return Err(format!("instance {checked}: ensemble prediction differs from tally argmax {want}"));
            }
            let frac = model.vote_fraction(x, &s).unwrap();
            let total: f64 = frac.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(format!("instance {checked}: vote fractions sum to {total}"));
            }
            // the table uses the per-row stream s / j
            let mut row_tally = vec![0usize; classes];
            for &v in table.member_predictions(j) {
                row_tally[v - 1] += 1;
            }
            let sj = s.child(j as u64);
            let mut direct = vec![0usize; classes];
            for (bi, member) in model.members().iter().enumerate() {
                direct[member.predict(x, &sj.child(bi as u64 + 1)).unwrap() - 1] += 1;
            }
            if row_tally != direct || table.counts_prefix(j, b) != direct {
                return Err(format!("instance {checked}: vote table row {j} disagrees with its tally"));
            }
            if table.predict()[j] != smallest_argmax(&direct) {
                return Err(format!("instance {checked}: vote table prediction differs on row {j}"));
            }
        }
        checked += 1;
    }
    Ok(checked)
}

fn traverse(nodes: &[TreeNode], node: usize, x: &[f64]) -> usize {
    match &nodes[node] {
        TreeNode::Leaf { distribution, .. } => {
            let mut best = 0;
            for i in 1..distribution.len() {
                if distribution[i] > distribution[best] {
                    best = i;
                }
            }
            best + 1
        }
        TreeNode::Split { feature, threshold, left, right } => {
            if x[*feature] <= *threshold {
                traverse(nodes, *left, x)
            } else {
                traverse(nodes, *right, x)
            }
        }
    }
}

pub fn tree_traversal(instances: usize) -> Outcome {
    let mut r = RngStream::new(404).rng();
    for inst in 0..instances {
        let classes = r.random_range(2..=4);
        let p = r.random_range(1..=5);
        let n = r.random_range(30..150);
        let d = random_dataset(&mut r, n, p, classes);
        let spec = ClassifierSpec::Tree {
            max_depth: r.random_range(1..=8),
            min_leaf: r.random_range(1..=6),
            max_features: if r.random_bool(0.5) { Some(r.random_range(1..=p)) } else { None },
        };
        let model = fit(&spec, &d, &RngStream::new(inst as u64)).map_err(|e| e.to_string())?;
        let FittedClassifier::Tree(tree) = &model else { unreachable!() };
        for q in 0..500 {
            let x: Vec<f64> = (0..p).map(|_| r.random_range(-4.0..4.0)).collect();
            let want = traverse(tree.nodes(), 0, &x);
            let got = model.predict(&x, &RngStream::new(0)).unwrap();
            if got != want {
                return Err(format!("instance {inst}, point {q}: tree predicts {got}, traversal {want}"));
            }
        }
    }
    Ok(instances)
}

pub fn logistic_gradients(instances: usize) -> Outcome {
    let mut r = RngStream::new(505).rng();
    for inst in 0..instances {
        let classes = r.random_range(2..=4);
        let p = r.random_range(1..=4);
        let n = r.random_range(8..40);
        let d = random_dataset(&mut r, n, p, classes);
        let l2 = [0.0, 1e-3, 0.1][inst % 3];
        let obj = LogisticObjective::new(&d, l2).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = (0..obj.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let g = obj.gradient(&theta);
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-3);
            if (g[i] - fd).abs() / scale > 1e-5 {
                return Err(format!("instance {inst}, coordinate {i}: gradient {}, finite difference {fd}", g[i]));
            }
        }
    }
    Ok(instances)
}
