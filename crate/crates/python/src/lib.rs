//! Python bindings. Feature matrices are lists of rows; labels are any
//! Python objects, grouped by their `str()` and returned as given.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dabag::eval::knn_k_schedule;
use dabag::{
    calibrate, filter_anomalies, generate, predict_pipeline, AnomalyConfig, ClassifierSpec, Dataset, Method,
    MethodConfig, Metric, Purpose, ResampleConfig, RngStream, Scenario, ScenarioSpec,
};
use dabag_cli::simulate::{aggregates_json, parse_config, records_csv, Overrides};
use dabag_cli::table::class_names;

fn to_py(e: dabag::Error) -> PyErr {
    match e {
        dabag::Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn cli_to_py(e: dabag_cli::error::CliError) -> PyErr {
    match e {
        dabag_cli::error::CliError::Internal(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<(Vec<f64>, usize)> {
    let p = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("{what}: row {i} has {} values, expected {p}", rows[i].len())));
    }
    Ok((rows.concat(), p))
}

/// Training data with labels mapped to 1-based classes, plus one
/// representative label object per class.
struct Labeled<'py> {
    data: Dataset,
    labels: Vec<Bound<'py, PyAny>>,
}

fn labeled<'py>(x: &[Vec<f64>], y: &[Bound<'py, PyAny>]) -> PyResult<Labeled<'py>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let keys: Vec<String> = y.iter().map(|v| Ok(v.str()?.to_string())).collect::<PyResult<_>>()?;
    let names = class_names(&keys);
    if names.len() < 2 {
        return Err(PyValueError::new_err("training labels need at least 2 classes"));
    }
    let idx: Vec<usize> = keys.iter().map(|k| names.iter().position(|n| n == k).unwrap() + 1).collect();
    let labels = names.iter().map(|n| y[keys.iter().position(|k| k == n).unwrap()].clone()).collect();
    let (f, p) = matrix(x, "train")?;
    let data = Dataset::labeled(f, p, idx, names.len()).map_err(to_py)?;
    Ok(Labeled { data, labels })
}

fn unlabeled(x: &[Vec<f64>], p: usize) -> PyResult<Dataset> {
    if x.is_empty() {
        return Dataset::empty(p).map_err(to_py);
    }
    let (f, q) = matrix(x, "test")?;
    if q != p {
        return Err(PyValueError::new_err(format!("test rows have {q} features, training rows {p}")));
    }
    Dataset::new(f, q).map_err(to_py)
}

/// Predict the rows of `test_x`; rows flagged as anomalies get `None`.
#[pyfunction]
#[pyo3(signature = (
    train_x, train_y, test_x, *, base="tree", mode="da", b=50, k=1, knn_k=None, eps_stop=0.01, t_max=50,
    standardize=false, detect_anomalies=false, alpha=0.1, anomaly_k=5, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn fit_predict<'py>(
    py: Python<'py>,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<Bound<'py, PyAny>>,
    test_x: Vec<Vec<f64>>,
    base: &str,
    mode: &str,
    b: usize,
    k: usize,
    knn_k: Option<usize>,
    eps_stop: f64,
    t_max: usize,
    standardize: bool,
    detect_anomalies: bool,
    alpha: f64,
    anomaly_k: usize,
    seed: u64,
) -> PyResult<Vec<Option<Bound<'py, PyAny>>>> {
    let train = labeled(&train_x, &train_y)?;
    let test = unlabeled(&test_x, train.data.n_features())?;
    let base = match base {
        "knn" => {
            ClassifierSpec::knn(knn_k.unwrap_or_else(|| knn_k_schedule(train.data.n_rows(), train.data.n_features())))
        }
        "logistic" => ClassifierSpec::logistic(),
        "lda" => ClassifierSpec::lda(),
        "tree" => ClassifierSpec::tree(),
        other => return Err(PyValueError::new_err(format!("unknown base {other:?}"))),
    };
    let method = match mode {
        "da" => Method::DaBagging,
        "classical" => Method::Bagging,
        "none" => Method::Single,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let method = MethodConfig {
        method,
        base,
        b,
        resample: ResampleConfig { k, per_test_draws: None, eps_stop, t_max },
        standardize,
    };
    method.base.validate().map_err(to_py)?;
    if let Some(cfg) = method.ensemble_config() {
        cfg.validate().map_err(to_py)?;
    }
    let anomaly = AnomalyConfig { k: anomaly_k, alpha, ..Default::default() };
    anomaly.validate().map_err(to_py)?;
    let data = &train.data;
    let out = py
        .detach(|| predict_pipeline(data, &test, &method, detect_anomalies.then_some(&anomaly), &RngStream::new(seed)))
        .map_err(to_py)?;
    Ok(out.predictions.iter().map(|p| p.map(|l| train.labels[l - 1].clone())).collect())
}

/// Flags and per-class distance-to-measure scores of the rows of `test_x`.
#[pyfunction]
#[pyo3(signature = (train_x, train_y, test_x, *, alpha=0.1, k=5, seed=0))]
fn detect(
    py: Python<'_>,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<Bound<'_, PyAny>>,
    test_x: Vec<Vec<f64>>,
    alpha: f64,
    k: usize,
    seed: u64,
) -> PyResult<(Vec<bool>, Vec<Vec<f64>>)> {
    let train = labeled(&train_x, &train_y)?;
    let test = unlabeled(&test_x, train.data.n_features())?;
    let cfg = AnomalyConfig { k, alpha, ..Default::default() };
    cfg.validate().map_err(to_py)?;
    let data = &train.data;
    let part = py
        .detach(|| {
            let m = Metric::euclidean();
            let cal = calibrate(data, &cfg, &m, &RngStream::new(seed).tagged(Purpose::Split))?;
            filter_anomalies(&test, data, &cal, &m)
        })
        .map_err(to_py)?;
    Ok((part.flags(), part.scores))
}

/// Draw one simulated instance. Returns `(train_x, train_y, test_x, test_y)`
/// with 1-based labels; anomalous test rows have label `None`.
#[pyfunction]
#[pyo3(signature = (scenario, n_train, n_test, q1, *, epsilon_out=0.0, seed=0))]
#[allow(clippy::type_complexity)]
fn simulate_data(
    scenario: &str,
    n_train: usize,
    n_test: usize,
    q1: f64,
    epsilon_out: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<Option<usize>>)> {
    let scenario = match scenario {
        "setting1" => Scenario::Setting1,
        "setting2" => Scenario::Setting2,
        other => return Err(PyValueError::new_err(format!("unknown two-class scenario {other:?}"))),
    };
    let spec = ScenarioSpec::two_class(scenario, n_train, n_test, q1, epsilon_out, seed);
    spec.validate().map_err(to_py)?;
    let g = generate(&spec, &RngStream::new(seed)).map_err(to_py)?;
    let rows = |d: &Dataset| d.rows().map(<[f64]>::to_vec).collect::<Vec<_>>();
    Ok((rows(&g.train), g.train.labels().unwrap_or_default().to_vec(), rows(&g.test), g.test_labels.clone()))
}

/// Run a simulation config (JSON text). Returns the records CSV and the
/// aggregates JSON exactly as the command-line tool writes them.
#[pyfunction]
#[pyo3(signature = (config_json, *, seed=None, reps=None, b=None))]
fn simulate(
    py: Python<'_>,
    config_json: &str,
    seed: Option<u64>,
    reps: Option<usize>,
    b: Option<usize>,
) -> PyResult<(String, String)> {
    let config = parse_config(config_json).map_err(cli_to_py)?;
    let plan = config.plan(&Overrides { seed, reps, b, ..Default::default() }).map_err(cli_to_py)?;
    let result = py.detach(|| dabag::run_experiment(&plan)).map_err(to_py)?;
    let csv = records_csv(&result.records).map_err(cli_to_py)?;
    let json = aggregates_json(&result.aggregates).map_err(cli_to_py)?;
    Ok((String::from_utf8(csv).expect("utf-8 csv"), String::from_utf8(json).expect("utf-8 json")))
}

#[pymodule]
fn pydabag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(fit_predict, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_data, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
