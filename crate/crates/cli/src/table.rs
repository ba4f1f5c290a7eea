//! CSV ingestion: header required, numeric features, optional label column.

use std::collections::BTreeSet;
use std::path::Path;

use dabag::Dataset;

use crate::error::{CliError, CliResult};

/// A parsed CSV file before labels are mapped to class indices.
#[derive(Debug, Clone)]
pub struct Table {
    pub feature_names: Vec<String>,
    /// Row-major feature values.
    pub features: Vec<f64>,
    pub n_rows: usize,
    /// Raw label cells, when the label column is present.
    pub labels: Option<Vec<String>>,
}

/// Columns to drop besides the label.
#[derive(Debug, Clone, Default)]
pub struct Columns<'a> {
    pub label: Option<&'a str>,
    pub ignore: &'a [String],
}

pub fn read_table(path: &Path, cols: &Columns, require_label: bool) -> CliResult<Table> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    parse_table(file, &path.display().to_string(), cols, require_label)
}

pub fn parse_table<R: std::io::Read>(input: R, name: &str, cols: &Columns, require_label: bool) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(name, e))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::Data(format!("{name}: missing header line")));
    }
    for ig in cols.ignore {
        if !header.iter().any(|h| h == ig) {
            return Err(CliError::Usage(format!("{name}: no column named {ig:?} to ignore")));
        }
    }
    let label_at = cols.label.and_then(|l| header.iter().position(|h| h == l));
    if require_label && label_at.is_none() {
        return Err(CliError::Usage(format!(
            "{name}: label column {:?} not found in header",
            cols.label.unwrap_or_default()
        )));
    }
    let feature_at: Vec<usize> =
        (0..header.len()).filter(|&i| Some(i) != label_at && !cols.ignore.iter().any(|g| g == &header[i])).collect();
    if feature_at.is_empty() {
        return Err(CliError::Data(format!("{name}: no feature columns")));
    }
    let feature_names: Vec<String> = feature_at.iter().map(|&i| header[i].to_string()).collect();
    let mut features = Vec::new();
    let mut labels = label_at.map(|_| Vec::new());
    let mut n_rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for &i in &feature_at {
            let cell = &rec[i];
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("{name}, line {line}: column {:?} has non-numeric value {cell:?}", &header[i]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{name}, line {line}: column {:?} is not finite", &header[i])));
            }
            features.push(v);
        }
        if let (Some(at), Some(labels)) = (label_at, labels.as_mut()) {
            if rec[at].is_empty() {
                return Err(CliError::Data(format!("{name}, line {line}: empty label")));
            }
            labels.push(rec[at].to_string());
        }
        n_rows += 1;
    }
    Ok(Table { feature_names, features, n_rows, labels })
}

fn csv_error(name: &str, e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => CliError::Data(format!("{name}, line {}: {e}", p.line())),
        None => CliError::Data(format!("{name}: {e}")),
    }
}

/// Distinct labels, numerically ordered when every label parses as a
/// number, lexicographically otherwise.
pub fn class_names(labels: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&String> = labels.iter().collect();
    let mut names: Vec<String> = distinct.into_iter().cloned().collect();
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()).then(a.cmp(b)));
    }
    names
}

impl Table {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Labeled dataset with classes indexed by `names` (1-based).
    pub fn labeled(&self, names: &[String]) -> CliResult<Dataset> {
        let raw = self.labels.as_ref().ok_or_else(|| CliError::Usage("label column missing".into()))?;
        let labels = raw
            .iter()
            .map(|l| names.iter().position(|n| n == l).map(|i| i + 1))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| CliError::Data("label outside the class list".into()))?;
        Ok(Dataset::labeled(self.features.clone(), self.n_features(), labels, names.len())?
            .with_class_names(names.to_vec())?)
    }

    pub fn unlabeled(&self) -> CliResult<Dataset> {
        if self.n_rows == 0 {
            return Ok(Dataset::empty(self.n_features())?);
        }
        Ok(Dataset::new(self.features.clone(), self.n_features())?)
    }

    /// Same feature columns, in the same order, as `train`.
    pub fn check_columns(&self, train: &Table, name: &str) -> CliResult<()> {
        if self.feature_names != train.feature_names {
            return Err(CliError::Data(format!(
                "{name}: feature columns {:?} do not match the training columns {:?}",
                self.feature_names, train.feature_names
            )));
        }
        Ok(())
    }
}

/// Training table plus its class list; fewer than two classes is an error.
pub fn training_set(table: &Table, name: &str) -> CliResult<(Dataset, Vec<String>)> {
    let raw = table.labels.as_ref().ok_or_else(|| CliError::Usage(format!("{name}: label column missing")))?;
    let names = class_names(raw);
    if names.len() < 2 {
        return Err(CliError::Data(format!("{name}: need at least 2 classes, found {}", names.len())));
    }
    Ok((table.labeled(&names)?, names))
}
