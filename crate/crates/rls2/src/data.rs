//! Dataset ingestion, preprocessing and split/fold generation.
//!
//! CSV ingestion follows a fixed cleaning pipeline: rows with missing
//! entries are dropped, categorical columns are expanded into one binary
//! indicator per category, and binary targets are remapped onto {-1, +1}.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, Rls2Error};

/// Kind of supervised problem carried by a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Binary,
    Multiclass,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
        }
    }
}

/// In-memory dataset: row-major inputs plus targets.
///
/// For binary tasks every `y_i` is ±1; for multiclass `y_i` holds the class
/// id (index into `class_labels`).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_names: Vec<String>,
    pub task: Task,
    pub class_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn n_examples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut x = Array2::zeros((indices.len(), self.n_features()));
        let mut y = Array1::zeros(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            x.row_mut(r).assign(&self.x.row(i));
            y[r] = self.y[i];
        }
        Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
            task: self.task,
            class_labels: self.class_labels.clone(),
        }
    }
}

/// Options for [`load_csv`].
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: true,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load a CSV file into a [`Dataset`].
///
/// Rows containing missing values (empty, `?`, `na`, `nan`, non-finite
/// numerics) are dropped. A feature column whose non-missing cells do not
/// all parse as finite numbers counts as categorical and is expanded into
/// one indicator column per distinct value; indicator names record the
/// provenance as `column=value`. Binary targets given as any two-value set
/// are remapped to -1/+1 by sorted order (smaller value to -1).
pub fn load_csv<P: AsRef<Path>>(
    path: P,
    target_column: &str,
    task: Task,
    options: &CsvOptions,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(false)
        .from_path(path.as_ref())
        .map_err(csv_err)?;

    let header: Vec<String> = if options.has_header {
        reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.trim().to_string())
            .collect()
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push(record.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Rls2Error::EmptyDataset);
    }
    let n_cols = rows[0].len();
    let names: Vec<String> = if options.has_header {
        header
    } else {
        (1..=n_cols).map(|i| format!("c{i}")).collect()
    };
    let target_idx = names
        .iter()
        .position(|n| n == target_column)
        .ok_or_else(|| Rls2Error::MissingTarget(target_column.to_string()))?;

    // Drop rows with any missing cell, remembering source line numbers
    // for diagnostics.
    let header_lines = usize::from(options.has_header);
    let kept: Vec<&Vec<String>> = rows
        .iter()
        .filter(|r| !r.iter().any(|c| is_missing(c)))
        .collect();
    let kept_lines: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.iter().any(|c| is_missing(c)))
        .map(|(i, _)| i + 1 + header_lines)
        .collect();
    if kept.is_empty() {
        return Err(Rls2Error::EmptyDataset);
    }

    // Column typing over the retained rows.
    let feature_cols: Vec<usize> = (0..n_cols).filter(|&j| j != target_idx).collect();
    let numeric: Vec<bool> = feature_cols
        .iter()
        .map(|&j| kept.iter().all(|r| parse_finite(&r[j]).is_some()))
        .collect();

    // Expanded feature layout.
    let mut feature_names = Vec::new();
    let mut categories: Vec<Option<Vec<String>>> = Vec::new();
    for (slot, &j) in feature_cols.iter().enumerate() {
        if numeric[slot] {
            feature_names.push(names[j].clone());
            categories.push(None);
        } else {
            let distinct: BTreeSet<String> = kept.iter().map(|r| r[j].clone()).collect();
            let cats: Vec<String> = distinct.into_iter().collect();
            for cat in &cats {
                feature_names.push(format!("{}={}", names[j], cat));
            }
            categories.push(Some(cats));
        }
    }

    let n_rows = kept.len();
    let n_features = feature_names.len();
    let mut x = Array2::<f64>::zeros((n_rows, n_features));
    for (r, row) in kept.iter().enumerate() {
        let mut col = 0;
        for (slot, &j) in feature_cols.iter().enumerate() {
            match &categories[slot] {
                None => {
                    x[[r, col]] = parse_finite(&row[j]).expect("typed as numeric");
                    col += 1;
                }
                Some(cats) => {
                    for cat in cats {
                        x[[r, col]] = if &row[j] == cat { 1.0 } else { 0.0 };
                        col += 1;
                    }
                }
            }
        }
    }

    let raw_targets: Vec<String> = kept.iter().map(|r| r[target_idx].clone()).collect();
    let (y, class_labels) = encode_targets(&raw_targets, &kept_lines, task)?;

    Ok(Dataset {
        x,
        y: Array1::from(y),
        feature_names,
        task,
        class_labels,
    })
}

fn csv_err(e: csv::Error) -> Rls2Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or_default();
    Rls2Error::CsvParse {
        line,
        msg: e.to_string(),
    }
}

/// Sort label strings numerically when every label parses, else
/// lexicographically; used for deterministic label -> id assignment.
fn sorted_distinct(raw: &[String]) -> Vec<String> {
    let distinct: BTreeSet<String> = raw.iter().cloned().collect();
    let mut labels: Vec<String> = distinct.into_iter().collect();
    let all_numeric = labels.iter().all(|l| parse_finite(l).is_some());
    if all_numeric {
        labels.sort_by(|a, b| {
            parse_finite(a)
                .unwrap()
                .total_cmp(&parse_finite(b).unwrap())
        });
    }
    labels
}

fn encode_targets(
    raw: &[String],
    lines: &[usize],
    task: Task,
) -> Result<(Vec<f64>, Option<Vec<String>>)> {
    match task {
        Task::Regression => {
            let mut y = Vec::with_capacity(raw.len());
            for (i, cell) in raw.iter().enumerate() {
                let v = parse_finite(cell).ok_or_else(|| Rls2Error::CsvParse {
                    line: lines[i],
                    msg: format!("target '{cell}' is not numeric"),
                })?;
                y.push(v);
            }
            Ok((y, None))
        }
        Task::Binary => {
            let labels = sorted_distinct(raw);
            let already_pm1 = labels
                .iter()
                .all(|l| matches!(parse_finite(l), Some(v) if v == 1.0 || v == -1.0));
            if already_pm1 {
                let y = raw
                    .iter()
                    .map(|c| parse_finite(c).expect("checked numeric"))
                    .collect();
                return Ok((y, None));
            }
            if labels.len() != 2 {
                return Err(Rls2Error::BadBinaryLabels(labels.len()));
            }
            let y = raw
                .iter()
                .map(|c| if *c == labels[0] { -1.0 } else { 1.0 })
                .collect();
            Ok((y, Some(labels)))
        }
        Task::Multiclass => {
            let labels = sorted_distinct(raw);
            let y = raw
                .iter()
                .map(|c| labels.iter().position(|l| l == c).unwrap() as f64)
                .collect();
            Ok((y, Some(labels)))
        }
    }
}

/// Per-feature affine standardization fitted on a training set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Constant features are flagged and left untouched.
    pub constant: Vec<bool>,
    /// Mean of training outputs (regression), 0 otherwise.
    pub output_intercept: f64,
}

impl Standardizer {
    /// Fit on training data. Uses the unbiased (divisor l-1) standard
    /// deviation; with a single training row every feature is constant.
    pub fn fit(train: &Dataset) -> Standardizer {
        let l = train.n_examples();
        let n = train.n_features();
        let mut mean = vec![0.0; n];
        let mut std = vec![1.0; n];
        let mut constant = vec![false; n];
        for j in 0..n {
            let col = train.x.column(j);
            let m = col.sum() / l as f64;
            let var = if l > 1 {
                col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (l as f64 - 1.0)
            } else {
                0.0
            };
            let s = var.sqrt();
            if s > 0.0 {
                mean[j] = m;
                std[j] = s;
            } else {
                constant[j] = true;
            }
        }
        let output_intercept = if train.task == Task::Regression {
            train.y.sum() / l as f64
        } else {
            0.0
        };
        Standardizer {
            mean,
            std,
            constant,
            output_intercept,
        }
    }

    pub fn transform_x(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Rls2Error::DimensionMismatch(format!(
                "standardizer expects {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for j in 0..self.mean.len() {
            if self.constant[j] {
                continue;
            }
            out.column_mut(j)
                .mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }

    pub fn inverse_transform_x(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Rls2Error::DimensionMismatch(format!(
                "standardizer expects {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for j in 0..self.mean.len() {
            if self.constant[j] {
                continue;
            }
            out.column_mut(j)
                .mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
        Ok(out)
    }

    fn transform_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        let x = self.transform_x(&ds.x)?;
        let y = if ds.task == Task::Regression {
            &ds.y - self.output_intercept
        } else {
            ds.y.clone()
        };
        Ok(Dataset {
            x,
            y,
            feature_names: ds.feature_names.clone(),
            task: ds.task,
            class_labels: ds.class_labels.clone(),
        })
    }
}

/// Standardize training features to zero mean / unit standard deviation and
/// apply the same affine map to every dataset in `apply_to`. For regression,
/// outputs are centered by the training mean (the returned standardizer's
/// `output_intercept`).
pub fn standardize(
    train: &Dataset,
    apply_to: &[&Dataset],
) -> Result<(Standardizer, Dataset, Vec<Dataset>)> {
    if train.n_examples() == 0 {
        return Err(Rls2Error::EmptyDataset);
    }
    let st = Standardizer::fit(train);
    let train_t = st.transform_dataset(train)?;
    let mut others = Vec::with_capacity(apply_to.len());
    for ds in apply_to {
        others.push(st.transform_dataset(ds)?);
    }
    Ok((st, train_t, others))
}

fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Random train/test split. Train size is floor(fraction * l); the split is
/// deterministic in (data length, fraction, seed).
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(ds.n_examples(), train_fraction, seed)?;
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Index form of [`split`].
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Rls2Error::BadFraction(train_fraction));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 {
        return Err(Rls2Error::EmptyTrainSplit);
    }
    let idx = seeded_permutation(n, seed);
    let (train, test) = idx.split_at(n_train.min(n));
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Plain shuffled k-fold over n examples: each entry is (train, validation).
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Rls2Error::BadFoldCount { k, n });
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let idx = seeded_permutation(n, seed);
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(finish_folds(folds, k))
}

fn finish_folds(folds: Vec<Vec<usize>>, k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let mut val = folds[f].clone();
        val.sort_unstable();
        let mut train: Vec<usize> = (0..k)
            .filter(|&g| g != f)
            .flat_map(|g| folds[g].iter().copied())
            .collect();
        train.sort_unstable();
        out.push((train, val));
    }
    out
}

/// k-fold indices: each entry is (train, validation). Classification tasks
/// are stratified so per-fold class counts differ from the proportional
/// allocation by at most one; regression falls back to a plain shuffled
/// k-fold.
pub fn stratified_kfold(
    ds: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = ds.n_examples();
    if k < 2 || k > n {
        return Err(Rls2Error::BadFoldCount { k, n });
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    match ds.task {
        Task::Regression => {
            let idx = seeded_permutation(n, seed);
            for (pos, i) in idx.into_iter().enumerate() {
                folds[pos % k].push(i);
            }
        }
        Task::Binary | Task::Multiclass => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut classes: Vec<f64> = Vec::new();
            for &v in ds.y.iter() {
                if !classes.contains(&v) {
                    classes.push(v);
                }
            }
            classes.sort_by(f64::total_cmp);
            let mut offset = 0usize;
            for c in classes {
                let mut members: Vec<usize> = (0..n).filter(|&i| ds.y[i] == c).collect();
                if members.len() < k {
                    log::warn!(
                        "class {} has {} members, fewer than k={}; spreading as evenly as possible",
                        c,
                        members.len(),
                        k
                    );
                }
                members.shuffle(&mut rng);
                for (pos, i) in members.iter().enumerate() {
                    folds[(offset + pos) % k].push(*i);
                }
                offset = (offset + members.len()) % k;
            }
        }
    }
    Ok(finish_folds(folds, k))
}

/// Write indices one per line (split/fold export format).
pub fn write_indices<W: Write>(mut w: W, indices: &[usize]) -> Result<()> {
    for i in indices {
        writeln!(w, "{i}")?;
    }
    Ok(())
}

/// A cleaned CSV table kept as strings, for feature alignment against a
/// trained model's feature names.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 0-based positions of the kept rows in the source file's data rows
    /// (rows with missing values are dropped).
    pub row_ids: Vec<usize>,
}

/// Load a CSV file without target handling, applying the same
/// missing-value cleaning as [`load_csv`].
pub fn load_csv_raw<P: AsRef<Path>>(path: P, options: &CsvOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(false)
        .from_path(path.as_ref())
        .map_err(csv_err)?;
    let header: Vec<String> = if options.has_header {
        reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.trim().to_string())
            .collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    let mut row_ids = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let cells: Vec<String> = record.iter().map(|s| s.trim().to_string()).collect();
        if cells.iter().any(|c| is_missing(c)) {
            continue;
        }
        rows.push(cells);
        row_ids.push(i);
    }
    if rows.is_empty() {
        return Err(Rls2Error::EmptyDataset);
    }
    let n_cols = rows[0].len();
    let column_names = if options.has_header {
        header
    } else {
        (1..=n_cols).map(|i| format!("c{i}")).collect()
    };
    Ok(RawTable {
        column_names,
        rows,
        row_ids,
    })
}

/// Build the input matrix for prediction by resolving each training
/// feature name against the table: either a numeric column of the same
/// name, or a `column=value` indicator derived from a categorical column.
pub fn align_features(table: &RawTable, feature_names: &[String]) -> Result<Array2<f64>> {
    let mut x = Array2::<f64>::zeros((table.rows.len(), feature_names.len()));
    for (j, name) in feature_names.iter().enumerate() {
        if let Some(col) = table.column_names.iter().position(|c| c == name) {
            for (r, row) in table.rows.iter().enumerate() {
                x[[r, j]] = parse_finite(&row[col]).ok_or_else(|| {
                    Rls2Error::DimensionMismatch(format!(
                        "column '{name}' holds non-numeric value '{}'",
                        row[col]
                    ))
                })?;
            }
            continue;
        }
        if let Some((col_name, category)) = name.split_once('=') {
            if let Some(col) = table.column_names.iter().position(|c| c == col_name) {
                for (r, row) in table.rows.iter().enumerate() {
                    x[[r, j]] = if row[col] == category { 1.0 } else { 0.0 };
                }
                continue;
            }
        }
        return Err(Rls2Error::DimensionMismatch(format!(
            "feature '{name}' not found in the input columns"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy(task: Task, y: Vec<f64>, n_features: usize) -> Dataset {
        let l = y.len();
        let x = Array2::from_shape_fn((l, n_features), |(i, j)| (i * n_features + j) as f64);
        Dataset {
            x,
            y: Array1::from(y),
            feature_names: (0..n_features).map(|j| format!("f{j}")).collect(),
            task,
            class_labels: None,
        }
    }

    #[test]
    fn categorical_column_expands_to_indicators() {
        let f = write_temp("num,cat,y\n1.0,a,0.5\n2.0,b,1.5\n3.0,a,2.5\n");
        let ds = load_csv(f.path(), "y", Task::Regression, &CsvOptions::default()).unwrap();
        assert_eq!(ds.n_examples(), 3);
        assert_eq!(ds.feature_names, vec!["num", "cat=a", "cat=b"]);
        assert_eq!(ds.x[[0, 1]], 1.0);
        assert_eq!(ds.x[[0, 2]], 0.0);
        assert_eq!(ds.x[[1, 1]], 0.0);
        assert_eq!(ds.x[[1, 2]], 1.0);
    }

    #[test]
    fn rows_with_missing_fields_are_dropped() {
        let f = write_temp("a,b,y\n1,2,3\n4,?,6\n7,8,9\n");
        let ds = load_csv(f.path(), "y", Task::Regression, &CsvOptions::default()).unwrap();
        assert_eq!(ds.n_examples(), 2);
        assert_eq!(ds.x[[1, 0]], 7.0);
    }

    #[test]
    fn numeric_only_file_parses_exactly() {
        let f = write_temp("a,b,y\n0.125,-3.5,1\n2.25,4.75,0\n");
        let ds = load_csv(f.path(), "y", Task::Regression, &CsvOptions::default()).unwrap();
        assert_eq!(ds.x[[0, 0]], 0.125);
        assert_eq!(ds.x[[0, 1]], -3.5);
        assert_eq!(ds.x[[1, 0]], 2.25);
        assert_eq!(ds.x[[1, 1]], 4.75);
    }

    #[test]
    fn binary_two_value_set_is_remapped_by_sorted_order() {
        let f = write_temp("a,y\n1,yes\n2,no\n3,yes\n");
        let ds = load_csv(f.path(), "y", Task::Binary, &CsvOptions::default()).unwrap();
        // sorted: no < yes, so no -> -1
        assert_eq!(ds.y.to_vec(), vec![1.0, -1.0, 1.0]);
        assert_eq!(ds.class_labels, Some(vec!["no".into(), "yes".into()]));

        let f = write_temp("a,y\n1,0\n2,1\n");
        let ds = load_csv(f.path(), "y", Task::Binary, &CsvOptions::default()).unwrap();
        assert_eq!(ds.y.to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn binary_three_values_errors() {
        let f = write_temp("a,y\n1,x\n2,y\n3,z\n");
        let err = load_csv(f.path(), "y", Task::Binary, &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Rls2Error::BadBinaryLabels(3)));
    }

    #[test]
    fn missing_target_column_errors() {
        let f = write_temp("a,b\n1,2\n");
        let err = load_csv(f.path(), "y", Task::Regression, &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Rls2Error::MissingTarget(_)));
    }

    #[test]
    fn bad_regression_target_reports_the_file_line() {
        // row 3 has a missing feature (dropped); the bad target sits on
        // file line 5
        let f = write_temp("a,y\n1,2\n2,?\n3,4\n4,oops\n");
        let err = load_csv(f.path(), "y", Task::Regression, &CsvOptions::default()).unwrap_err();
        match err {
            Rls2Error::CsvParse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn standardize_centers_and_scales() {
        let mut ds = toy(Task::Regression, vec![2.0, 4.0, 6.0], 1);
        ds.x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let (st, train_t, _) = standardize(&ds, &[]).unwrap();
        let col: Vec<f64> = train_t.x.column(0).to_vec();
        assert_relative_eq!(col[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(col[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(col[2], 1.0, epsilon = 1e-12);
        assert_relative_eq!(st.output_intercept, 4.0, epsilon = 1e-12);
        assert_eq!(train_t.y.to_vec(), vec![-2.0, 0.0, 2.0]);
    }

    #[test]
    fn constant_feature_is_flagged_and_unscaled() {
        let mut ds = toy(Task::Regression, vec![1.0, 2.0, 3.0], 1);
        ds.x = Array2::from_shape_vec((3, 1), vec![5.0, 5.0, 5.0]).unwrap();
        let (st, train_t, _) = standardize(&ds, &[]).unwrap();
        assert!(st.constant[0]);
        assert_eq!(train_t.x.column(0).to_vec(), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn standardizer_round_trips() {
        let mut ds = toy(Task::Regression, vec![0.0; 5], 3);
        ds.x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.37 + 1.0);
        let (st, train_t, _) = standardize(&ds, &[]).unwrap();
        let back = st.inverse_transform_x(&train_t.x).unwrap();
        for (a, b) in back.iter().zip(ds.x.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = toy(Task::Regression, (0..10).map(|v| v as f64).collect(), 2);
        let (a1, b1) = split_indices(ds.n_examples(), 0.7, 99).unwrap();
        let (a2, b2) = split_indices(ds.n_examples(), 0.7, 99).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.len(), 7);
        assert_eq!(b1.len(), 3);
        let mut all: Vec<usize> = a1.iter().chain(b1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_uses_floor_rounding() {
        let (train, test) = split_indices(5, 0.6, 0).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_varies_with_seed() {
        let first = split_indices(10, 0.7, 0).unwrap().0;
        let all_same = (0..100u64).all(|s| split_indices(10, 0.7, s).unwrap().0 == first);
        assert!(!all_same);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(matches!(
            split_indices(10, 1.5, 0),
            Err(Rls2Error::BadFraction(_))
        ));
        assert!(matches!(
            split_indices(10, 0.0, 0),
            Err(Rls2Error::BadFraction(_))
        ));
    }

    #[test]
    fn stratified_folds_balance_classes_exactly_when_divisible() {
        let y: Vec<f64> = (0..8).map(|i| if i < 4 { -1.0 } else { 1.0 }).collect();
        let ds = toy(Task::Binary, y, 2);
        let folds = stratified_kfold(&ds, 4, 7).unwrap();
        for (_, val) in &folds {
            assert_eq!(val.len(), 2);
            let pos = val.iter().filter(|&&i| ds.y[i] > 0.0).count();
            assert_eq!(pos, 1);
        }
    }

    #[test]
    fn leave_one_out_folds() {
        let ds = toy(Task::Regression, (0..6).map(|v| v as f64).collect(), 1);
        let folds = stratified_kfold(&ds, 6, 3).unwrap();
        assert_eq!(folds.len(), 6);
        for (train, val) in &folds {
            assert_eq!(val.len(), 1);
            assert_eq!(train.len(), 5);
        }
    }

    #[test]
    fn fourteen_class_toy_folds_hold_one_example_per_class() {
        let y: Vec<f64> = (0..42).map(|i| (i % 14) as f64).collect();
        let ds = toy(Task::Multiclass, y, 1);
        let folds = stratified_kfold(&ds, 3, 11).unwrap();
        for (_, val) in &folds {
            assert_eq!(val.len(), 14);
            for c in 0..14 {
                let count = val.iter().filter(|&&i| ds.y[i] == c as f64).count();
                assert_eq!(count, 1, "class {c} not balanced");
            }
        }
    }

    #[test]
    fn folds_partition_all_indices() {
        for seed in 0..8u64 {
            let y: Vec<f64> = (0..23).map(|i| (i % 3) as f64).collect();
            let ds = toy(Task::Multiclass, y, 1);
            let folds = stratified_kfold(&ds, 4, seed).unwrap();
            let mut seen: Vec<usize> = folds.iter().flat_map(|(_, v)| v.clone()).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..23).collect::<Vec<_>>());
            for (train, val) in &folds {
                assert!(train.iter().all(|i| !val.contains(i)));
                assert_eq!(train.len() + val.len(), 23);
            }
        }
    }

    #[test]
    fn kfold_rejects_bad_k() {
        let ds = toy(Task::Regression, vec![1.0, 2.0], 1);
        assert!(stratified_kfold(&ds, 1, 0).is_err());
        assert!(stratified_kfold(&ds, 3, 0).is_err());
    }

    #[test]
    fn indices_write_one_per_line() {
        let mut buf = Vec::new();
        write_indices(&mut buf, &[3, 1, 4]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3\n1\n4\n");
    }

    #[test]
    fn folds_are_identical_across_calls() {
        let y: Vec<f64> = (0..17).map(|i| (i % 3) as f64).collect();
        let ds = toy(Task::Multiclass, y, 2);
        assert_eq!(
            stratified_kfold(&ds, 4, 9).unwrap(),
            stratified_kfold(&ds, 4, 9).unwrap()
        );
        assert_eq!(kfold(17, 4, 9).unwrap(), kfold(17, 4, 9).unwrap());
        assert_ne!(kfold(17, 4, 9).unwrap(), kfold(17, 4, 10).unwrap());
    }

    #[test]
    fn semicolon_delimiter_is_honored() {
        let f = write_temp("a;b;y\n1;2;3\n4;5;6\n");
        let options = CsvOptions {
            delimiter: b';',
            has_header: true,
        };
        let ds = load_csv(f.path(), "y", Task::Regression, &options).unwrap();
        assert_eq!(ds.x[[1, 1]], 5.0);
        assert_eq!(ds.y.to_vec(), vec![3.0, 6.0]);
    }

    #[test]
    fn headerless_files_use_positional_names() {
        let f = write_temp("1,2,3\n4,5,6\n");
        let options = CsvOptions {
            delimiter: b',',
            has_header: false,
        };
        let ds = load_csv(f.path(), "c3", Task::Regression, &options).unwrap();
        assert_eq!(ds.feature_names, vec!["c1", "c2"]);
        assert_eq!(ds.y.to_vec(), vec![3.0, 6.0]);
    }
}
