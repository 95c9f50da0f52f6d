//! Trained-model abstraction: prediction on new inputs, classification
//! decision rules, one-vs-all multiclass, metrics and persistence.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer, Task};
use crate::error::{Result, Rls2Error};
use crate::kernel::{
    build_bank, cross_kernel_row, BasisKernelSpec, KernelBank, KernelCentering, ScalingRule,
};
use crate::optimizer::{fit, fit_path, FitOptions, Rls2Fit};
use crate::select::{select_lambda, SelectionRule, ValidationCurve};
use crate::simplex::SimplexPoint;

const MODEL_FORMAT: &str = "rls2-model";
const MODEL_VERSION: u32 = 1;

/// Everything needed to predict on new inputs.
///
/// Inputs given to [`TrainedModel::predict`] are passed through the stored
/// standardizer (when one is present), so `train_x` always holds the inputs
/// in the transformed space the kernels were built on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedModel {
    pub task: Task,
    pub specs: Vec<BasisKernelSpec>,
    pub scalings: Vec<f64>,
    pub centering: Option<Vec<KernelCentering>>,
    pub train_x: Array2<f64>,
    pub c: Array1<f64>,
    pub d: SimplexPoint,
    pub lambda: f64,
    pub intercept: f64,
    pub feature_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
    /// Original label strings for binary tasks whose labels were remapped
    /// to -1/+1 (sorted order: index 0 maps to -1).
    pub class_labels: Option<Vec<String>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn predict_core(
    specs: &[BasisKernelSpec],
    scalings: &[f64],
    centering: Option<&[KernelCentering]>,
    train_x: &Array2<f64>,
    c: &Array1<f64>,
    d: &SimplexPoint,
    intercept: f64,
    x_star: &Array2<f64>,
) -> Array1<f64> {
    let mut out = Array1::from_elem(x_star.nrows(), intercept);
    for (k, &dk) in d.weights().iter().enumerate() {
        if dk <= 0.0 {
            continue;
        }
        let meta = centering.map(|all| &all[k]);
        for (t, x_row) in x_star.rows().into_iter().enumerate() {
            let row = cross_kernel_row(&specs[k], scalings[k], train_x, x_row, meta);
            out[t] += dk * row.dot(c);
        }
    }
    out
}

/// Predictions for new inputs given the bank a fit was computed on.
pub fn predict_with_bank(
    bank: &KernelBank,
    c: &Array1<f64>,
    d: &SimplexPoint,
    intercept: f64,
    x_star: &Array2<f64>,
) -> Result<Array1<f64>> {
    if x_star.ncols() != bank.n_features() {
        return Err(Rls2Error::DimensionMismatch(format!(
            "bank expects {} features, inputs have {}",
            bank.n_features(),
            x_star.ncols()
        )));
    }
    Ok(predict_core(
        &bank.specs,
        &bank.scalings,
        bank.centering.as_deref(),
        &bank.train_x,
        c,
        d,
        intercept,
        x_star,
    ))
}

impl TrainedModel {
    /// Package a fit for prediction and persistence.
    pub fn from_fit(
        bank: &KernelBank,
        fit: &Rls2Fit,
        intercept: f64,
        task: Task,
        feature_names: Vec<String>,
        standardizer: Option<Standardizer>,
    ) -> TrainedModel {
        TrainedModel {
            task,
            specs: bank.specs.clone(),
            scalings: bank.scalings.clone(),
            centering: bank.centering.clone(),
            train_x: bank.train_x.clone(),
            c: fit.c.clone(),
            d: fit.d.clone(),
            lambda: fit.lambda,
            intercept,
            feature_names,
            standardizer,
            class_labels: None,
        }
    }

    pub fn with_class_labels(mut self, labels: Option<Vec<String>>) -> TrainedModel {
        self.class_labels = labels;
        self
    }

    /// Real-valued predictions. Raw inputs are standardized with the stored
    /// standardizer when the model carries one.
    pub fn predict(&self, x_star: &Array2<f64>) -> Result<Array1<f64>> {
        let transformed;
        let x = match &self.standardizer {
            Some(st) => {
                transformed = st.transform_x(x_star)?;
                &transformed
            }
            None => x_star,
        };
        if x.ncols() != self.train_x.ncols() {
            return Err(Rls2Error::DimensionMismatch(format!(
                "model expects {} features, inputs have {}",
                self.train_x.ncols(),
                x.ncols()
            )));
        }
        Ok(predict_core(
            &self.specs,
            &self.scalings,
            self.centering.as_deref(),
            &self.train_x,
            &self.c,
            &self.d,
            self.intercept,
            x,
        ))
    }

    /// Class labels in {-1, +1} by the sign of the prediction; an exact
    /// zero maps to +1.
    pub fn predict_class(&self, x_star: &Array2<f64>) -> Result<Array1<f64>> {
        if self.task != Task::Binary {
            return Err(Rls2Error::TaskMismatch {
                expected: "binary",
                found: self.task.name(),
            });
        }
        Ok(self.predict(x_star)?.mapv(sign_label))
    }
}

fn sign_label(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Root mean squared error.
pub fn rmse(y: &Array1<f64>, y_hat: &Array1<f64>) -> Result<f64> {
    if y.is_empty() {
        return Err(Rls2Error::EmptyInput("rmse"));
    }
    if y.len() != y_hat.len() {
        return Err(Rls2Error::DimensionMismatch(format!(
            "rmse over vectors of lengths {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    let sq = y
        .iter()
        .zip(y_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    Ok((sq / y.len() as f64).sqrt())
}

/// Fraction of matching labels.
pub fn accuracy(labels: &Array1<f64>, predicted: &Array1<f64>) -> Result<f64> {
    if labels.is_empty() {
        return Err(Rls2Error::EmptyInput("accuracy"));
    }
    if labels.len() != predicted.len() {
        return Err(Rls2Error::DimensionMismatch(format!(
            "accuracy over vectors of lengths {} and {}",
            labels.len(),
            predicted.len()
        )));
    }
    let hits = labels
        .iter()
        .zip(predicted.iter())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// One binary model per class, combined by confidence argmax.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OvaModel {
    pub class_labels: Vec<String>,
    pub models: Vec<TrainedModel>,
}

/// How each binary member of an OVA ensemble picks its lambda.
#[derive(Clone, Debug)]
pub enum LambdaSelection {
    Fixed(f64),
    CrossValidated {
        grid: Vec<f64>,
        folds: usize,
        seed: u64,
        rule: SelectionRule,
        /// Select one lambda for the whole ensemble from the multiclass
        /// validation accuracy instead of one per class.
        shared: bool,
    },
}

/// Settings for [`ova_fit`].
#[derive(Clone, Debug)]
pub struct OvaSettings {
    pub specs: Vec<BasisKernelSpec>,
    pub scaling: ScalingRule,
    pub lambda: LambdaSelection,
    pub fit: FitOptions,
    /// Standardize features (per fold during selection, on the full
    /// training set for the final refit).
    pub standardize: bool,
    /// Extra inputs for transductive scaling at the final refit (fold
    /// validation inputs serve that role during selection).
    pub test_x: Option<Array2<f64>>,
}

fn class_count(ds: &Dataset) -> Result<usize> {
    let n_classes = match &ds.class_labels {
        Some(labels) => labels.len(),
        None => ds.y.iter().fold(0.0f64, |m, &v| m.max(v)) as usize + 1,
    };
    if n_classes < 2 {
        return Err(Rls2Error::Config(
            "multiclass task needs at least 2 classes".into(),
        ));
    }
    for class in 0..n_classes {
        if !ds.y.iter().any(|&v| v == class as f64) {
            let name = class_name(ds, class);
            return Err(Rls2Error::MissingClass(name));
        }
    }
    Ok(n_classes)
}

fn class_name(ds: &Dataset, class: usize) -> String {
    ds.class_labels
        .as_ref()
        .and_then(|l| l.get(class).cloned())
        .unwrap_or_else(|| class.to_string())
}

fn binary_targets(y: &Array1<f64>, class: usize) -> Array1<f64> {
    y.mapv(|v| if v == class as f64 { 1.0 } else { -1.0 })
}

/// Per-fold, per-class, per-lambda validation predictions for an OVA grid
/// search. Banks are shared across classes when the scaling rule does not
/// look at labels.
struct FoldPaths {
    /// val_preds[class][lambda_index] = real-valued outputs on the fold's
    /// validation rows
    val_preds: Vec<Vec<Array1<f64>>>,
    val_y: Array1<f64>,
}

fn ova_fold_paths(
    ds: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    settings: &OvaSettings,
    grid: &[f64],
    n_classes: usize,
) -> Result<FoldPaths> {
    let fold_train = ds.subset(train_idx);
    let fold_val = ds.subset(val_idx);
    let (train_t, val_x) = if settings.standardize {
        let (_, train_t, mut others) = crate::data::standardize(&fold_train, &[&fold_val])?;
        (train_t, others.remove(0).x)
    } else {
        (fold_train.clone(), fold_val.x.clone())
    };
    let test_x = settings.scaling.transductive.then_some(&val_x);

    let mut shared_bank: Option<KernelBank> = None;
    if !settings.scaling.kind.is_label_dependent() {
        shared_bank = Some(build_bank(
            &train_t,
            &settings.specs,
            &settings.scaling,
            test_x,
        )?);
    }

    let mut val_preds = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let y_c = binary_targets(&train_t.y, class);
        let owned_bank;
        let bank = match &shared_bank {
            Some(b) => b,
            None => {
                // label-dependent scaling: a bank per class
                let mut class_ds = train_t.clone();
                class_ds.y = y_c.clone();
                class_ds.task = Task::Binary;
                owned_bank = build_bank(&class_ds, &settings.specs, &settings.scaling, test_x)?;
                &owned_bank
            }
        };
        let path = fit_path(bank, &y_c, grid, &settings.fit)?;
        let mut per_lambda = Vec::with_capacity(grid.len());
        for f in &path.fits {
            per_lambda.push(predict_with_bank(bank, &f.c, &f.d, 0.0, &val_x)?);
        }
        val_preds.push(per_lambda);
    }
    Ok(FoldPaths {
        val_preds,
        val_y: fold_val.y.clone(),
    })
}

/// Shared-lambda validation curve for an OVA ensemble: per-lambda mean
/// multiclass accuracy (argmax of per-class confidences) over stratified
/// folds.
pub fn ova_cv_curve(
    ds: &Dataset,
    settings: &OvaSettings,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<ValidationCurve> {
    let n_classes = class_count(ds)?;
    let fold_indices = crate::data::stratified_kfold(ds, folds, seed)?;
    let mut scores = vec![Vec::with_capacity(folds); grid.len()];
    for (train_idx, val_idx) in &fold_indices {
        let fold = ova_fold_paths(ds, train_idx, val_idx, settings, grid, n_classes)?;
        for (li, bucket) in scores.iter_mut().enumerate() {
            let preds = ensemble_argmax(&fold.val_preds, li);
            bucket.push(accuracy(&fold.val_y, &preds)?);
        }
    }
    Ok(ValidationCurve::from_fold_scores(
        grid.to_vec(),
        scores,
        true,
    ))
}

fn ensemble_argmax(val_preds: &[Vec<Array1<f64>>], lambda_index: usize) -> Array1<f64> {
    let n_rows = val_preds[0][lambda_index].len();
    Array1::from_shape_fn(n_rows, |row| {
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (class, per_lambda) in val_preds.iter().enumerate() {
            let v = per_lambda[lambda_index][row];
            if v > best_val {
                best_val = v;
                best = class;
            }
        }
        best as f64
    })
}

/// Fit a one-vs-all ensemble on a multiclass dataset.
pub fn ova_fit(ds: &Dataset, settings: &OvaSettings) -> Result<OvaModel> {
    if ds.task != Task::Multiclass {
        return Err(Rls2Error::TaskMismatch {
            expected: "multiclass",
            found: ds.task.name(),
        });
    }
    let n_classes = class_count(ds)?;
    let labels: Vec<String> = (0..n_classes).map(|c| class_name(ds, c)).collect();

    // one lambda per class
    let lambdas: Vec<f64> = match &settings.lambda {
        LambdaSelection::Fixed(lambda) => vec![*lambda; n_classes],
        LambdaSelection::CrossValidated {
            grid,
            folds,
            seed,
            rule,
            shared,
        } => {
            if *shared {
                let curve = ova_cv_curve(ds, settings, grid, *folds, *seed)?;
                let idx = select_lambda(&curve, *rule);
                vec![grid[idx]; n_classes]
            } else {
                let fold_indices = crate::data::stratified_kfold(ds, *folds, *seed)?;
                let mut per_class_scores =
                    vec![vec![Vec::with_capacity(*folds); grid.len()]; n_classes];
                for (train_idx, val_idx) in &fold_indices {
                    let fold = ova_fold_paths(ds, train_idx, val_idx, settings, grid, n_classes)?;
                    for (class, class_scores) in per_class_scores.iter_mut().enumerate() {
                        let val_c = binary_targets(&fold.val_y, class);
                        for (li, bucket) in class_scores.iter_mut().enumerate() {
                            let signs = fold.val_preds[class][li].mapv(sign_label);
                            bucket.push(accuracy(&val_c, &signs)?);
                        }
                    }
                }
                per_class_scores
                    .into_iter()
                    .map(|scores| {
                        let curve = ValidationCurve::from_fold_scores(grid.to_vec(), scores, true);
                        grid[select_lambda(&curve, *rule)]
                    })
                    .collect()
            }
        }
    };

    // final refit on the full training data
    let (train_t, standardizer) = if settings.standardize {
        let (st, train_t, _) = crate::data::standardize(ds, &[])?;
        (train_t, Some(st))
    } else {
        (ds.clone(), None)
    };
    let refit_test_x = match (&settings.test_x, &standardizer) {
        (Some(tx), Some(st)) => Some(st.transform_x(tx)?),
        (Some(tx), None) => Some(tx.clone()),
        (None, _) => None,
    };
    let mut shared_bank: Option<KernelBank> = None;
    if !settings.scaling.kind.is_label_dependent() {
        shared_bank = Some(build_bank(
            &train_t,
            &settings.specs,
            &settings.scaling,
            refit_test_x.as_ref(),
        )?);
    }
    let mut models = Vec::with_capacity(n_classes);
    for (class, &lambda) in lambdas.iter().enumerate() {
        let y_c = binary_targets(&train_t.y, class);
        let owned_bank;
        let bank = match &shared_bank {
            Some(b) => b,
            None => {
                let mut class_ds = train_t.clone();
                class_ds.y = y_c.clone();
                class_ds.task = Task::Binary;
                owned_bank = build_bank(
                    &class_ds,
                    &settings.specs,
                    &settings.scaling,
                    refit_test_x.as_ref(),
                )?;
                &owned_bank
            }
        };
        let fit_result = fit(bank, &y_c, lambda, None, &settings.fit)?;
        models.push(TrainedModel::from_fit(
            bank,
            &fit_result,
            0.0,
            Task::Binary,
            ds.feature_names.clone(),
            standardizer.clone(),
        ));
    }
    Ok(OvaModel {
        class_labels: labels,
        models,
    })
}

/// Class ids by confidence argmax; ties go to the smallest class index.
pub fn ova_predict_ids(model: &OvaModel, x_star: &Array2<f64>) -> Result<Vec<usize>> {
    let mut confidences = Vec::with_capacity(model.models.len());
    for m in &model.models {
        confidences.push(m.predict(x_star)?);
    }
    let mut out = Vec::with_capacity(x_star.nrows());
    for row in 0..x_star.nrows() {
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (class, conf) in confidences.iter().enumerate() {
            if conf[row] > best_val {
                best_val = conf[row];
                best = class;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Class labels by confidence argmax.
pub fn ova_predict(model: &OvaModel, x_star: &Array2<f64>) -> Result<Vec<String>> {
    Ok(ova_predict_ids(model, x_star)?
        .into_iter()
        .map(|c| model.class_labels[c].clone())
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "data")]
#[allow(clippy::large_enum_variant)]
pub enum ModelPayload {
    #[serde(rename = "single")]
    Single(TrainedModel),
    #[serde(rename = "ova")]
    Ova(OvaModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    payload: ModelPayload,
}

fn save_payload<P: AsRef<Path>>(payload: ModelPayload, path: P) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        payload,
    };
    let mut text =
        serde_json::to_string_pretty(&file).map_err(|e| Rls2Error::ModelFormat(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Load any model file; callers dispatch on the payload kind.
pub fn load_payload<P: AsRef<Path>>(path: P) -> Result<ModelPayload> {
    let text = fs::read_to_string(path)?;
    let probe: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Rls2Error::ModelFormat(e.to_string()))?;
    if probe.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Rls2Error::ModelFormat(
            "missing or unexpected 'format' field".into(),
        ));
    }
    let version = probe
        .get("version")
        .and_then(|v| v.as_u64())
        .unwrap_or_default() as u32;
    if version != MODEL_VERSION {
        return Err(Rls2Error::ModelVersion {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Rls2Error::ModelFormat(e.to_string()))?;
    Ok(file.payload)
}

/// Persist one model as versioned structured text. Floats survive the
/// round trip losslessly (shortest-representation encoding).
pub fn save_model<P: AsRef<Path>>(model: &TrainedModel, path: P) -> Result<()> {
    save_payload(ModelPayload::Single(model.clone()), path)
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<TrainedModel> {
    match load_payload(path)? {
        ModelPayload::Single(m) => Ok(m),
        ModelPayload::Ova(_) => Err(Rls2Error::ModelFormat(
            "file holds a one-vs-all ensemble; load it as an ova model".into(),
        )),
    }
}

pub fn save_ova<P: AsRef<Path>>(model: &OvaModel, path: P) -> Result<()> {
    save_payload(ModelPayload::Ova(model.clone()), path)
}

pub fn load_ova<P: AsRef<Path>>(path: P) -> Result<OvaModel> {
    match load_payload(path)? {
        ModelPayload::Ova(m) => Ok(m),
        ModelPayload::Single(_) => Err(Rls2Error::ModelFormat(
            "file holds a single model, not a one-vs-all ensemble".into(),
        )),
    }
}

#[cfg(test)]
#[allow(
    clippy::needless_range_loop,
    clippy::manual_range_contains,
    clippy::useless_vec
)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Task};
    use crate::kernel::{
        default_benchmark_specs, eval_kernel, linear_feature_specs, FeatureSubset, ScalingKind,
    };
    use crate::optimizer::{apply_r, assemble_r};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64, centered: bool) -> (KernelBank, TrainedModel, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((8, 2), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(8, |_| rng.random::<f64>() * 2.0 - 1.0);
        let ds = Dataset {
            x,
            y: y.clone(),
            feature_names: vec!["a".into(), "b".into()],
            task: Task::Regression,
            class_labels: None,
        };
        let rule = if centered {
            ScalingRule::new(ScalingKind::TraceInverseCentered)
        } else {
            ScalingRule::new(ScalingKind::TraceInverse)
        };
        let bank = build_bank(&ds, &default_benchmark_specs(2), &rule, None).unwrap();
        let fit_result = fit(&bank, &y, 0.5, None, &FitOptions::default()).unwrap();
        let model = TrainedModel::from_fit(
            &bank,
            &fit_result,
            0.25,
            Task::Regression,
            ds.feature_names.clone(),
            None,
        );
        (bank, model, y)
    }

    #[test]
    fn zero_coefficients_predict_the_intercept() {
        let (bank, mut model, _) = small_model(0, false);
        model.c.fill(0.0);
        let x = bank.train_x.clone();
        let preds = model.predict(&x).unwrap();
        for p in preds.iter() {
            assert_relative_eq!(*p, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn training_point_prediction_matches_gram_row() {
        let (bank, model, _) = small_model(1, false);
        let preds = model.predict(&bank.train_x).unwrap();
        let rc = apply_r(&bank, &model.d, &model.c);
        for (p, r) in preds.iter().zip(rc.iter()) {
            assert!((p - (r + 0.25)).abs() <= 1e-10 * (1.0 + r.abs()));
        }
        // and through the assembled matrix
        let r_full = assemble_r(&bank, &model.d).dot(&model.c);
        for (p, r) in preds.iter().zip(r_full.iter()) {
            assert!((p - (r + 0.25)).abs() <= 1e-10 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn prediction_matches_double_loop_oracle() {
        for centered in [false, true] {
            let (_, model, _) = small_model(2, centered);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let x_star = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>() * 2.0 - 1.0);
            let preds = model.predict(&x_star).unwrap();
            let l = model.train_x.nrows();
            for t in 0..3 {
                let mut expect = model.intercept;
                for (k, &dk) in model.d.weights().iter().enumerate() {
                    if dk == 0.0 {
                        continue;
                    }
                    // raw kernel values
                    let mut raw = vec![0.0; l];
                    for j in 0..l {
                        raw[j] = eval_kernel(&model.specs[k], model.train_x.row(j), x_star.row(t));
                    }
                    let vals: Vec<f64> = match model.centering.as_ref().map(|cc| &cc[k]) {
                        None => raw.clone(),
                        Some(meta) => {
                            let star_mean = raw.iter().sum::<f64>() / l as f64;
                            (0..l)
                                .map(|j| raw[j] - star_mean - meta.row_means[j] + meta.grand_mean)
                                .collect()
                        }
                    };
                    for j in 0..l {
                        expect += dk * model.scalings[k] * vals[j] * model.c[j];
                    }
                }
                assert!(
                    (preds[t] - expect).abs() <= 1e-10 * (1.0 + expect.abs()),
                    "centered={centered}: {} vs {expect}",
                    preds[t]
                );
            }
        }
    }

    #[test]
    fn class_predictions_use_sign_with_zero_to_plus_one() {
        let (_, mut model, _) = small_model(3, false);
        model.task = Task::Binary;
        model.c.fill(0.0);
        for (intercept, expect) in [(0.3, 1.0), (-1e-9, -1.0), (0.0, 1.0)] {
            model.intercept = intercept;
            let x = array![[0.1, 0.2]];
            let labels = model.predict_class(&x).unwrap();
            assert_eq!(labels[0], expect);
        }
    }

    #[test]
    fn class_prediction_requires_binary_task() {
        let (_, model, _) = small_model(4, false);
        let x = array![[0.1, 0.2]];
        assert!(matches!(
            model.predict_class(&x),
            Err(Rls2Error::TaskMismatch { .. })
        ));
    }

    #[test]
    fn standardizer_is_applied_inside_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x_raw = Array2::from_shape_fn((10, 2), |_| rng.random::<f64>() * 10.0 + 3.0);
        let y = Array1::from_shape_fn(10, |_| rng.random::<f64>());
        let ds = Dataset {
            x: x_raw.clone(),
            y: y.clone(),
            feature_names: vec!["a".into(), "b".into()],
            task: Task::Regression,
            class_labels: None,
        };
        let (st, train_t, _) = crate::data::standardize(&ds, &[]).unwrap();
        let bank = build_bank(
            &train_t,
            &default_benchmark_specs(2),
            &ScalingRule::new(ScalingKind::TraceInverse),
            None,
        )
        .unwrap();
        let fit_result = fit(&bank, &train_t.y, 0.5, None, &FitOptions::default()).unwrap();
        let intercept = st.output_intercept;
        let model = TrainedModel::from_fit(
            &bank,
            &fit_result,
            intercept,
            Task::Regression,
            ds.feature_names.clone(),
            Some(st.clone()),
        );
        // feeding raw inputs equals transforming them by hand first
        let x_new = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>() * 10.0 + 3.0);
        let direct = model.predict(&x_new).unwrap();
        let manual = predict_with_bank(
            &bank,
            &fit_result.c,
            &fit_result.d,
            intercept,
            &st.transform_x(&x_new).unwrap(),
        )
        .unwrap();
        for (a, b) in direct.iter().zip(manual.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn metric_examples() {
        let y = array![0.0, 0.0];
        let y_hat = array![3.0, 4.0];
        assert_relative_eq!(rmse(&y, &y_hat).unwrap(), (25.0f64 / 2.0).sqrt());
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);

        let labels = array![1.0, -1.0, 1.0, 1.0];
        let predicted = array![1.0, -1.0, -1.0, 1.0];
        assert_relative_eq!(accuracy(&labels, &predicted).unwrap(), 0.75);
        assert_relative_eq!(accuracy(&labels, &labels).unwrap(), 1.0);

        let empty = Array1::<f64>::zeros(0);
        assert!(rmse(&empty, &empty).is_err());
        assert!(accuracy(&empty, &empty).is_err());
    }

    #[test]
    fn save_load_predict_is_bit_identical() {
        let (_, model, _) = small_model(5, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>());
        let a = model.predict(&x).unwrap();
        let b = loaded.predict(&x).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
        // double round trip is byte identical
        let path2 = dir.path().join("model2.json");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_model_file_errors() {
        let (_, model, _) = small_model(7, false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Rls2Error::ModelFormat(_))));
    }

    #[test]
    fn version_mismatch_errors() {
        let (_, model, _) = small_model(8, false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let text =
            fs::read_to_string(&path)
                .unwrap()
                .replacen("\"version\": 1", "\"version\": 99", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Rls2Error::ModelVersion { found: 99, .. })
        ));
    }

    #[test]
    fn zero_active_model_round_trips_and_predicts_intercept() {
        let (_, mut model, _) = small_model(9, false);
        model.c.fill(0.0);
        model.intercept = 2.5;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let x = array![[0.0, 0.0]];
        assert_eq!(loaded.predict(&x).unwrap()[0], 2.5);
    }

    fn blobs_dataset(per_class: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let n = per_class * centers.len();
        let mut x = Array2::zeros((n, 2));
        let mut y = Array1::zeros(n);
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..per_class {
                let row = c * per_class + i;
                x[[row, 0]] = cx + noise * (rng.random::<f64>() - 0.5);
                x[[row, 1]] = cy + noise * (rng.random::<f64>() - 0.5);
                y[row] = c as f64;
            }
        }
        Dataset {
            x,
            y,
            feature_names: vec!["x1".into(), "x2".into()],
            task: Task::Multiclass,
            class_labels: Some(vec!["a".into(), "b".into(), "c".into()]),
        }
    }

    #[test]
    fn ova_separable_blobs_reach_perfect_training_accuracy() {
        let ds = blobs_dataset(10, 1.0, 0);
        let settings = OvaSettings {
            specs: vec![BasisKernelSpec::Polynomial {
                degree: 1,
                subset: FeatureSubset::All,
            }],
            scaling: ScalingRule::new(ScalingKind::TraceInverse),
            lambda: LambdaSelection::CrossValidated {
                grid: crate::optimizer::log_lambda_grid(1e-4, 1e2, 7),
                folds: 3,
                seed: 5,
                rule: SelectionRule::Best,
                shared: false,
            },
            fit: FitOptions::default(),
            standardize: false,
            test_x: None,
        };
        let model = ova_fit(&ds, &settings).unwrap();
        assert_eq!(model.models.len(), 3);
        let preds = ova_predict_ids(&model, &ds.x).unwrap();
        let hits = preds
            .iter()
            .zip(ds.y.iter())
            .filter(|(&p, &t)| p as f64 == t)
            .count();
        assert_eq!(hits, ds.n_examples());
        let labels = ova_predict(&model, &ds.x).unwrap();
        assert_eq!(labels[0], "a");
    }

    #[test]
    fn ova_two_class_sign_agreement_on_mirrored_confidences() {
        // with two classes the per-class targets are exact negatives, so with
        // a shared bank and shared lambda the confidences mirror and the
        // argmax agrees with the single binary model's sign rule
        let mut ds = blobs_dataset(8, 1.0, 1);
        ds.y.mapv_inplace(|v| if v == 2.0 { 0.0 } else { v });
        ds.class_labels = Some(vec!["a".into(), "b".into()]);
        let settings = OvaSettings {
            specs: vec![BasisKernelSpec::Polynomial {
                degree: 1,
                subset: FeatureSubset::All,
            }],
            scaling: ScalingRule::new(ScalingKind::TraceInverse),
            lambda: LambdaSelection::Fixed(0.1),
            fit: FitOptions::tight(),
            standardize: false,
            test_x: None,
        };
        let model = ova_fit(&ds, &settings).unwrap();
        let conf0 = model.models[0].predict(&ds.x).unwrap();
        let conf1 = model.models[1].predict(&ds.x).unwrap();
        let ova_ids = ova_predict_ids(&model, &ds.x).unwrap();
        for row in 0..ds.n_examples() {
            assert!((conf0[row] + conf1[row]).abs() <= 1e-8);
            let binary_choice = if conf1[row] >= 0.0 { 1 } else { 0 };
            if (conf0[row] - conf1[row]).abs() > 1e-12 {
                assert_eq!(ova_ids[row], binary_choice);
            }
        }
    }

    #[test]
    fn ova_ties_break_to_smallest_class_index() {
        let preds = vec![vec![array![0.2]], vec![array![0.9]], vec![array![0.9]]];
        let out = ensemble_argmax(&preds, 0);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn ova_errors_on_missing_class() {
        let mut ds = blobs_dataset(5, 1.0, 2);
        // declare a 4th label that no example carries
        ds.class_labels = Some(vec!["a".into(), "b".into(), "c".into(), "ghost".into()]);
        let settings = OvaSettings {
            specs: linear_feature_specs(2),
            scaling: ScalingRule::new(ScalingKind::TraceInverse),
            lambda: LambdaSelection::Fixed(1.0),
            fit: FitOptions::default(),
            standardize: false,
            test_x: None,
        };
        assert!(matches!(
            ova_fit(&ds, &settings),
            Err(Rls2Error::MissingClass(name)) if name == "ghost"
        ));
    }

    #[test]
    fn ova_deterministic_across_runs() {
        let ds = blobs_dataset(6, 4.0, 3);
        let settings = OvaSettings {
            specs: vec![BasisKernelSpec::Polynomial {
                degree: 1,
                subset: FeatureSubset::All,
            }],
            scaling: ScalingRule::new(ScalingKind::TraceInverse),
            lambda: LambdaSelection::CrossValidated {
                grid: crate::optimizer::log_lambda_grid(1e-3, 1e1, 5),
                folds: 3,
                seed: 9,
                rule: SelectionRule::Best,
                shared: true,
            },
            fit: FitOptions::default(),
            standardize: true,
            test_x: None,
        };
        let a = ova_fit(&ds, &settings).unwrap();
        let b = ova_fit(&ds, &settings).unwrap();
        let pa = ova_predict_ids(&a, &ds.x).unwrap();
        let pb = ova_predict_ids(&b, &ds.x).unwrap();
        assert_eq!(pa, pb);
        for (ma, mb) in a.models.iter().zip(b.models.iter()) {
            assert_eq!(ma.lambda, mb.lambda);
            for (ca, cb) in ma.c.iter().zip(mb.c.iter()) {
                assert_eq!(ca.to_bits(), cb.to_bits());
            }
        }
    }
}
