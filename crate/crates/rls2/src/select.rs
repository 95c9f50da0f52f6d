//! Cross-validation curves over a lambda grid and the rules that pick a
//! lambda from them.

use std::io::Write;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, stratified_kfold, Dataset, Task};
use crate::error::{Result, Rls2Error};
use crate::kernel::{build_bank, BasisKernelSpec, ScalingRule};
use crate::model::{accuracy, predict_with_bank, rmse};
use crate::optimizer::{fit_path, FitOptions};

/// How to pick a lambda from a validation curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// The best mean validation score; ties prefer the largest lambda.
    Best,
    /// The largest lambda whose mean score lies within one standard error
    /// of the best (the least complex model near the optimum).
    OneStdError,
}

/// Mean validation score and its standard error per lambda. Lambdas are
/// stored descending, matching path order.
#[derive(Clone, Debug)]
pub struct ValidationCurve {
    pub lambdas: Vec<f64>,
    pub mean_score: Vec<f64>,
    pub std_error: Vec<f64>,
    /// true for accuracy, false for RMSE
    pub higher_is_better: bool,
}

impl ValidationCurve {
    /// Aggregate per-fold scores, one bucket per lambda.
    pub fn from_fold_scores(
        lambdas: Vec<f64>,
        scores: Vec<Vec<f64>>,
        higher_is_better: bool,
    ) -> ValidationCurve {
        let mut mean_score = Vec::with_capacity(lambdas.len());
        let mut std_error = Vec::with_capacity(lambdas.len());
        for bucket in &scores {
            let k = bucket.len() as f64;
            let mean = bucket.iter().sum::<f64>() / k;
            let se = if bucket.len() > 1 {
                let var = bucket.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                0.0
            };
            mean_score.push(mean);
            std_error.push(se);
        }
        ValidationCurve {
            lambdas,
            mean_score,
            std_error,
            higher_is_better,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,mean_score,std_error")?;
        for i in 0..self.lambdas.len() {
            writeln!(
                w,
                "{},{},{}",
                self.lambdas[i], self.mean_score[i], self.std_error[i]
            )?;
        }
        Ok(())
    }
}

/// Index into the curve's lambda grid picked by the rule. Grids are
/// descending, so ties and the one-standard-error band resolve toward the
/// smallest index (the largest lambda).
pub fn select_lambda(curve: &ValidationCurve, rule: SelectionRule) -> usize {
    let n = curve.mean_score.len();
    assert!(n > 0, "empty validation curve");
    let better = |a: f64, b: f64| {
        if curve.higher_is_better {
            a > b
        } else {
            a < b
        }
    };
    let mut best = 0usize;
    for i in 1..n {
        if better(curve.mean_score[i], curve.mean_score[best]) {
            best = i;
        }
    }
    match rule {
        SelectionRule::Best => best,
        SelectionRule::OneStdError => {
            let threshold = if curve.higher_is_better {
                curve.mean_score[best] - curve.std_error[best]
            } else {
                curve.mean_score[best] + curve.std_error[best]
            };
            for i in 0..n {
                let ok = if curve.higher_is_better {
                    curve.mean_score[i] >= threshold
                } else {
                    curve.mean_score[i] <= threshold
                };
                if ok {
                    return i;
                }
            }
            best
        }
    }
}

/// Settings for [`cv_curve`].
#[derive(Clone, Debug)]
pub struct CvSettings {
    pub specs: Vec<BasisKernelSpec>,
    pub scaling: ScalingRule,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub standardize: bool,
    /// Subtract the training-output mean before fitting (regression).
    pub intercept: bool,
    /// Stratify folds by class (classification only; regression always
    /// uses plain folds).
    pub stratified: bool,
}

/// k-fold validation curve for a regression or binary model: warm-started
/// paths per fold, scored by RMSE (regression) or accuracy (binary) on the
/// held-out fold.
pub fn cv_curve(ds: &Dataset, settings: &CvSettings) -> Result<ValidationCurve> {
    if ds.task == Task::Multiclass {
        return Err(Rls2Error::TaskMismatch {
            expected: "regression or binary",
            found: "multiclass",
        });
    }
    let folds = if settings.stratified {
        stratified_kfold(ds, settings.folds, settings.seed)?
    } else {
        crate::data::kfold(ds.n_examples(), settings.folds, settings.seed)?
    };
    let higher_is_better = ds.task == Task::Binary;
    let mut scores = vec![Vec::with_capacity(folds.len()); settings.grid.len()];
    for (train_idx, val_idx) in &folds {
        let fold_train = ds.subset(train_idx);
        let fold_val = ds.subset(val_idx);
        let val_y_raw = fold_val.y.clone();

        let (mut train_t, val_x, mut intercept) = if settings.standardize {
            let (st, mut train_t, mut others) = standardize(&fold_train, &[&fold_val])?;
            let mut intercept = st.output_intercept;
            if !settings.intercept && ds.task == Task::Regression {
                train_t.y = fold_train.y.clone();
                intercept = 0.0;
            }
            (train_t, others.remove(0).x, intercept)
        } else {
            (fold_train.clone(), fold_val.x.clone(), 0.0)
        };
        if !settings.standardize && settings.intercept && ds.task == Task::Regression {
            intercept = train_t.y.sum() / train_t.n_examples() as f64;
            train_t.y -= intercept;
        }

        let test_x = settings.scaling.transductive.then_some(&val_x);
        let bank = build_bank(&train_t, &settings.specs, &settings.scaling, test_x)?;
        let path = fit_path(&bank, &train_t.y, &settings.grid, &settings.fit)?;
        for (li, fit_result) in path.fits.iter().enumerate() {
            let preds = predict_with_bank(&bank, &fit_result.c, &fit_result.d, intercept, &val_x)?;
            let score = match ds.task {
                Task::Regression => rmse(&val_y_raw, &preds)?,
                Task::Binary => {
                    let signs: Array1<f64> = preds.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
                    accuracy(&val_y_raw, &signs)?
                }
                Task::Multiclass => unreachable!(),
            };
            scores[li].push(score);
        }
    }
    Ok(ValidationCurve::from_fold_scores(
        settings.grid.clone(),
        scores,
        higher_is_better,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{linear_feature_specs, ScalingKind};
    use crate::optimizer::log_lambda_grid;
    use approx::assert_relative_eq;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_se_rule_picks_largest_lambda_within_band() {
        // U-shaped RMSE curve (lower is better), lambdas descending
        let curve = ValidationCurve {
            lambdas: vec![100.0, 10.0, 1.0, 0.1, 0.01],
            mean_score: vec![5.0, 3.2, 3.0, 3.4, 4.8],
            std_error: vec![0.2, 0.25, 0.3, 0.25, 0.2],
            higher_is_better: false,
        };
        // best mean 3.0 at index 2; band is <= 3.3, so index 1 (lambda 10)
        // is the largest qualifying lambda
        assert_eq!(select_lambda(&curve, SelectionRule::Best), 2);
        assert_eq!(select_lambda(&curve, SelectionRule::OneStdError), 1);
    }

    #[test]
    fn one_se_rule_on_accuracy_curves() {
        let curve = ValidationCurve {
            lambdas: vec![100.0, 10.0, 1.0],
            mean_score: vec![0.80, 0.84, 0.85],
            std_error: vec![0.01, 0.02, 0.02],
            higher_is_better: true,
        };
        // band is >= 0.83: index 1 qualifies first
        assert_eq!(select_lambda(&curve, SelectionRule::OneStdError), 1);
    }

    #[test]
    fn ties_prefer_the_largest_lambda() {
        let curve = ValidationCurve {
            lambdas: vec![10.0, 1.0, 0.1],
            mean_score: vec![1.0, 0.5, 0.5],
            std_error: vec![0.0, 0.0, 0.0],
            higher_is_better: false,
        };
        assert_eq!(select_lambda(&curve, SelectionRule::Best), 1);
    }

    fn regression_toy(seed: u64, l: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((l, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(l, |i| {
            2.0 * x[[i, 0]] - x[[i, 2]] + 0.05 * (rng.random::<f64>() - 0.5)
        });
        Dataset {
            x,
            y,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            task: Task::Regression,
            class_labels: None,
        }
    }

    #[test]
    fn constant_targets_give_zero_rmse_at_all_lambdas() {
        let mut ds = regression_toy(0, 12);
        ds.y.fill(3.5);
        let settings = CvSettings {
            specs: linear_feature_specs(3),
            scaling: ScalingRule::new(ScalingKind::FeatureNormInverse),
            grid: log_lambda_grid(1e-4, 1e4, 6),
            folds: 3,
            seed: 1,
            fit: FitOptions::default(),
            standardize: false,
            intercept: true,
            stratified: false,
        };
        let curve = cv_curve(&ds, &settings).unwrap();
        for (mean, se) in curve.mean_score.iter().zip(curve.std_error.iter()) {
            assert!(mean.abs() <= 1e-10);
            assert!(se.abs() <= 1e-10);
        }
        // one-SE picks the most regularized model
        assert_eq!(select_lambda(&curve, SelectionRule::OneStdError), 0);
    }

    #[test]
    fn leave_one_out_curve_has_a_score_per_lambda() {
        let ds = regression_toy(2, 8);
        let settings = CvSettings {
            specs: linear_feature_specs(3),
            scaling: ScalingRule::new(ScalingKind::FeatureNormInverse),
            grid: log_lambda_grid(1e-3, 1e3, 5),
            folds: 8,
            seed: 3,
            fit: FitOptions::default(),
            standardize: false,
            intercept: true,
            stratified: false,
        };
        let curve = cv_curve(&ds, &settings).unwrap();
        assert_eq!(curve.lambdas.len(), 5);
        assert_eq!(curve.mean_score.len(), 5);
        assert!(curve.mean_score.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn cv_is_deterministic() {
        let ds = regression_toy(4, 15);
        let settings = CvSettings {
            specs: linear_feature_specs(3),
            scaling: ScalingRule::new(ScalingKind::FeatureNormInverse),
            grid: log_lambda_grid(1e-3, 1e3, 6),
            folds: 5,
            seed: 11,
            fit: FitOptions::default(),
            standardize: true,
            intercept: true,
            stratified: false,
        };
        let a = cv_curve(&ds, &settings).unwrap();
        let b = cv_curve(&ds, &settings).unwrap();
        for (x, y) in a.mean_score.iter().zip(b.mean_score.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let mut buf_a = Vec::new();
        a.write_csv(&mut buf_a).unwrap();
        let mut buf_b = Vec::new();
        b.write_csv(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn curve_aggregation_matches_hand_computation() {
        let curve = ValidationCurve::from_fold_scores(
            vec![1.0, 0.1],
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]],
            false,
        );
        assert_relative_eq!(curve.mean_score[0], 2.0);
        assert_relative_eq!(
            curve.std_error[0],
            (1.0f64 / 3.0).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(curve.mean_score[1], 4.0);
        assert_relative_eq!(curve.std_error[1], 0.0);
    }
}
