//! Linear specialization: per-feature linear basis kernels give an explicit
//! sparse weight vector, a scaled-ridge closed form, and a degrees-of-freedom
//! proxy for model complexity.

use ndarray::{Array1, Array2};

use crate::error::{Result, Rls2Error};
use crate::kernel::{BasisKernelSpec, KernelBank};
use crate::linalg::{chol_solve, chol_solve_matrix, cholesky};
use crate::optimizer::Rls2Fit;
use crate::simplex::{SimplexPoint, SUPPORT_EPS};

/// Explicit linear model extracted from an RLS2 fit on a bank of
/// per-feature linear kernels: predictions are a' x + intercept with
/// a_j = d_j s_j z_j and z_j = sum_i c_i x_i^j.
#[derive(Clone, Debug)]
pub struct LinearRls2Model {
    /// Feature weights a, one per dataset feature.
    pub weights: Array1<f64>,
    /// z_j = sum_i c_i x_i^j (on centered features when the bank was
    /// centered).
    pub z: Array1<f64>,
    /// Kernel weights mapped onto features (zero at features without a
    /// kernel in the bank).
    pub d: SimplexPoint,
    /// Per-feature scalings (zero at uncovered features).
    pub scalings: Array1<f64>,
    pub intercept: f64,
    /// Features with nonzero kernel weight.
    pub selected: Vec<usize>,
}

impl LinearRls2Model {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Rls2Error::DimensionMismatch(format!(
                "model has {} features, inputs have {}",
                self.weights.len(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weights) + self.intercept)
    }
}

/// Pull the explicit weight vector out of a fit over linear kernels.
///
/// Every spec in the bank must be a `linear_feature` kernel and no feature
/// may appear twice; features without a kernel (for instance dropped as
/// degenerate at bank build) get zero weight. Centered banks fold the
/// feature means into the returned intercept.
pub fn extract_linear_model(
    fit: &Rls2Fit,
    bank: &KernelBank,
    intercept: f64,
) -> Result<LinearRls2Model> {
    let n = bank.n_features();
    let mut feature_of_kernel = Vec::with_capacity(bank.m());
    let mut seen = vec![false; n];
    for spec in &bank.specs {
        match spec {
            BasisKernelSpec::LinearFeature { feature } => {
                if seen[*feature] {
                    return Err(Rls2Error::InvalidSpec(format!(
                        "feature {} appears in two linear kernels",
                        feature + 1
                    )));
                }
                seen[*feature] = true;
                feature_of_kernel.push(*feature);
            }
            _ => return Err(Rls2Error::NotLinearBank),
        }
    }

    let means: Option<Array1<f64>> = bank.is_centered().then(|| {
        let l = bank.n_examples() as f64;
        Array1::from_shape_fn(n, |j| bank.train_x.column(j).sum() / l)
    });

    let mut z = Array1::<f64>::zeros(n);
    for j in 0..n {
        let col = bank.train_x.column(j);
        let raw = col.dot(&fit.c);
        z[j] = match &means {
            Some(mu) => raw - mu[j] * fit.c.sum(),
            None => raw,
        };
    }

    let mut d_feat = vec![0.0; n];
    let mut s_feat = Array1::<f64>::zeros(n);
    for (k, &j) in feature_of_kernel.iter().enumerate() {
        d_feat[j] = fit.d.weights()[k];
        s_feat[j] = bank.scalings[k];
    }
    let weights = Array1::from_shape_fn(n, |j| d_feat[j] * s_feat[j] * z[j]);
    let adjusted_intercept = match &means {
        Some(mu) => intercept - weights.dot(mu),
        None => intercept,
    };
    let selected: Vec<usize> = (0..n).filter(|&j| d_feat[j] > 0.0).collect();
    Ok(LinearRls2Model {
        weights,
        z,
        d: SimplexPoint::new(d_feat)?,
        scalings: s_feat,
        intercept: adjusted_intercept,
        selected,
    })
}

/// Selected features and the scaled design pieces shared by the ridge
/// solve and the degrees-of-freedom trace.
fn scaled_design(
    train_x: &Array2<f64>,
    d: &[f64],
    s: &[f64],
) -> Result<(Vec<usize>, Array2<f64>, Vec<f64>)> {
    let n = train_x.ncols();
    if d.len() != n || s.len() != n {
        return Err(Rls2Error::DimensionMismatch(format!(
            "expected {n} kernel weights and scalings to match the feature count"
        )));
    }
    let selected: Vec<usize> = (0..n).filter(|&j| d[j] > SUPPORT_EPS).collect();
    let gammas: Vec<f64> = selected.iter().map(|&j| s[j] * d[j]).collect();
    let l = train_x.nrows();
    let mut h_tilde = Array2::<f64>::zeros((l, selected.len()));
    for (col, (&j, &g)) in selected.iter().zip(gammas.iter()).enumerate() {
        for i in 0..l {
            h_tilde[[i, col]] = train_x[[i, j]] * g;
        }
    }
    Ok((selected, h_tilde, gammas))
}

/// Degrees of freedom of the linear RLS2 fit:
/// tr(H~ (H~' H~ + lambda Gamma~)^{-1} H~') over the selected features,
/// where H~ scales each selected column by gamma_j = s_j d_j and
/// Gamma~ = diag(gamma_j).
pub fn degrees_of_freedom(train_x: &Array2<f64>, d: &[f64], s: &[f64], lambda: f64) -> Result<f64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Rls2Error::BadLambda(lambda));
    }
    let (selected, h_tilde, gammas) = scaled_design(train_x, d, s)?;
    if selected.is_empty() {
        return Ok(0.0);
    }
    let m = h_tilde.t().dot(&h_tilde);
    let mut system = m.clone();
    for (j, &g) in gammas.iter().enumerate() {
        system[[j, j]] += lambda * g;
    }
    let l = cholesky(&system).ok_or(Rls2Error::SingularSystem)?;
    let solved = chol_solve_matrix(&l, &m);
    Ok(solved.diag().sum())
}

/// Closed-form scaled ridge coefficients at fixed d:
/// z~ = (H~' H~ + lambda Gamma~)^{-1} H~' y on the selected features.
#[derive(Clone, Debug)]
pub struct ScaledRidge {
    pub selected: Vec<usize>,
    pub z_tilde: Array1<f64>,
    gammas: Vec<f64>,
}

impl ScaledRidge {
    /// Fitted values H~ z~ on any inputs with the training feature count.
    pub fn predictions(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let mut out = Array1::<f64>::zeros(x.nrows());
        for (col, (&j, &g)) in self.selected.iter().zip(self.gammas.iter()).enumerate() {
            if j >= x.ncols() {
                return Err(Rls2Error::DimensionMismatch(format!(
                    "inputs have {} features but feature {} is selected",
                    x.ncols(),
                    j + 1
                )));
            }
            for i in 0..x.nrows() {
                out[i] += x[[i, j]] * g * self.z_tilde[col];
            }
        }
        Ok(out)
    }
}

/// Coefficient-profile export for a path over a linear bank: one row per
/// lambda with the degrees of freedom and the full weight vector, the data
/// behind coefficient-path plots.
pub fn write_coefficient_profile<W: std::io::Write>(
    mut w: W,
    path: &crate::optimizer::RegPath,
    bank: &KernelBank,
    intercept: f64,
) -> Result<()> {
    let n = bank.n_features();
    let header: Vec<String> = (1..=n).map(|j| format!("a_{j}")).collect();
    writeln!(w, "lambda,df,{}", header.join(","))?;
    for (lambda, fit) in path.lambdas.iter().zip(path.fits.iter()) {
        let model = extract_linear_model(fit, bank, intercept)?;
        let df = degrees_of_freedom(
            &bank.train_x,
            model.d.weights(),
            model.scalings.as_slice().expect("contiguous"),
            *lambda,
        )?;
        let weights: Vec<String> = model.weights.iter().map(|a| a.to_string()).collect();
        writeln!(w, "{lambda},{df},{}", weights.join(","))?;
    }
    Ok(())
}

pub fn scaled_ridge_solution(
    train_x: &Array2<f64>,
    d: &[f64],
    s: &[f64],
    y: &Array1<f64>,
    lambda: f64,
) -> Result<ScaledRidge> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Rls2Error::BadLambda(lambda));
    }
    if y.len() != train_x.nrows() {
        return Err(Rls2Error::DimensionMismatch(
            "y length does not match the input rows".into(),
        ));
    }
    let (selected, h_tilde, gammas) = scaled_design(train_x, d, s)?;
    if selected.is_empty() {
        return Ok(ScaledRidge {
            selected,
            z_tilde: Array1::zeros(0),
            gammas,
        });
    }
    let mut system = h_tilde.t().dot(&h_tilde);
    for (j, &g) in gammas.iter().enumerate() {
        system[[j, j]] += lambda * g;
    }
    let rhs = h_tilde.t().dot(y);
    let l = cholesky(&system).ok_or(Rls2Error::SingularSystem)?;
    let z_tilde = chol_solve(&l, &rhs);
    Ok(ScaledRidge {
        selected,
        z_tilde,
        gammas,
    })
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
    use crate::kernel::{build_bank, linear_feature_specs, ScalingKind, ScalingRule};
    use crate::optimizer::{assemble_r, fit, solve_c, FitOptions};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_bank(seed: u64, l: usize, n: usize) -> (KernelBank, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((l, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(l, |_| rng.random::<f64>() * 2.0 - 1.0);
        let ds = Dataset {
            x,
            y: y.clone(),
            feature_names: (0..n).map(|j| format!("f{j}")).collect(),
            task: Task::Regression,
            class_labels: None,
        };
        let bank = build_bank(
            &ds,
            &linear_feature_specs(n),
            &ScalingRule::new(ScalingKind::FeatureNormInverse),
            None,
        )
        .unwrap();
        (bank, y)
    }

    #[test]
    fn zero_coefficients_give_intercept_predictor() {
        let (bank, y) = linear_bank(0, 8, 3);
        let fit_result = fit(&bank, &y, 1e12, None, &FitOptions::default()).unwrap();
        let model = extract_linear_model(&fit_result, &bank, 1.5).unwrap();
        // at enormous lambda c is essentially zero, so the weights are too
        assert!(model.weights.iter().all(|a| a.abs() < 1e-9));
        let x = Array2::from_elem((4, 3), 0.7);
        let preds = model.predict(&x).unwrap();
        for p in preds.iter() {
            assert_relative_eq!(*p, 1.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn vertex_d_selects_one_feature() {
        let (bank, y) = linear_bank(1, 10, 4);
        let fit_result = fit(&bank, &y, 1e10, None, &FitOptions::default()).unwrap();
        let model = extract_linear_model(&fit_result, &bank, 0.0).unwrap();
        assert_eq!(model.selected.len(), 1);
        let nonzero = model.weights.iter().filter(|a| a.abs() > 0.0).count();
        assert!(nonzero <= 1);
        for j in 0..4 {
            let dj = model.d.weights()[j];
            assert_relative_eq!(
                model.weights[j],
                dj * model.scalings[j] * model.z[j],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn linear_and_kernel_predictions_agree() {
        for seed in 0..5u64 {
            let (bank, y) = linear_bank(10 + seed, 15, 5);
            let fit_result = fit(&bank, &y, 0.1, None, &FitOptions::tight()).unwrap();
            let model = extract_linear_model(&fit_result, &bank, 0.0).unwrap();
            // on training inputs the kernel form is R(d) c
            let kernel_preds = crate::optimizer::apply_r(&bank, &fit_result.d, &fit_result.c);
            let linear_preds = model.predict(&bank.train_x).unwrap();
            for (a, b) in linear_preds.iter().zip(kernel_preds.iter()) {
                assert!(
                    (a - b).abs() <= 1e-8 * (1.0 + b.abs()),
                    "seed {seed}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn non_linear_bank_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>());
        let y = Array1::from_shape_fn(5, |_| rng.random::<f64>());
        let ds = Dataset {
            x,
            y: y.clone(),
            feature_names: vec!["a".into(), "b".into()],
            task: Task::Regression,
            class_labels: None,
        };
        let specs = vec![crate::kernel::BasisKernelSpec::Polynomial {
            degree: 2,
            subset: crate::kernel::FeatureSubset::All,
        }];
        let bank = build_bank(
            &ds,
            &specs,
            &ScalingRule::new(ScalingKind::TraceInverse),
            None,
        )
        .unwrap();
        let fit_result = fit(&bank, &y, 1.0, None, &FitOptions::default()).unwrap();
        assert!(matches!(
            extract_linear_model(&fit_result, &bank, 0.0),
            Err(Rls2Error::NotLinearBank)
        ));
    }

    #[test]
    fn centered_linear_bank_still_matches_kernel_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((12, 3), |_| rng.random::<f64>() * 3.0);
        let y = Array1::from_shape_fn(12, |_| rng.random::<f64>());
        let ds = Dataset {
            x,
            y: y.clone(),
            feature_names: (0..3).map(|j| format!("f{j}")).collect(),
            task: Task::Regression,
            class_labels: None,
        };
        let bank = build_bank(
            &ds,
            &linear_feature_specs(3),
            &ScalingRule::new(ScalingKind::TraceInverseCentered),
            None,
        )
        .unwrap();
        let fit_result = fit(&bank, &y, 0.3, None, &FitOptions::tight()).unwrap();
        let model = extract_linear_model(&fit_result, &bank, 0.0).unwrap();
        let kernel_preds = crate::optimizer::apply_r(&bank, &fit_result.d, &fit_result.c);
        let linear_preds = model.predict(&bank.train_x).unwrap();
        for (a, b) in linear_preds.iter().zip(kernel_preds.iter()) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn df_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((10, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let d = vec![0.25; 4];
        let s = vec![1.0; 4];
        let m = 4.0;
        let df_inf = degrees_of_freedom(&x, &d, &s, 1e12).unwrap();
        assert!(df_inf <= 1e-6 * m);
        let df_zero = degrees_of_freedom(&x, &d, &s, 1e-12).unwrap();
        assert!(df_zero >= 4.0 - 1e-6);
        assert!(df_zero <= 4.0 + 1e-9);
    }

    #[test]
    fn df_is_monotone_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((12, 5), |_| rng.random::<f64>() * 2.0 - 1.0);
        let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.1).collect();
        let sum: f64 = raw.iter().sum();
        let d: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let s = vec![0.7; 5];
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let lambda = 10f64.powf(-4.0 + k as f64);
            let df = degrees_of_freedom(&x, &d, &s, lambda).unwrap();
            assert!(df >= 0.0 && df <= 5.0 + 1e-9);
            assert!(df <= last + 1e-10, "df not monotone at lambda {lambda}");
            last = df;
        }
    }

    #[test]
    fn df_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((10, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let d = vec![0.25; 4];
        let s = vec![1.3; 4];
        let lambda = 1.0;
        let df = degrees_of_freedom(&x, &d, &s, lambda).unwrap();

        // oracle through the generalized spectrum of (H~'H~, Gamma~)
        let gammas: Vec<f64> = (0..4).map(|j| s[j] * d[j]).collect();
        let mut ht = x.clone();
        for j in 0..4 {
            ht.column_mut(j).mapv_inplace(|v| v * gammas[j]);
        }
        let m = ht.t().dot(&ht);
        let b = nalgebra::DMatrix::from_fn(4, 4, |i, j| {
            m[[i, j]] / (gammas[i].sqrt() * gammas[j].sqrt())
        });
        let eig = b.symmetric_eigenvalues();
        let oracle: f64 = eig
            .iter()
            .map(|&mu| mu.max(0.0) / (mu.max(0.0) + lambda))
            .sum();
        assert_relative_eq!(df, oracle, max_relative = 1e-8);
    }

    #[test]
    fn df_errors_on_singular_lambda_zero() {
        // two identical columns make H~'H~ singular
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let d = vec![0.5, 0.5];
        let s = vec![1.0, 1.0];
        assert!(matches!(
            degrees_of_freedom(&x, &d, &s, 0.0),
            Err(Rls2Error::SingularSystem)
        ));
    }

    #[test]
    fn scaled_ridge_diagonalizes_under_orthonormal_columns() {
        // orthonormal design, s = 1, d uniform: z~_j = (H'y)_j / (d_j + lambda)
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = Array1::from_vec(vec![2.0, -1.0]);
        let m = 2.0;
        let d = vec![1.0 / m; 2];
        let s = vec![1.0; 2];
        let lambda = 0.5;
        let ridge = scaled_ridge_solution(&x, &d, &s, &y, lambda).unwrap();
        let hty = x.t().dot(&y);
        for j in 0..2 {
            assert_relative_eq!(
                ridge.z_tilde[j],
                hty[j] / (1.0 / m + lambda),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn scaled_ridge_single_feature_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((7, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(7, |_| rng.random::<f64>());
        let d = vec![0.0, 1.0, 0.0];
        let s = vec![2.0, 0.5, 2.0];
        let lambda = 0.3;
        let ridge = scaled_ridge_solution(&x, &d, &s, &y, lambda).unwrap();
        assert_eq!(ridge.selected, vec![1]);
        let col = x.column(1);
        let sd = s[1] * d[1];
        let expect = col.dot(&y) / (sd * col.dot(&col) + lambda);
        assert_relative_eq!(ridge.z_tilde[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn coefficient_profile_rows_match_path() {
        let (bank, y) = linear_bank(30, 14, 4);
        let grid = crate::optimizer::log_lambda_grid(1e-3, 1e3, 6);
        let path = crate::optimizer::fit_path(&bank, &y, &grid, &FitOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_coefficient_profile(&mut buf, &path, &bank, 0.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda,df,a_1,a_2,a_3,a_4");
        assert_eq!(lines.len(), 7);
        // df stays within [0, m] on every row
        for line in &lines[1..] {
            let df: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((0.0..=4.0 + 1e-9).contains(&df), "df {df}");
        }
    }

    #[test]
    fn scaled_ridge_matches_kernel_solve_predictions() {
        for seed in 0..5u64 {
            let (bank, y) = linear_bank(20 + seed, 12, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.05).collect();
            let sum: f64 = raw.iter().sum();
            let d: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let lambda = 0.2;
            let dp = SimplexPoint::new(d.clone()).unwrap();
            let r = assemble_r(&bank, &dp);
            let c = solve_c(&r, &y, lambda, None, 1e-12).unwrap();
            let kernel_preds = r.dot(&c);
            let ridge =
                scaled_ridge_solution(&bank.train_x, &d, &bank.scalings, &y, lambda).unwrap();
            let ridge_preds = ridge.predictions(&bank.train_x).unwrap();
            for (a, b) in ridge_preds.iter().zip(kernel_preds.iter()) {
                assert!(
                    (a - b).abs() <= 1e-8 * (1.0 + b.abs()),
                    "seed {seed}: {a} vs {b}"
                );
            }
        }
    }
}
