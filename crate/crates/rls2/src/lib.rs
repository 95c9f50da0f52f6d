//! # rls2
//!
//! Regularized least squares with two layers: multiple kernel learning that
//! alternates between a regularized linear solve for the expansion
//! coefficients and a simplex-constrained least squares solve for the
//! kernel weights. The nonnegativity constraint makes the learned kernel
//! combination sparse, so banks of per-feature kernels double as embedded
//! feature selectors.
//!
//! The pieces:
//!
//! - [`data`]: CSV ingestion, standardization, splits and stratified folds.
//! - [`kernel`]: basis kernels, Gram matrices, scaling rules, the bank.
//! - [`simplex`]: the SMO-style simplex least squares solver.
//! - [`optimizer`]: the alternating fit and warm-started paths.
//! - [`linear`]: the linear specialization (explicit weights, degrees of
//!   freedom, scaled ridge closed form).
//! - [`model`]: trained models, one-vs-all multiclass, metrics, persistence.
//! - [`select`]: validation curves and lambda selection rules.
//! - [`synth`]: the synthetic binary-strings experiment.

// `!(x > 0)` rejects NaN along with nonpositive values; keep it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod kernel;
mod linalg;
pub mod linear;
pub mod model;
pub mod optimizer;
pub mod select;
pub mod simplex;
pub mod synth;

pub use data::{
    align_features, kfold, load_csv, load_csv_raw, split, split_indices, standardize,
    stratified_kfold, write_indices, CsvOptions, Dataset, RawTable, Standardizer, Task,
};
pub use error::{Result, Rls2Error};
pub use kernel::{
    alignment, build_bank, cross_kernel_row, default_benchmark_specs, eval_kernel,
    linear_feature_specs, read_spec_file, scaling_value, write_spec_file, BasisKernelSpec,
    FeatureSubset, KernelBank, KernelCentering, ScalingKind, ScalingRule,
};
pub use linear::{
    degrees_of_freedom, extract_linear_model, scaled_ridge_solution, write_coefficient_profile,
    LinearRls2Model, ScaledRidge,
};
pub use model::{
    accuracy, load_model, load_ova, load_payload, ova_cv_curve, ova_fit, ova_predict,
    ova_predict_ids, predict_with_bank, rmse, save_model, save_ova, LambdaSelection, ModelPayload,
    OvaModel, OvaSettings, TrainedModel,
};
pub use optimizer::{
    assemble_r, build_subproblem, default_lambda_grid, fit, fit_path, init_d, log_lambda_grid,
    objective, solve_c, FitOptions, PathDiagnostics, RegPath, Rls2Fit,
};
pub use select::{cv_curve, select_lambda, CvSettings, SelectionRule, ValidationCurve};
pub use simplex::{
    kkt_violation, solve_simplex_ls, solve_simplex_ls_opts, SimplexLsOptions, SimplexLsReport,
    SimplexPoint,
};
pub use synth::{
    generate_binary_strings, run_binary_strings, BinaryStringsConfig, BinaryStringsReport,
};
