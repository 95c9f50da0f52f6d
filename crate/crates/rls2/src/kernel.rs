//! Basis kernels, their Gram matrices and scalings, and the scaled bank
//! {R^k} consumed by the optimizer.
//!
//! Every bank matrix is R^k = s_k * K_k evaluated on the training inputs,
//! optionally after feature-space centering. Scalings follow one of the
//! rules below; degenerate kernels (zero scaling denominator) are dropped
//! with a warning instead of failing the whole bank.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Result, Rls2Error};

/// Feature subset a kernel acts on: everything, or an explicit index list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubset {
    All,
    Indices(Vec<usize>),
}

impl FeatureSubset {
    fn check(&self, n_features: usize) -> Result<()> {
        if let FeatureSubset::Indices(idx) = self {
            if idx.is_empty() {
                return Err(Rls2Error::InvalidSpec("empty feature subset".into()));
            }
            if let Some(&j) = idx.iter().find(|&&j| j >= n_features) {
                return Err(Rls2Error::InvalidSpec(format!(
                    "feature index {j} out of range (dataset has {n_features} features)"
                )));
            }
        }
        Ok(())
    }
}

/// One basis kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasisKernelSpec {
    /// K(x1, x2) = x1\[j\] * x2\[j\]
    LinearFeature { feature: usize },
    /// K(x1, x2) = (1 + <x1, x2>)^degree over the subset
    Polynomial { degree: u32, subset: FeatureSubset },
    /// K(x1, x2) = exp(-gamma ||x1 - x2||^2) over the subset
    GaussianRbf { gamma: f64, subset: FeatureSubset },
}

impl BasisKernelSpec {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        match self {
            BasisKernelSpec::LinearFeature { feature } => {
                if *feature >= n_features {
                    return Err(Rls2Error::InvalidSpec(format!(
                        "feature index {feature} out of range (dataset has {n_features} features)"
                    )));
                }
            }
            BasisKernelSpec::Polynomial { degree, subset } => {
                if *degree < 1 {
                    return Err(Rls2Error::InvalidSpec(
                        "polynomial degree must be >= 1".into(),
                    ));
                }
                subset.check(n_features)?;
            }
            BasisKernelSpec::GaussianRbf { gamma, subset } => {
                if !(*gamma > 0.0) || !gamma.is_finite() {
                    return Err(Rls2Error::InvalidSpec(format!(
                        "rbf width must be positive and finite, got {gamma}"
                    )));
                }
                subset.check(n_features)?;
            }
        }
        Ok(())
    }

    pub fn is_linear_feature(&self) -> bool {
        matches!(self, BasisKernelSpec::LinearFeature { .. })
    }
}

impl fmt::Display for BasisKernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKernelSpec::LinearFeature { feature } => write!(f, "linear {}", feature + 1),
            BasisKernelSpec::Polynomial { degree, subset } => {
                write!(f, "poly {} {}", degree, format_subset(subset))
            }
            BasisKernelSpec::GaussianRbf { gamma, subset } => {
                write!(f, "rbf {} {}", gamma, format_subset(subset))
            }
        }
    }
}

fn format_subset(s: &FeatureSubset) -> String {
    match s {
        FeatureSubset::All => "all".to_string(),
        FeatureSubset::Indices(idx) => idx
            .iter()
            .map(|j| (j + 1).to_string())
            .collect::<Vec<_>>()
            .join(","),
    }
}

/// How to compute the per-kernel scaling s_k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingKind {
    /// s_k = 1
    Unit,
    /// s_k = 1 / sum_i K(x_i, x_i)
    TraceInverse,
    /// feature-space centering first, then the inverse trace of the
    /// centered kernel
    TraceInverseCentered,
    /// s_k = 1 / ||x^k||^2; numerically the inverse trace (identical for
    /// linear kernels, where the trace is the squared feature norm)
    FeatureNormInverse,
    /// s_k = 1 / (var_+ + var_-) of the kernel's feature, binary tasks,
    /// linear_feature kernels only
    Fisher,
    /// general kernels: inverse of the summed within-class feature-space
    /// variances
    FisherNonlinear,
    /// s_k = (var_+ + var_-)^{-1/2}; variant of Fisher used for per-class
    /// scaling in one-vs-all ensembles
    FisherSqrt,
}

impl ScalingKind {
    pub fn is_fisher_family(&self) -> bool {
        matches!(
            self,
            ScalingKind::Fisher | ScalingKind::FisherNonlinear | ScalingKind::FisherSqrt
        )
    }

    /// Fisher rules depend on the training labels, so banks built with them
    /// are label-specific.
    pub fn is_label_dependent(&self) -> bool {
        self.is_fisher_family()
    }
}

/// Bank-level scaling settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingRule {
    pub kind: ScalingKind,
    /// Extend trace sums over the test inputs as well (requires test
    /// inputs at bank build time).
    pub transductive: bool,
}

impl ScalingRule {
    pub fn new(kind: ScalingKind) -> ScalingRule {
        ScalingRule {
            kind,
            transductive: false,
        }
    }

    pub fn transductive(kind: ScalingKind) -> ScalingRule {
        ScalingRule {
            kind,
            transductive: true,
        }
    }
}

/// Training-side centering statistics of one raw kernel matrix, kept so
/// prediction-time cross rows can be centered consistently.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelCentering {
    pub row_means: Vec<f64>,
    pub grand_mean: f64,
}

/// Precomputed scaled basis-kernel matrices plus everything needed to
/// rebuild cross rows at prediction time.
#[derive(Clone, Debug)]
pub struct KernelBank {
    pub specs: Vec<BasisKernelSpec>,
    pub scalings: Vec<f64>,
    pub matrices: Vec<Array2<f64>>,
    pub train_x: Array2<f64>,
    /// Some(per-kernel centering) when the bank was built centered.
    pub centering: Option<Vec<KernelCentering>>,
    /// Specs dropped as degenerate during the build.
    pub dropped: Vec<BasisKernelSpec>,
}

impl KernelBank {
    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_examples(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.train_x.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centering.is_some()
    }

    pub fn centering_for(&self, k: usize) -> Option<&KernelCentering> {
        self.centering.as_ref().map(|c| &c[k])
    }
}

/// Exact kernel value K(x1, x2) for a single spec.
pub fn eval_kernel(spec: &BasisKernelSpec, x1: ArrayView1<f64>, x2: ArrayView1<f64>) -> f64 {
    match spec {
        BasisKernelSpec::LinearFeature { feature } => x1[*feature] * x2[*feature],
        BasisKernelSpec::Polynomial { degree, subset } => {
            let dot = match subset {
                FeatureSubset::All => x1.dot(&x2),
                FeatureSubset::Indices(idx) => idx.iter().map(|&j| x1[j] * x2[j]).sum(),
            };
            (1.0 + dot).powi(*degree as i32)
        }
        BasisKernelSpec::GaussianRbf { gamma, subset } => {
            let sq = match subset {
                FeatureSubset::All => x1
                    .iter()
                    .zip(x2.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
                FeatureSubset::Indices(idx) => {
                    idx.iter().map(|&j| (x1[j] - x2[j]) * (x1[j] - x2[j])).sum()
                }
            };
            (-gamma * sq).exp()
        }
    }
}

/// The benchmark kernel grid: polynomial degrees 1..3 plus 10 Gaussian
/// widths log-spaced in [1e-3, 1e3], each instantiated on every single
/// feature and on all features jointly, for a total of 13 (N + 1) kernels.
pub fn default_benchmark_specs(n_features: usize) -> Vec<BasisKernelSpec> {
    let gammas: Vec<f64> = (0..10)
        .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 9.0))
        .collect();
    let mut subsets: Vec<FeatureSubset> = (0..n_features)
        .map(|j| FeatureSubset::Indices(vec![j]))
        .collect();
    subsets.push(FeatureSubset::All);
    let mut specs = Vec::with_capacity(13 * (n_features + 1));
    for subset in subsets {
        for degree in 1..=3u32 {
            specs.push(BasisKernelSpec::Polynomial {
                degree,
                subset: subset.clone(),
            });
        }
        for &gamma in &gammas {
            specs.push(BasisKernelSpec::GaussianRbf {
                gamma,
                subset: subset.clone(),
            });
        }
    }
    specs
}

/// A bank of one linear kernel per feature, the linear RLS2 configuration.
pub fn linear_feature_specs(n_features: usize) -> Vec<BasisKernelSpec> {
    (0..n_features)
        .map(|feature| BasisKernelSpec::LinearFeature { feature })
        .collect()
}

fn gram(spec: &BasisKernelSpec, x: &Array2<f64>) -> Array2<f64> {
    let l = x.nrows();
    let mut g = Array2::<f64>::zeros((l, l));
    for i in 0..l {
        for j in i..l {
            let v = eval_kernel(spec, x.row(i), x.row(j));
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

fn center_gram(g: &Array2<f64>) -> (Array2<f64>, KernelCentering) {
    let l = g.nrows();
    let row_means: Vec<f64> = (0..l).map(|i| g.row(i).sum() / l as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / l as f64;
    let mut centered = g.clone();
    for i in 0..l {
        for j in 0..l {
            centered[[i, j]] = g[[i, j]] - row_means[i] - row_means[j] + grand_mean;
        }
    }
    (
        centered,
        KernelCentering {
            row_means,
            grand_mean,
        },
    )
}

fn class_split(y: &Array1<f64>) -> Result<(Vec<usize>, Vec<usize>)> {
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1.0).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] == -1.0).collect();
    if pos.len() + neg.len() != y.len() || pos.is_empty() || neg.is_empty() {
        return Err(Rls2Error::ScalingRule(
            "fisher scaling requires binary labels in {-1,+1} with both classes present".into(),
        ));
    }
    Ok((pos, neg))
}

/// Within-class variance (population convention, divisor l_c) of one
/// feature over the given example indices.
fn class_variance(x: &Array2<f64>, feature: usize, members: &[usize]) -> f64 {
    let n = members.len() as f64;
    let mean = members.iter().map(|&i| x[[i, feature]]).sum::<f64>() / n;
    members
        .iter()
        .map(|&i| {
            let d = x[[i, feature]] - mean;
            d * d
        })
        .sum::<f64>()
        / n
}

/// Trace-family denominator: sum of kernel self-values over training (and
/// test, when transductive) inputs; for the centered rule the trace of the
/// centered kernel, which equals tr(K) - (1/l) sum_ij K_ij.
fn trace_denominator(
    spec: &BasisKernelSpec,
    train_x: &Array2<f64>,
    test_x: Option<&Array2<f64>>,
    centered: bool,
    transductive: bool,
    train_gram: Option<&Array2<f64>>,
) -> f64 {
    let diag_sum = |x: &Array2<f64>| -> f64 {
        (0..x.nrows())
            .map(|i| eval_kernel(spec, x.row(i), x.row(i)))
            .sum()
    };
    if !transductive {
        if !centered {
            return match train_gram {
                Some(g) => g.diag().sum(),
                None => diag_sum(train_x),
            };
        }
        let (tr, total) = match train_gram {
            Some(g) => (g.diag().sum(), g.sum()),
            None => {
                let g = gram(spec, train_x);
                (g.diag().sum(), g.sum())
            }
        };
        let l = train_x.nrows() as f64;
        return tr - total / l;
    }
    // transductive: pool the training and test inputs
    let test = test_x.expect("transductive scaling requires test inputs");
    if !centered {
        return diag_sum(train_x) + diag_sum(test);
    }
    let n_all = train_x.nrows() + test.nrows();
    let row = |i: usize| -> ArrayView1<f64> {
        if i < train_x.nrows() {
            train_x.row(i)
        } else {
            test.row(i - train_x.nrows())
        }
    };
    let mut tr = 0.0;
    let mut total = 0.0;
    for i in 0..n_all {
        tr += eval_kernel(spec, row(i), row(i));
        for j in 0..n_all {
            total += eval_kernel(spec, row(i), row(j));
        }
    }
    tr - total / n_all as f64
}

/// Fisher denominator in feature space: summed within-class variances of
/// the kernel's implicit feature map. Reduces to the per-feature variance
/// sum for linear kernels.
fn fisher_nonlinear_denominator(
    spec: &BasisKernelSpec,
    x: &Array2<f64>,
    members: (&[usize], &[usize]),
    train_gram: Option<&Array2<f64>>,
) -> f64 {
    let value = |i: usize, j: usize| match train_gram {
        Some(g) => g[[i, j]],
        None => eval_kernel(spec, x.row(i), x.row(j)),
    };
    let mut denom = 0.0;
    for class in [members.0, members.1] {
        let n = class.len() as f64;
        let mut diag = 0.0;
        let mut block = 0.0;
        for &i in class {
            diag += value(i, i);
            for &j in class {
                block += value(i, j);
            }
        }
        denom += diag / n - block / (n * n);
    }
    denom
}

fn scaling_denominator(
    rule: &ScalingRule,
    spec: &BasisKernelSpec,
    train: &Dataset,
    test_x: Option<&Array2<f64>>,
    train_gram: Option<&Array2<f64>>,
) -> Result<f64> {
    if rule.transductive {
        if rule.kind.is_fisher_family() {
            return Err(Rls2Error::ScalingRule(
                "transductive scaling is not defined for fisher rules (test labels do not exist)"
                    .into(),
            ));
        }
        if test_x.is_none() {
            return Err(Rls2Error::ScalingRule(
                "transductive scaling requires test inputs at bank build time".into(),
            ));
        }
    }
    let denom = match rule.kind {
        ScalingKind::Unit => 1.0,
        ScalingKind::TraceInverse | ScalingKind::FeatureNormInverse => {
            trace_denominator(spec, &train.x, test_x, false, rule.transductive, train_gram)
        }
        ScalingKind::TraceInverseCentered => {
            trace_denominator(spec, &train.x, test_x, true, rule.transductive, train_gram)
        }
        ScalingKind::Fisher | ScalingKind::FisherSqrt => {
            if train.task != Task::Binary {
                return Err(Rls2Error::ScalingRule(
                    "fisher scaling requires a binary task".into(),
                ));
            }
            let feature = match spec {
                BasisKernelSpec::LinearFeature { feature } => *feature,
                _ => {
                    return Err(Rls2Error::ScalingRule(
                        "fisher scaling applies to linear_feature kernels; use fisher-nl for \
                         general kernels"
                            .into(),
                    ))
                }
            };
            let (pos, neg) = class_split(&train.y)?;
            let sum =
                class_variance(&train.x, feature, &pos) + class_variance(&train.x, feature, &neg);
            if rule.kind == ScalingKind::FisherSqrt {
                sum.sqrt()
            } else {
                sum
            }
        }
        ScalingKind::FisherNonlinear => {
            if train.task != Task::Binary {
                return Err(Rls2Error::ScalingRule(
                    "fisher scaling requires a binary task".into(),
                ));
            }
            let (pos, neg) = class_split(&train.y)?;
            fisher_nonlinear_denominator(spec, &train.x, (&pos, &neg), train_gram)
        }
    };
    Ok(denom)
}

/// Scaling value s_k for one spec under the given rule.
///
/// A zero (or non-finite) denominator signals a degenerate kernel via
/// [`Rls2Error::DegenerateKernel`]; [`build_bank`] drops such kernels.
pub fn scaling_value(
    rule: &ScalingRule,
    spec: &BasisKernelSpec,
    train: &Dataset,
    test_x: Option<&Array2<f64>>,
) -> Result<f64> {
    scaling_from_denominator(rule, spec, train, test_x, None)
}

fn scaling_from_denominator(
    rule: &ScalingRule,
    spec: &BasisKernelSpec,
    train: &Dataset,
    test_x: Option<&Array2<f64>>,
    train_gram: Option<&Array2<f64>>,
) -> Result<f64> {
    let denom = scaling_denominator(rule, spec, train, test_x, train_gram)?;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Rls2Error::DegenerateKernel(format!(
            "scaling denominator {denom} for kernel '{spec}'"
        )));
    }
    Ok(1.0 / denom)
}

/// Build the scaled kernel bank on the training inputs.
///
/// Gram matrices are evaluated per spec (in parallel), centered when the
/// rule asks for it, and scaled by the rule's s_k. Kernels with degenerate
/// scaling are dropped with a warning; an all-degenerate bank is an error.
pub fn build_bank(
    train: &Dataset,
    specs: &[BasisKernelSpec],
    rule: &ScalingRule,
    test_x: Option<&Array2<f64>>,
) -> Result<KernelBank> {
    if specs.is_empty() {
        return Err(Rls2Error::InvalidSpec("no kernel specs given".into()));
    }
    if train.n_examples() == 0 {
        return Err(Rls2Error::EmptyDataset);
    }
    for spec in specs {
        spec.validate(train.n_features())?;
    }
    if !train.x.iter().all(|v| v.is_finite()) {
        return Err(Rls2Error::NonFinite("training inputs"));
    }
    let centered = rule.kind == ScalingKind::TraceInverseCentered;

    type BuiltKernel = (BasisKernelSpec, f64, Array2<f64>, Option<KernelCentering>);
    let built: Vec<Result<Option<BuiltKernel>>> = specs
        .par_iter()
        .map(|spec| {
            let raw = gram(spec, &train.x);
            let s = match scaling_from_denominator(rule, spec, train, test_x, Some(&raw)) {
                Ok(s) => s,
                Err(Rls2Error::DegenerateKernel(msg)) => {
                    log::warn!("dropping kernel '{spec}': {msg}");
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let (matrix, centering) = if centered {
                let (c, meta) = center_gram(&raw);
                (c, Some(meta))
            } else {
                (raw, None)
            };
            Ok(Some((spec.clone(), s, matrix * s, centering)))
        })
        .collect();

    let mut bank = KernelBank {
        specs: Vec::new(),
        scalings: Vec::new(),
        matrices: Vec::new(),
        train_x: train.x.clone(),
        centering: if centered { Some(Vec::new()) } else { None },
        dropped: Vec::new(),
    };
    for (spec, item) in specs.iter().zip(built) {
        match item? {
            Some((spec, s, matrix, centering)) => {
                bank.specs.push(spec);
                bank.scalings.push(s);
                bank.matrices.push(matrix);
                if let (Some(all), Some(meta)) = (bank.centering.as_mut(), centering) {
                    all.push(meta);
                }
            }
            None => bank.dropped.push(spec.clone()),
        }
    }
    if bank.matrices.is_empty() {
        return Err(Rls2Error::AllKernelsDegenerate);
    }
    Ok(bank)
}

/// Alignment A_k = y' R^k y between a bank matrix and the outputs.
pub fn alignment(r_k: &Array2<f64>, y: &Array1<f64>) -> f64 {
    assert_eq!(r_k.nrows(), y.len(), "alignment: dimension mismatch");
    y.dot(&r_k.dot(y))
}

/// Cross-kernel row for a new input: entries s_k * K(x_j, x_star) over the
/// training points, centered with the stored training statistics when the
/// bank was built centered.
pub fn cross_kernel_row(
    spec: &BasisKernelSpec,
    s_k: f64,
    train_x: &Array2<f64>,
    x_star: ArrayView1<f64>,
    centering: Option<&KernelCentering>,
) -> Array1<f64> {
    let l = train_x.nrows();
    let mut row = Array1::<f64>::zeros(l);
    for j in 0..l {
        row[j] = eval_kernel(spec, train_x.row(j), x_star);
    }
    if let Some(meta) = centering {
        let star_mean = row.sum() / l as f64;
        for j in 0..l {
            row[j] = row[j] - star_mean - meta.row_means[j] + meta.grand_mean;
        }
    }
    row * s_k
}

/// Parse a kernel spec file: one spec per line, `linear <j>`,
/// `poly <degree> <subset>` or `rbf <gamma> <subset>`, where subset is
/// `all` or comma-separated 1-based feature indices. Blank lines and lines
/// starting with `#` are skipped.
pub fn read_spec_file<P: AsRef<Path>>(path: P) -> Result<Vec<BasisKernelSpec>> {
    let content = fs::read_to_string(path)?;
    let mut specs = Vec::new();
    for (no, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        specs
            .push(parse_spec_line(line).map_err(|msg| Rls2Error::SpecParse { line: no + 1, msg })?);
    }
    if specs.is_empty() {
        return Err(Rls2Error::InvalidSpec(
            "spec file contains no kernels".into(),
        ));
    }
    Ok(specs)
}

/// Write specs in the format accepted by [`read_spec_file`].
pub fn write_spec_file<P: AsRef<Path>>(path: P, specs: &[BasisKernelSpec]) -> Result<()> {
    let mut out = String::from("# rls2 kernel specs\n");
    for spec in specs {
        out.push_str(&spec.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_subset(token: &str) -> std::result::Result<FeatureSubset, String> {
    if token == "all" {
        return Ok(FeatureSubset::All);
    }
    let mut idx = Vec::new();
    for part in token.split(',') {
        let one: usize = part
            .parse()
            .map_err(|_| format!("bad feature index '{part}'"))?;
        if one == 0 {
            return Err("feature indices are 1-based".to_string());
        }
        idx.push(one - 1);
    }
    Ok(FeatureSubset::Indices(idx))
}

fn parse_spec_line(line: &str) -> std::result::Result<BasisKernelSpec, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens.as_slice() {
        ["linear", j] => {
            let one: usize = j.parse().map_err(|_| format!("bad feature index '{j}'"))?;
            if one == 0 {
                return Err("feature indices are 1-based".to_string());
            }
            Ok(BasisKernelSpec::LinearFeature { feature: one - 1 })
        }
        ["poly", degree, subset] => {
            let degree: u32 = degree
                .parse()
                .map_err(|_| format!("bad polynomial degree '{degree}'"))?;
            Ok(BasisKernelSpec::Polynomial {
                degree,
                subset: parse_subset(subset)?,
            })
        }
        ["rbf", gamma, subset] => {
            let gamma: f64 = gamma
                .parse()
                .map_err(|_| format!("bad rbf width '{gamma}'"))?;
            Ok(BasisKernelSpec::GaussianRbf {
                gamma,
                subset: parse_subset(subset)?,
            })
        }
        _ => Err(format!("unrecognized spec line '{line}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(x: Array2<f64>, y: Vec<f64>, task: Task) -> Dataset {
        let n = x.ncols();
        Dataset {
            x,
            y: Array1::from(y),
            feature_names: (0..n).map(|j| format!("f{j}")).collect(),
            task,
            class_labels: None,
        }
    }

    fn random_dataset(rng: &mut ChaCha8Rng, l: usize, n: usize, task: Task) -> Dataset {
        let x = Array2::from_shape_fn((l, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = match task {
            Task::Binary => (0..l)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
            _ => (0..l).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        };
        dataset(x, y, task)
    }

    #[test]
    fn eval_kernel_examples() {
        let x1 = array![2.0, 3.0];
        let x2 = array![5.0, 7.0];
        let spec = BasisKernelSpec::LinearFeature { feature: 1 };
        assert_eq!(eval_kernel(&spec, x1.view(), x2.view()), 21.0);

        let spec = BasisKernelSpec::Polynomial {
            degree: 2,
            subset: FeatureSubset::All,
        };
        let v = array![1.0, 0.0];
        assert_eq!(eval_kernel(&spec, v.view(), v.view()), 4.0);

        let spec = BasisKernelSpec::GaussianRbf {
            gamma: 0.01,
            subset: FeatureSubset::All,
        };
        assert_eq!(eval_kernel(&spec, x1.view(), x1.view()), 1.0);
    }

    #[test]
    fn default_grid_sizes() {
        assert_eq!(default_benchmark_specs(1).len(), 26);
        assert_eq!(default_benchmark_specs(7).len(), 104);
        assert_eq!(default_benchmark_specs(13).len(), 182);
    }

    #[test]
    fn default_grid_gamma_endpoints() {
        let specs = default_benchmark_specs(1);
        let gammas: Vec<f64> = specs
            .iter()
            .filter_map(|s| match s {
                BasisKernelSpec::GaussianRbf { gamma, .. } => Some(*gamma),
                _ => None,
            })
            .collect();
        assert_relative_eq!(gammas[0], 1e-3, max_relative = 1e-12);
        assert_relative_eq!(gammas[9], 1e3, max_relative = 1e-12);
    }

    #[test]
    fn unit_rule_gives_unit_scalings() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds = random_dataset(&mut rng, 6, 3, Task::Regression);
        let bank = build_bank(
            &ds,
            &default_benchmark_specs(3),
            &ScalingRule::new(ScalingKind::Unit),
            None,
        )
        .unwrap();
        assert!(bank.scalings.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn trace_rule_on_rbf_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = random_dataset(&mut rng, 5, 2, Task::Regression);
        let spec = BasisKernelSpec::GaussianRbf {
            gamma: 0.5,
            subset: FeatureSubset::All,
        };
        let s = scaling_value(
            &ScalingRule::new(ScalingKind::TraceInverse),
            &spec,
            &ds,
            None,
        )
        .unwrap();
        assert_relative_eq!(s, 1.0 / 5.0, max_relative = 1e-12);
    }

    #[test]
    fn feature_norm_rule_is_inverse_squared_norm() {
        let ds = dataset(
            Array2::from_shape_vec((2, 1), vec![3.0, 4.0]).unwrap(),
            vec![0.0, 0.0],
            Task::Regression,
        );
        let spec = BasisKernelSpec::LinearFeature { feature: 0 };
        let s = scaling_value(
            &ScalingRule::new(ScalingKind::FeatureNormInverse),
            &spec,
            &ds,
            None,
        )
        .unwrap();
        assert_relative_eq!(s, 1.0 / 25.0, max_relative = 1e-12);
    }

    #[test]
    fn fisher_rule_inverts_variance_sum() {
        // class +: values (0, 1), variance 0.25; class -: values (0, sqrt 3),
        // variance 0.75; together s = 1 / (0.25 + 0.75) = 1
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 0.0, 3f64.sqrt()]).unwrap();
        let y = vec![1.0, 1.0, -1.0, -1.0];
        let ds = dataset(x, y, Task::Binary);
        let spec = BasisKernelSpec::LinearFeature { feature: 0 };
        let s = scaling_value(&ScalingRule::new(ScalingKind::Fisher), &spec, &ds, None).unwrap();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        let s_sqrt =
            scaling_value(&ScalingRule::new(ScalingKind::FisherSqrt), &spec, &ds, None).unwrap();
        assert_relative_eq!(s_sqrt, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn fisher_nonlinear_reduces_to_fisher_on_linear_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = random_dataset(&mut rng, 10, 3, Task::Binary);
        for feature in 0..3 {
            let spec = BasisKernelSpec::LinearFeature { feature };
            let fisher =
                scaling_value(&ScalingRule::new(ScalingKind::Fisher), &spec, &ds, None).unwrap();
            let nonlinear = scaling_value(
                &ScalingRule::new(ScalingKind::FisherNonlinear),
                &spec,
                &ds,
                None,
            )
            .unwrap();
            assert_relative_eq!(fisher, nonlinear, max_relative = 1e-12);
        }
    }

    #[test]
    fn transductive_trace_pools_train_and_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 5, 2, Task::Regression);
        let test_x = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>());
        let spec = BasisKernelSpec::GaussianRbf {
            gamma: 1.0,
            subset: FeatureSubset::All,
        };
        let s = scaling_value(
            &ScalingRule::transductive(ScalingKind::TraceInverse),
            &spec,
            &ds,
            Some(&test_x),
        )
        .unwrap();
        assert_relative_eq!(s, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn transductive_without_test_inputs_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = random_dataset(&mut rng, 4, 2, Task::Regression);
        let spec = BasisKernelSpec::LinearFeature { feature: 0 };
        let err = scaling_value(
            &ScalingRule::transductive(ScalingKind::TraceInverse),
            &spec,
            &ds,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Rls2Error::ScalingRule(_)));
    }

    #[test]
    fn zero_feature_kernel_is_dropped() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        let ds = dataset(x, vec![1.0, 2.0, 3.0], Task::Regression);
        let specs = linear_feature_specs(2);
        let bank = build_bank(
            &ds,
            &specs,
            &ScalingRule::new(ScalingKind::FeatureNormInverse),
            None,
        )
        .unwrap();
        assert_eq!(bank.m(), 1);
        assert_eq!(bank.dropped.len(), 1);
    }

    #[test]
    fn all_degenerate_bank_errors() {
        let x = Array2::zeros((3, 1));
        let ds = dataset(x, vec![1.0, 2.0, 3.0], Task::Regression);
        let err = build_bank(
            &ds,
            &linear_feature_specs(1),
            &ScalingRule::new(ScalingKind::TraceInverse),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Rls2Error::AllKernelsDegenerate));
    }

    #[test]
    fn bank_matrices_are_symmetric_and_psd() {
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = 4 + (seed as usize % 3) * 9; // up to 30 points
            let ds = random_dataset(&mut rng, l, 3, Task::Regression);
            let rule = if seed % 2 == 0 {
                ScalingRule::new(ScalingKind::TraceInverse)
            } else {
                ScalingRule::new(ScalingKind::TraceInverseCentered)
            };
            let bank = build_bank(&ds, &default_benchmark_specs(3), &rule, None).unwrap();
            assert!(bank.scalings.iter().all(|&s| s > 0.0 && s.is_finite()));
            for r in &bank.matrices {
                let max_abs = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..l {
                    for j in 0..l {
                        assert!((r[[i, j]] - r[[j, i]]).abs() <= 1e-12 * max_abs.max(1.0));
                    }
                }
                let m = nalgebra::DMatrix::from_fn(l, l, |i, j| r[[i, j]]);
                let eig = m.symmetric_eigenvalues();
                let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                let trace: f64 = r.diag().sum();
                assert!(
                    min >= -1e-8 * (trace / l as f64).max(1e-12),
                    "matrix not PSD: min eigenvalue {min}"
                );
            }
        }
    }

    #[test]
    fn trace_scaling_is_invariant_to_kernel_rescaling() {
        // scaling a feature by beta multiplies its linear kernel by beta^2;
        // trace_inverse must cancel it exactly
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = random_dataset(&mut rng, 8, 1, Task::Regression);
        let mut scaled = ds.clone();
        scaled.x *= 3.7;
        let spec = vec![BasisKernelSpec::LinearFeature { feature: 0 }];
        let rule = ScalingRule::new(ScalingKind::TraceInverse);
        let bank_a = build_bank(&ds, &spec, &rule, None).unwrap();
        let bank_b = build_bank(&scaled, &spec, &rule, None).unwrap();
        for (a, b) in bank_a.matrices[0].iter().zip(bank_b.matrices[0].iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn alignment_is_squared_cosine_under_norm_scaling() {
        // x parallel to y gives A/||y||^2 = 1, orthogonal gives 0
        let x = Array2::from_shape_vec((2, 2), vec![2.0, 2.0, 4.0, -1.0]).unwrap();
        let ds = dataset(x, vec![1.0, 2.0], Task::Regression);
        let y = array![1.0, 2.0];
        let rule = ScalingRule::new(ScalingKind::FeatureNormInverse);
        let bank = build_bank(&ds, &linear_feature_specs(2), &rule, None).unwrap();
        let a0 = alignment(&bank.matrices[0], &y); // x^1 = (2,4) parallel to y
        assert_relative_eq!(a0 / y.dot(&y), 1.0, max_relative = 1e-12);
        let a1 = alignment(&bank.matrices[1], &y); // x^2 = (2,-1) orthogonal to y
        assert_relative_eq!(a1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn alignment_argmax_invariant_between_norm_rules() {
        // s = (||y|| ||x||)^-2 vs s = ||x||^-2: alignments differ by the
        // common factor ||y||^2, so the argmax is identical
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ds = random_dataset(&mut rng, 12, 5, Task::Regression);
        let y = Array1::from_shape_fn(12, |_| rng.random::<f64>() * 2.0 - 1.0);
        let rule = ScalingRule::new(ScalingKind::FeatureNormInverse);
        let bank = build_bank(&ds, &linear_feature_specs(5), &rule, None).unwrap();
        let y_norm2 = y.dot(&y);
        let a_norm: Vec<f64> = bank.matrices.iter().map(|r| alignment(r, &y)).collect();
        let a_cos: Vec<f64> = a_norm.iter().map(|a| a / y_norm2).collect();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&a_norm), argmax(&a_cos));
        // and the cosine-rule value is the exact squared cosine
        for (k, a) in a_cos.iter().enumerate() {
            let xk = ds.x.column(k);
            let cos = y.dot(&xk) / (y_norm2.sqrt() * xk.dot(&xk).sqrt());
            assert_relative_eq!(*a, cos * cos, max_relative = 1e-10);
        }
    }

    #[test]
    fn alignment_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = {
            let b = Array2::from_shape_fn((4, 4), |_| rng.random::<f64>());
            b.t().dot(&b)
        };
        let y = Array1::from_shape_fn(4, |_| rng.random::<f64>());
        let mut direct = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                direct += y[i] * r[[i, j]] * y[j];
            }
        }
        assert_relative_eq!(alignment(&r, &y), direct, max_relative = 1e-12);
    }

    #[test]
    fn fisher_alignment_matches_fisher_criterion_when_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = 12;
        let ds = random_dataset(&mut rng, l, 4, Task::Binary);
        let rule = ScalingRule::new(ScalingKind::Fisher);
        let bank = build_bank(&ds, &linear_feature_specs(4), &rule, None).unwrap();
        let pos: Vec<usize> = (0..l).filter(|&i| ds.y[i] == 1.0).collect();
        let neg: Vec<usize> = (0..l).filter(|&i| ds.y[i] == -1.0).collect();
        assert_eq!(pos.len(), neg.len());
        for k in 0..4 {
            let a = alignment(&bank.matrices[k], &ds.y);
            let mean =
                |idx: &[usize]| idx.iter().map(|&i| ds.x[[i, k]]).sum::<f64>() / idx.len() as f64;
            let var = |idx: &[usize]| class_variance(&ds.x, k, idx);
            let expect = (l as f64 * l as f64 / 4.0) * (mean(&pos) - mean(&neg)).powi(2)
                / (var(&pos) + var(&neg));
            assert_relative_eq!(a, expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn cross_row_at_training_point_reads_bank_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ds = random_dataset(&mut rng, 6, 2, Task::Regression);
        let rule = ScalingRule::new(ScalingKind::TraceInverse);
        let bank = build_bank(&ds, &default_benchmark_specs(2), &rule, None).unwrap();
        for k in [0usize, 5, 12] {
            let row = cross_kernel_row(
                &bank.specs[k],
                bank.scalings[k],
                &bank.train_x,
                ds.x.row(3),
                None,
            );
            for j in 0..6 {
                assert_relative_eq!(row[j], bank.matrices[k][[j, 3]], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn linear_cross_row_is_componentwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ds = random_dataset(&mut rng, 5, 3, Task::Regression);
        let spec = BasisKernelSpec::LinearFeature { feature: 2 };
        let x_star = array![0.3, -0.4, 1.7];
        let row = cross_kernel_row(&spec, 2.5, &ds.x, x_star.view(), None);
        for j in 0..5 {
            assert_relative_eq!(row[j], 2.5 * ds.x[[j, 2]] * 1.7, max_relative = 1e-12);
        }
    }

    #[test]
    fn centered_cross_row_matches_full_gram_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = 7;
        let ds = random_dataset(&mut rng, l, 2, Task::Regression);
        let rule = ScalingRule::new(ScalingKind::TraceInverseCentered);
        let specs = vec![BasisKernelSpec::GaussianRbf {
            gamma: 0.8,
            subset: FeatureSubset::All,
        }];
        let bank = build_bank(&ds, &specs, &rule, None).unwrap();
        let x_star = Array1::from_shape_fn(2, |_| rng.random::<f64>());

        // oracle: (l+1)-point Gram, centered with training statistics only
        let mut all_x = Array2::zeros((l + 1, 2));
        for i in 0..l {
            all_x.row_mut(i).assign(&ds.x.row(i));
        }
        all_x.row_mut(l).assign(&x_star);
        let mut g = Array2::<f64>::zeros((l + 1, l + 1));
        for i in 0..=l {
            for j in 0..=l {
                let d0 = all_x[[i, 0]] - all_x[[j, 0]];
                let d1 = all_x[[i, 1]] - all_x[[j, 1]];
                g[[i, j]] = (-0.8 * (d0 * d0 + d1 * d1)).exp();
            }
        }
        let grand = (0..l)
            .flat_map(|i| (0..l).map(move |j| (i, j)))
            .map(|(i, j)| g[[i, j]])
            .sum::<f64>()
            / (l * l) as f64;
        let star_mean = (0..l).map(|i| g[[i, l]]).sum::<f64>() / l as f64;
        let row = cross_kernel_row(
            &bank.specs[0],
            bank.scalings[0],
            &bank.train_x,
            x_star.view(),
            bank.centering_for(0),
        );
        for j in 0..l {
            let row_mean_j = (0..l).map(|i| g[[j, i]]).sum::<f64>() / l as f64;
            let oracle = bank.scalings[0] * (g[[j, l]] - star_mean - row_mean_j + grand);
            assert_relative_eq!(row[j], oracle, max_relative = 1e-10, epsilon = 1e-14);
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let specs = vec![
            BasisKernelSpec::LinearFeature { feature: 0 },
            BasisKernelSpec::Polynomial {
                degree: 2,
                subset: FeatureSubset::All,
            },
            BasisKernelSpec::Polynomial {
                degree: 3,
                subset: FeatureSubset::Indices(vec![0, 4]),
            },
            BasisKernelSpec::GaussianRbf {
                gamma: 0.125,
                subset: FeatureSubset::All,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_spec_file(f.path(), &specs).unwrap();
        let back = read_spec_file(f.path()).unwrap();
        assert_eq!(specs, back);
    }

    #[test]
    fn spec_file_reports_line_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write as _;
        f.write_all(b"# comment\nlinear 1\nbogus line here\n")
            .unwrap();
        let err = read_spec_file(f.path()).unwrap_err();
        match err {
            Rls2Error::SpecParse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn spec_validation_catches_out_of_range() {
        let spec = BasisKernelSpec::LinearFeature { feature: 5 };
        assert!(spec.validate(3).is_err());
        let spec = BasisKernelSpec::GaussianRbf {
            gamma: -1.0,
            subset: FeatureSubset::All,
        };
        assert!(spec.validate(3).is_err());
    }
}
