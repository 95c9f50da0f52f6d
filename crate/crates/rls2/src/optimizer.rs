//! Alternate optimization for RLS2: a regularized linear solve for the
//! expansion coefficients c and a simplex-constrained least squares solve
//! for the kernel weights d, repeated until the linear-system residual test
//! passes, plus warm-started regularization paths.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};

use crate::error::{Result, Rls2Error};
use crate::kernel::{alignment, KernelBank};
use crate::simplex::{solve_simplex_ls_opts, SimplexLsOptions, SimplexPoint, SUPPORT_EPS};

/// Options for [`fit`].
#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Normalized residual tolerance for the linear system (the outer
    /// stopping test uses the same value).
    pub delta: f64,
    /// KKT tolerance for the simplex subproblem.
    pub simplex_tol: f64,
    /// An l1 change of d at or below this counts as converged.
    pub d_change_tol: f64,
    pub max_outer: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            delta: 1e-2,
            simplex_tol: 1e-8,
            d_change_tol: 1e-10,
            max_outer: 200,
        }
    }
}

impl FitOptions {
    /// Tight settings for exact-identity checks.
    pub fn tight() -> FitOptions {
        FitOptions {
            delta: 1e-12,
            simplex_tol: 1e-10,
            d_change_tol: 1e-12,
            max_outer: 500,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> FitOptions {
        self.delta = delta;
        self
    }
}

/// Converged state of one RLS2 fit.
#[derive(Clone, Debug)]
pub struct Rls2Fit {
    pub c: Array1<f64>,
    pub d: SimplexPoint,
    pub lambda: f64,
    /// Support of d.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Second-layer coefficients w_i = sqrt(d_i / s_i).
    pub w: Array1<f64>,
    /// Objective after initialization and after every outer iteration.
    pub objective_history: Vec<f64>,
}

/// Assemble R(d) = sum over the support of d_k R^k.
pub fn assemble_r(bank: &KernelBank, d: &SimplexPoint) -> Array2<f64> {
    assert_eq!(bank.m(), d.len(), "assemble_r: bank/d size mismatch");
    let l = bank.n_examples();
    let mut r = Array2::<f64>::zeros((l, l));
    for (k, &dk) in d.weights().iter().enumerate() {
        if dk > 0.0 {
            r.scaled_add(dk, &bank.matrices[k]);
        }
    }
    r
}

/// R(d) c without materializing R(d).
pub fn apply_r(bank: &KernelBank, d: &SimplexPoint, c: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(bank.n_examples());
    for (k, &dk) in d.weights().iter().enumerate() {
        if dk > 0.0 {
            out.scaled_add(dk, &bank.matrices[k].dot(c));
        }
    }
    out
}

/// Conjugate gradient solve of (R + lambda I) c = y to a normalized
/// residual ||(R + lambda I) c - y|| <= delta ||y||.
///
/// R must be symmetric positive semidefinite, so the system matrix is
/// positive definite; exceeding the iteration cap (10 l) therefore signals
/// corrupted inputs and is reported as an error.
pub fn solve_c(
    r: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    warm_start: Option<&Array1<f64>>,
    delta: f64,
) -> Result<Array1<f64>> {
    if !(lambda > 0.0) {
        return Err(Rls2Error::BadLambda(lambda));
    }
    if !(delta > 0.0) {
        return Err(Rls2Error::BadTolerance(delta));
    }
    let l = y.len();
    if r.nrows() != l || r.ncols() != l {
        return Err(Rls2Error::DimensionMismatch(format!(
            "R is {}x{} but y has length {l}",
            r.nrows(),
            r.ncols()
        )));
    }
    let matvec = |c: &Array1<f64>| -> Array1<f64> { r.dot(c) + &(c * lambda) };

    let y_norm = y.dot(y).sqrt();
    if y_norm == 0.0 {
        return Ok(Array1::zeros(l));
    }
    let mut c = warm_start.cloned().unwrap_or_else(|| Array1::zeros(l));
    let mut residual = y - &matvec(&c);
    let tol = delta * y_norm;
    let mut rr = residual.dot(&residual);
    if rr.sqrt() <= tol {
        return Ok(c);
    }
    let mut p = residual.clone();
    let cap = 10 * l;
    for _ in 0..cap {
        let ap = matvec(&p);
        let p_ap = p.dot(&ap);
        if p_ap <= 0.0 || !p_ap.is_finite() {
            return Err(Rls2Error::CgIterationCap(cap));
        }
        let alpha = rr / p_ap;
        c.scaled_add(alpha, &p);
        residual.scaled_add(-alpha, &ap);
        let rr_new = residual.dot(&residual);
        if rr_new.sqrt() <= tol {
            return Ok(c);
        }
        p = &residual + &(&p * (rr_new / rr));
        rr = rr_new;
    }
    Err(Rls2Error::CgIterationCap(cap))
}

/// Initialization for the alternation: the vertex at the kernel of maximum
/// alignment y' R^k y, ties broken by smallest index.
pub fn init_d(bank: &KernelBank, y: &Array1<f64>) -> (SimplexPoint, Vec<usize>) {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (k, r_k) in bank.matrices.iter().enumerate() {
        let a = alignment(r_k, y);
        if a > best_val {
            best_val = a;
            best = k;
        }
    }
    (SimplexPoint::vertex(bank.m(), best), vec![best])
}

/// Data of the simplex subproblem at fixed c: V = (R^1 c ... R^m c) over
/// every kernel, and u = y - lambda c / 2.
pub fn build_subproblem(
    bank: &KernelBank,
    c: &Array1<f64>,
    lambda: f64,
    y: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let l = bank.n_examples();
    let m = bank.m();
    let mut v = Array2::<f64>::zeros((l, m));
    for k in 0..m {
        v.column_mut(k).assign(&bank.matrices[k].dot(c));
    }
    let u = y - &(c * (lambda / 2.0));
    (v, u)
}

/// The RLS2 objective 0.5 ||y - R(d) c||^2 + (lambda / 2) c' R(d) c.
pub fn objective(
    bank: &KernelBank,
    c: &Array1<f64>,
    d: &SimplexPoint,
    lambda: f64,
    y: &Array1<f64>,
) -> f64 {
    let rc = apply_r(bank, d, c);
    let misfit = y - &rc;
    0.5 * misfit.dot(&misfit) + 0.5 * lambda * c.dot(&rc)
}

fn support_of(d: &SimplexPoint) -> Vec<usize> {
    d.support()
}

fn clamp_support(d: SimplexPoint) -> SimplexPoint {
    let mut w = d.weights().to_vec();
    let mut changed = false;
    for x in w.iter_mut() {
        if *x > 0.0 && *x <= SUPPORT_EPS {
            *x = 0.0;
            changed = true;
        }
    }
    if !changed {
        return d;
    }
    let sum: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= sum;
    }
    SimplexPoint::new(w).expect("clamped point stays on the simplex")
}

/// One RLS2 fit at a fixed regularization parameter.
///
/// Alternates [`solve_c`] and the simplex solve from the given
/// initialization (or from `init_d` with c = 0). Stops when, with the
/// current iterate, the normalized linear-system residual passes the delta
/// test, or when a d-update moves by at most `d_change_tol` in l1 norm.
/// The objective never increases across outer iterations; a loose linear
/// solve that would break that is re-run tighter.
pub fn fit(
    bank: &KernelBank,
    y: &Array1<f64>,
    lambda: f64,
    init: Option<(&Array1<f64>, &SimplexPoint)>,
    opts: &FitOptions,
) -> Result<Rls2Fit> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Rls2Error::BadLambda(lambda));
    }
    if y.len() != bank.n_examples() {
        return Err(Rls2Error::DimensionMismatch(format!(
            "bank has {} examples but y has length {}",
            bank.n_examples(),
            y.len()
        )));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Rls2Error::NonFinite("targets"));
    }

    let (mut c, mut d) = match init {
        Some((c0, d0)) => {
            if c0.len() != y.len() || d0.len() != bank.m() {
                return Err(Rls2Error::DimensionMismatch(
                    "initialization sizes do not match the bank".into(),
                ));
            }
            (c0.clone(), clamp_support(d0.clone()))
        }
        None => {
            let (d0, _) = init_d(bank, y);
            (Array1::zeros(y.len()), d0)
        }
    };

    let y_norm = y.dot(y).sqrt();
    let mut history = vec![objective(bank, &c, &d, lambda, y)];
    let mut outer = 0usize;
    let mut converged = false;

    loop {
        let r = assemble_r(bank, &d);
        let resid = &r.dot(&c) + &(&c * lambda) - y;
        if resid.dot(&resid).sqrt() <= opts.delta * y_norm {
            converged = true;
            break;
        }
        if outer >= opts.max_outer {
            break;
        }
        outer += 1;

        let prev_objective = *history.last().expect("history is seeded");
        c = solve_c(&r, y, lambda, Some(&c), opts.delta)?;
        // a delta-loose conjugate gradient step minimizes the residual, not
        // the objective; tighten until the outer objective is non-increasing
        let mut delta_retry = opts.delta;
        while objective(bank, &c, &d, lambda, y)
            > prev_objective + 1e-12 * (1.0 + prev_objective.abs())
            && delta_retry > 1e-14
        {
            delta_retry /= 100.0;
            c = solve_c(&r, y, lambda, Some(&c), delta_retry)?;
        }

        let (v, u) = build_subproblem(bank, &c, lambda, y);
        let simplex_opts = SimplexLsOptions {
            tol: opts.simplex_tol,
            ..SimplexLsOptions::default()
        };
        let report = solve_simplex_ls_opts(&v, &u, Some(&d), &simplex_opts)?;
        let moved = report.d.l1_distance(&d);
        d = report.d;
        history.push(objective(bank, &c, &d, lambda, y));
        if moved <= opts.d_change_tol {
            converged = true;
            break;
        }
    }

    let active_set = support_of(&d);
    let w = Array1::from_shape_fn(bank.m(), |k| (d.weights()[k] / bank.scalings[k]).sqrt());
    let objective_value = objective(bank, &c, &d, lambda, y);
    Ok(Rls2Fit {
        c,
        d,
        lambda,
        active_set,
        objective: objective_value,
        outer_iterations: outer,
        converged,
        w,
        objective_history: history,
    })
}

/// Per-lambda bookkeeping along a path.
#[derive(Clone, Debug)]
pub struct PathDiagnostics {
    pub lambda: f64,
    pub objective: f64,
    pub n_kernels: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_seconds: f64,
}

/// A warm-started regularization path over a descending lambda grid.
#[derive(Clone, Debug)]
pub struct RegPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<Rls2Fit>,
    pub diagnostics: Vec<PathDiagnostics>,
}

impl RegPath {
    /// CSV dump of the per-lambda diagnostics.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "lambda,objective,n_kernels,outer_iterations,wall_seconds"
        )?;
        for diag in &self.diagnostics {
            writeln!(
                w,
                "{},{},{},{},{}",
                diag.lambda,
                diag.objective,
                diag.n_kernels,
                diag.outer_iterations,
                diag.wall_seconds
            )?;
        }
        Ok(())
    }
}

/// The default benchmark grid: 30 lambdas log-spaced in [1e-6, 1e6],
/// descending so that paths warm-start from the most regularized end.
pub fn default_lambda_grid() -> Vec<f64> {
    log_lambda_grid(1e-6, 1e6, 30)
}

/// n log-spaced lambdas between lo and hi, returned descending.
pub fn log_lambda_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 1);
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.log10(), lo.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Fit the whole path, warm-starting each lambda from the previous
/// solution. The first lambda starts from the alignment vertex.
pub fn fit_path(
    bank: &KernelBank,
    y: &Array1<f64>,
    lambdas: &[f64],
    opts: &FitOptions,
) -> Result<RegPath> {
    if lambdas.is_empty() {
        return Err(Rls2Error::BadLambdaGrid);
    }
    if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite())
        || lambdas.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Rls2Error::BadLambdaGrid);
    }
    let mut fits: Vec<Rls2Fit> = Vec::with_capacity(lambdas.len());
    let mut diagnostics = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let start = Instant::now();
        let init = fits.last().map(|prev: &Rls2Fit| (&prev.c, &prev.d));
        let fit_result = fit(bank, y, lambda, init, opts).map_err(|e| Rls2Error::PathFit {
            lambda,
            source: Box::new(e),
        })?;
        diagnostics.push(PathDiagnostics {
            lambda,
            objective: fit_result.objective,
            n_kernels: fit_result.active_set.len(),
            outer_iterations: fit_result.outer_iterations,
            converged: fit_result.converged,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        fits.push(fit_result);
    }
    Ok(RegPath {
        lambdas: lambdas.to_vec(),
        fits,
        diagnostics,
    })
}
