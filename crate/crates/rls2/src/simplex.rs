//! Simplex-constrained least squares: min_{d in Delta_m} ||V d - u||^2.
//!
//! The solver runs pairwise (two-coordinate) updates that transfer mass
//! between the maximally KKT-violating pair, so feasibility (d >= 0,
//! sum d = 1) holds exactly at every iterate. Zero coordinates whose
//! gradient sits well above the current support gradient are shrunk out of
//! pair selection and re-checked before convergence is declared.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, Rls2Error};

/// Entries at or below this are treated as exact zeros in supports.
pub const SUPPORT_EPS: f64 = 1e-12;

const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Kernel-combination weights on the standard simplex:
/// d >= 0 componentwise and sum d = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    d: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(d: Vec<f64>) -> Result<SimplexPoint> {
        if d.is_empty() {
            return Err(Rls2Error::EmptyInput("simplex point"));
        }
        if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Rls2Error::Config(
                "simplex point entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Rls2Error::Config(format!(
                "simplex point entries sum to {sum}, expected 1"
            )));
        }
        Ok(SimplexPoint { d })
    }

    /// The vertex e_i.
    pub fn vertex(m: usize, i: usize) -> SimplexPoint {
        assert!(i < m, "vertex index out of range");
        let mut d = vec![0.0; m];
        d[i] = 1.0;
        SimplexPoint { d }
    }

    pub fn uniform(m: usize) -> SimplexPoint {
        assert!(m > 0);
        SimplexPoint {
            d: vec![1.0 / m as f64; m],
        }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.d
    }

    pub fn to_array(&self) -> Array1<f64> {
        Array1::from(self.d.clone())
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.d.len()).filter(|&i| self.d[i] > 0.0).collect()
    }

    pub fn l1_distance(&self, other: &SimplexPoint) -> f64 {
        self.d
            .iter()
            .zip(other.d.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Rls2Error;
    fn try_from(d: Vec<f64>) -> Result<SimplexPoint> {
        SimplexPoint::new(d)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Vec<f64> {
        p.d
    }
}

/// Per-update objective/violation record, for diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct SweepRecord {
    pub objective: f64,
    pub violation: f64,
}

/// Solver options. `max_sweeps = 0` means the default cap of 100 * m.
#[derive(Clone, Debug)]
pub struct SimplexLsOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub record_trace: bool,
    /// Cache V'V for gradient updates while m stays at or below this;
    /// larger problems recompute gradients from the residual.
    pub cache_columns_limit: usize,
}

impl Default for SimplexLsOptions {
    fn default() -> Self {
        SimplexLsOptions {
            tol: 1e-8,
            max_sweeps: 0,
            record_trace: false,
            cache_columns_limit: CACHE_COLUMNS_LIMIT,
        }
    }
}

/// Result of a simplex least-squares solve.
#[derive(Clone, Debug)]
pub struct SimplexLsReport {
    pub d: SimplexPoint,
    pub objective: f64,
    pub kkt_violation: f64,
    /// Pairwise updates performed.
    pub iterations: usize,
    pub active_set: Vec<usize>,
    pub converged: bool,
    pub trace: Vec<SweepRecord>,
}

impl SimplexLsReport {
    /// Dump the per-sweep objective/violation trace as CSV (requires
    /// solving with `record_trace` on).
    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep,objective,violation")?;
        for (i, rec) in self.trace.iter().enumerate() {
            writeln!(w, "{i},{},{}", rec.objective, rec.violation)?;
        }
        Ok(())
    }
}

/// Columns of V' V are cached when m is moderate; otherwise gradients are
/// recomputed from the residual with per-column matrix-vector products.
const CACHE_COLUMNS_LIMIT: usize = 2000;

struct Gradient<'a> {
    v: &'a Array2<f64>,
    q: Option<Array2<f64>>, // V'V
    vtu: Array1<f64>,       // V'u
    g: Array1<f64>,         // current gradient 2 V'(V d - u)
}

impl<'a> Gradient<'a> {
    fn new(v: &'a Array2<f64>, u: &Array1<f64>, d: &[f64], cache_limit: usize) -> Gradient<'a> {
        let m = v.ncols();
        let q = if m <= cache_limit {
            Some(v.t().dot(v))
        } else {
            None
        };
        let vtu = v.t().dot(u);
        let mut grad = Gradient {
            v,
            q,
            vtu,
            g: Array1::zeros(m),
        };
        let r = v.dot(&Array1::from(d.to_vec())) - u;
        grad.refresh(&r, d);
        grad
    }

    /// Exact recompute of the full gradient.
    fn refresh(&mut self, residual: &Array1<f64>, d: &[f64]) {
        match &self.q {
            Some(q) => {
                let dv = Array1::from(d.to_vec());
                self.g = (q.dot(&dv) - &self.vtu) * 2.0;
            }
            None => {
                self.g = self.v.t().dot(residual) * 2.0;
            }
        }
    }

    /// Incremental update after moving mass t from i to j.
    fn step(&mut self, i: usize, j: usize, t: f64, residual: &Array1<f64>) {
        match &self.q {
            Some(q) => {
                let qi = q.column(i);
                let qj = q.column(j);
                for (k, gk) in self.g.iter_mut().enumerate() {
                    *gk += 2.0 * t * (qj[k] - qi[k]);
                }
            }
            None => {
                self.g = self.v.t().dot(residual) * 2.0;
            }
        }
    }

    fn pair_curvature(&self, i: usize, j: usize) -> f64 {
        match &self.q {
            Some(q) => q[[i, i]] + q[[j, j]] - 2.0 * q[[i, j]],
            None => {
                let w = &self.v.column(j) - &self.v.column(i);
                w.dot(&w)
            }
        }
    }
}

/// Solve min_{d in Delta_m} ||V d - u||^2 with default options and an
/// optional warm start.
pub fn solve_simplex_ls(
    v: &Array2<f64>,
    u: &Array1<f64>,
    warm_start: Option<&SimplexPoint>,
    tol: f64,
) -> Result<SimplexLsReport> {
    solve_simplex_ls_opts(
        v,
        u,
        warm_start,
        &SimplexLsOptions {
            tol,
            ..SimplexLsOptions::default()
        },
    )
}

/// Full-options entry point for the simplex least-squares solver.
pub fn solve_simplex_ls_opts(
    v: &Array2<f64>,
    u: &Array1<f64>,
    warm_start: Option<&SimplexPoint>,
    opts: &SimplexLsOptions,
) -> Result<SimplexLsReport> {
    let (l, m) = (v.nrows(), v.ncols());
    if m == 0 {
        return Err(Rls2Error::EmptyInput("subproblem columns"));
    }
    if u.len() != l {
        return Err(Rls2Error::DimensionMismatch(format!(
            "V is {l}x{m} but u has length {}",
            u.len()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Rls2Error::BadTolerance(opts.tol));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Rls2Error::NonFinite("subproblem matrix V"));
    }
    if !u.iter().all(|x| x.is_finite()) {
        return Err(Rls2Error::NonFinite("subproblem vector u"));
    }
    if let Some(w) = warm_start {
        if w.len() != m {
            return Err(Rls2Error::DimensionMismatch(format!(
                "warm start has length {}, expected {m}",
                w.len()
            )));
        }
    }

    let mut d: Vec<f64> = warm_start
        .map(|w| w.weights().to_vec())
        .unwrap_or_else(|| SimplexPoint::uniform(m).weights().to_vec());

    if m == 1 {
        let d = SimplexPoint::vertex(1, 0);
        let r = v.column(0).to_owned() - u;
        return Ok(SimplexLsReport {
            objective: r.dot(&r),
            kkt_violation: 0.0,
            iterations: 0,
            active_set: vec![0],
            converged: true,
            trace: Vec::new(),
            d,
        });
    }

    let max_sweeps = if opts.max_sweeps == 0 {
        100 * m
    } else {
        opts.max_sweeps
    };

    let mut residual = v.dot(&Array1::from(d.clone())) - u;
    let mut grad = Gradient::new(v, u, &d, opts.cache_columns_limit);
    let mut shrunk = vec![false; m];
    let mut any_shrunk = false;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut converged = false;

    while iterations < max_sweeps {
        // maximally violating pair over the unshrunk coordinates
        let mut i_up = usize::MAX;
        let mut g_up = f64::NEG_INFINITY;
        let mut j_low = usize::MAX;
        let mut g_low = f64::INFINITY;
        for k in 0..m {
            if shrunk[k] {
                continue;
            }
            let gk = grad.g[k];
            if d[k] > 0.0 && gk > g_up {
                g_up = gk;
                i_up = k;
            }
            if gk < g_low {
                g_low = gk;
                j_low = k;
            }
        }
        let violation = (g_up - g_low).max(0.0);
        if opts.record_trace {
            trace.push(SweepRecord {
                objective: residual.dot(&residual),
                violation,
            });
        }

        if violation <= opts.tol || i_up == j_low {
            // re-admit shrunk coordinates and re-check before declaring
            // convergence; the refresh also clears incremental drift
            grad.refresh(&residual, &d);
            if any_shrunk {
                shrunk.iter_mut().for_each(|s| *s = false);
                any_shrunk = false;
                continue;
            }
            let full = full_violation(&grad.g, &d);
            if full <= opts.tol {
                converged = true;
                break;
            }
            continue;
        }

        // move mass t from i_up to j_low
        let curvature = grad.pair_curvature(i_up, j_low);
        let t = if curvature > 0.0 {
            (violation / (2.0 * curvature)).min(d[i_up])
        } else {
            d[i_up]
        };
        let w = &v.column(j_low) - &v.column(i_up);
        residual.scaled_add(t, &w);
        if t >= d[i_up] {
            d[j_low] += d[i_up];
            d[i_up] = 0.0;
        } else {
            d[i_up] -= t;
            d[j_low] += t;
        }
        grad.step(i_up, j_low, t, &residual);
        iterations += 1;

        // periodic shrinking of far-off zero coordinates
        if iterations.is_multiple_of(m) {
            let mu = (0..m)
                .filter(|&k| d[k] > 0.0)
                .map(|k| grad.g[k])
                .fold(f64::NEG_INFINITY, f64::max);
            let margin = violation.max(10.0 * opts.tol);
            for k in 0..m {
                if d[k] == 0.0 && !shrunk[k] && grad.g[k] > mu + margin {
                    shrunk[k] = true;
                    any_shrunk = true;
                }
            }
        }
    }

    // exact zeros for near-zero mass, then restore the unit sum
    for dk in d.iter_mut() {
        if *dk <= SUPPORT_EPS {
            *dk = 0.0;
        }
    }
    let sum: f64 = d.iter().sum();
    for dk in d.iter_mut() {
        *dk /= sum;
    }

    let point = SimplexPoint::new(d)?;
    let report_violation = kkt_violation(v, u, &point);
    let r = v.dot(&point.to_array()) - u;
    Ok(SimplexLsReport {
        objective: r.dot(&r),
        kkt_violation: report_violation,
        iterations,
        active_set: point.support(),
        converged,
        trace,
        d: point,
    })
}

fn full_violation(g: &Array1<f64>, d: &[f64]) -> f64 {
    let mut g_up = f64::NEG_INFINITY;
    let mut g_low = f64::INFINITY;
    for (k, &dk) in d.iter().enumerate() {
        if dk > 0.0 && g[k] > g_up {
            g_up = g[k];
        }
        if g[k] < g_low {
            g_low = g[k];
        }
    }
    (g_up - g_low).max(0.0)
}

/// KKT violation certificate for the simplex least-squares problem:
/// max over the support of g minus min over all coordinates of g, with
/// g = 2 V'(V d - u), clipped below at zero.
pub fn kkt_violation(v: &Array2<f64>, u: &Array1<f64>, d: &SimplexPoint) -> f64 {
    let g = v.t().dot(&(v.dot(&d.to_array()) - u)) * 2.0;
    full_violation(&g, d.weights())
}

#[cfg(test)]
#[allow(
    clippy::needless_range_loop,
    clippy::manual_range_contains,
    clippy::useless_vec
)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, l: usize, m: usize) -> (Array2<f64>, Array1<f64>) {
        let v = Array2::from_shape_fn((l, m), |_| rng.random::<f64>() * 2.0 - 1.0);
        let u = Array1::from_shape_fn(l, |_| rng.random::<f64>() * 2.0 - 1.0);
        (v, u)
    }

    /// Brute-force minimum of ||V d - u||^2 over a grid on the 3-simplex,
    /// computed from independently assembled quadratic coefficients.
    fn grid_minimum(v: &Array2<f64>, u: &Array1<f64>, steps: usize) -> f64 {
        let l = v.nrows();
        let mut q = [[0.0f64; 3]; 3];
        let mut b = [0.0f64; 3];
        let mut uu = 0.0;
        for a in 0..3 {
            for c in 0..3 {
                for r in 0..l {
                    q[a][c] += v[[r, a]] * v[[r, c]];
                }
            }
            for r in 0..l {
                b[a] += v[[r, a]] * u[r];
            }
        }
        for r in 0..l {
            uu += u[r] * u[r];
        }
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let k = steps - i - j;
                let d = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    k as f64 / steps as f64,
                ];
                let mut val = uu;
                for a in 0..3 {
                    val -= 2.0 * b[a] * d[a];
                    for c in 0..3 {
                        val += d[a] * q[a][c] * d[c];
                    }
                }
                if val < best {
                    best = val;
                }
            }
        }
        best
    }

    #[test]
    fn singleton_simplex_returns_one() {
        let v = array![[3.0], [4.0]];
        let u = array![1.0, 1.0];
        let rep = solve_simplex_ls(&v, &u, None, 1e-8).unwrap();
        assert_eq!(rep.d.weights(), &[1.0]);
        assert!(rep.converged);
        assert_eq!(rep.kkt_violation, 0.0);
    }

    #[test]
    fn identity_vertex_optimum() {
        let v = array![[1.0, 0.0], [0.0, 1.0]];
        let u = array![1.0, 0.0];
        let rep = solve_simplex_ls(&v, &u, None, 1e-10).unwrap();
        assert_relative_eq!(rep.d.weights()[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(rep.objective, 0.0, epsilon = 1e-12);
        assert!(rep.kkt_violation <= 1e-10);
    }

    #[test]
    fn identity_interior_optimum() {
        let v = array![[1.0, 0.0], [0.0, 1.0]];
        let u = array![0.7, 0.3];
        let rep = solve_simplex_ls(&v, &u, None, 1e-10).unwrap();
        assert_relative_eq!(rep.d.weights()[0], 0.7, epsilon = 1e-9);
        assert_relative_eq!(rep.d.weights()[1], 0.3, epsilon = 1e-9);
        assert!(rep.objective <= 1e-16);
    }

    #[test]
    fn random_instances_match_grid_oracle() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (v, u) = random_instance(&mut rng, 6, 3);
            let rep = solve_simplex_ls(&v, &u, None, 1e-8).unwrap();
            let oracle = grid_minimum(&v, &u, 1000);
            assert!(
                rep.objective <= oracle + 1e-5,
                "seed {seed}: solver {} vs grid {}",
                rep.objective,
                oracle
            );
        }
    }

    #[test]
    fn kkt_violation_examples() {
        let v = array![[1.0, 0.0], [0.0, 1.0]];
        let u = array![1.0, 0.0];
        let d = SimplexPoint::vertex(2, 0);
        assert!(kkt_violation(&v, &u, &d) <= 1e-10);

        let v1 = array![[2.0], [1.0]];
        let u1 = array![5.0, -3.0];
        assert_eq!(kkt_violation(&v1, &u1, &SimplexPoint::vertex(1, 0)), 0.0);
    }

    #[test]
    fn kkt_violation_matches_explicit_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (v, u) = random_instance(&mut rng, 5, 4);
        let d = SimplexPoint::uniform(4);
        let viol = kkt_violation(&v, &u, &d);
        // explicit recomputation
        let dv = d.to_array();
        let mut g = vec![0.0; 4];
        for k in 0..4 {
            for r in 0..5 {
                let mut vd = 0.0;
                for c in 0..4 {
                    vd += v[[r, c]] * dv[c];
                }
                g[k] += 2.0 * v[[r, k]] * (vd - u[r]);
            }
        }
        let up = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let low = g.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(viol, (up - low).max(0.0), max_relative = 1e-10);
    }

    #[test]
    fn iterates_keep_exact_feasibility_and_monotone_objective() {
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (v, u) = random_instance(&mut rng, 8, 5);
            let opts = SimplexLsOptions {
                tol: 1e-10,
                record_trace: true,
                ..SimplexLsOptions::default()
            };
            let rep = solve_simplex_ls_opts(&v, &u, None, &opts).unwrap();
            assert!(rep.converged);
            for w in rep.trace.windows(2) {
                assert!(
                    w[1].objective <= w[0].objective + 1e-12 * (1.0 + w[0].objective.abs()),
                    "objective increased within a solve"
                );
            }
            let sum: f64 = rep.d.weights().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(rep.d.weights().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn warm_start_from_optimum_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (v, u) = random_instance(&mut rng, 7, 4);
        let first = solve_simplex_ls(&v, &u, None, 1e-10).unwrap();
        let second = solve_simplex_ls(&v, &u, Some(&first.d), 1e-10).unwrap();
        assert!(second.iterations <= 2);
        assert!(second.converged);
        assert_relative_eq!(second.objective, first.objective, max_relative = 1e-10);
    }

    #[test]
    fn report_objective_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (v, u) = random_instance(&mut rng, 6, 3);
        let rep = solve_simplex_ls(&v, &u, None, 1e-9).unwrap();
        let r = v.dot(&rep.d.to_array()) - &u;
        assert_relative_eq!(rep.objective, r.dot(&r), max_relative = 1e-12);
        assert_eq!(rep.active_set, rep.d.support());
    }

    #[test]
    fn sweep_cap_returns_best_iterate_flagged_non_converged() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let (v, u) = random_instance(&mut rng, 10, 6);
        let opts = SimplexLsOptions {
            tol: 1e-14,
            max_sweeps: 1,
            ..SimplexLsOptions::default()
        };
        let rep = solve_simplex_ls_opts(&v, &u, None, &opts).unwrap();
        assert!(!rep.converged);
        assert!(rep.iterations <= 1);
        let sum: f64 = rep.d.weights().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        // the returned objective is still exact for the returned point
        let r = v.dot(&rep.d.to_array()) - &u;
        assert_relative_eq!(rep.objective, r.dot(&r), max_relative = 1e-12);
    }

    #[test]
    fn trace_csv_dump_has_one_row_per_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let (v, u) = random_instance(&mut rng, 8, 4);
        let opts = SimplexLsOptions {
            tol: 1e-9,
            record_trace: true,
            ..SimplexLsOptions::default()
        };
        let rep = solve_simplex_ls_opts(&v, &u, None, &opts).unwrap();
        let mut buf = Vec::new();
        rep.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sweep,objective,violation\n"));
        assert_eq!(text.lines().count(), rep.trace.len() + 1);
    }

    #[test]
    fn uncached_gradient_path_matches_cached_solution() {
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let (v, u) = random_instance(&mut rng, 9, 7);
            let cached = solve_simplex_ls(&v, &u, None, 1e-10).unwrap();
            let opts = SimplexLsOptions {
                tol: 1e-10,
                cache_columns_limit: 0,
                ..SimplexLsOptions::default()
            };
            let uncached = solve_simplex_ls_opts(&v, &u, None, &opts).unwrap();
            assert!(uncached.converged);
            assert!(uncached.kkt_violation <= 1e-10);
            assert_relative_eq!(cached.objective, uncached.objective, max_relative = 1e-9);
        }
    }

    #[test]
    fn non_finite_inputs_error() {
        let v = array![[f64::NAN, 0.0], [0.0, 1.0]];
        let u = array![1.0, 0.0];
        assert!(matches!(
            solve_simplex_ls(&v, &u, None, 1e-8),
            Err(Rls2Error::NonFinite(_))
        ));
    }

    #[test]
    fn simplex_point_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexPoint::new(vec![0.6, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![]).is_err());
        let p = SimplexPoint::vertex(3, 1);
        assert_eq!(p.support(), vec![1]);
    }
}
