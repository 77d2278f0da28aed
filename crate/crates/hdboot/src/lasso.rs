//! Penalized least squares by cyclic coordinate descent, bootstrap penalty
//! selection (known-sigma and estimated-residual variants), the iterated
//! refitting pipeline, and the sup-score significance test.
//!
//! The objective is (1/n)·Σ(yᵢ - xᵢᵀβ)² + λ·Σ|β_j| with the penalty on the
//! original coefficients. Columns are rescaled to unit second moment
//! internally (an exact reparametrization), so the coordinate update is a
//! single soft threshold; zero columns are frozen at zero.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Axis};
use rand::RngExt;
use rand_distr::StandardNormal;

use crate::bootstrap::{order_stat, CHUNK};
use crate::error::{Error, Result};
use crate::rng::{mix, stream_rng};
use crate::stats::{max_stat, read_numeric_csv, MaxMode};

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_ITER: usize = 10_000;

/// A response vector with its design matrix. Unlike the observation matrices
/// used for mean inference, a design may have a single column.
#[derive(Debug, Clone)]
pub struct RegressionData {
    y: Array1<f64>,
    x: Array2<f64>,
}

impl RegressionData {
    pub fn new(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::InvalidData("need at least two observations".into()));
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidData("design needs at least one column".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::InvalidData(format!(
                "response length {} does not match {} design rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("entries must be finite".into()));
        }
        Ok(Self { y, x })
    }

    /// CSV with a header row; first column is the response, the rest the design.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let (_, rows) = read_numeric_csv(path)?;
        if rows.first().is_none_or(|r| r.len() < 2) {
            return Err(Error::InvalidData(
                "need a response column plus at least one covariate".into(),
            ));
        }
        let n = rows.len();
        let p = rows[0].len() - 1;
        let y = Array1::from_iter(rows.iter().map(|r| r[0]));
        let mut x = Array2::zeros((n, p));
        for (i, r) in rows.iter().enumerate() {
            for j in 0..p {
                x[[i, j]] = r[j + 1];
            }
        }
        Self::new(y, x)
    }

    /// Subtracts the response mean and each column mean; the model carries no
    /// intercept, so centering is the caller's preprocessing step.
    pub fn centered(&self) -> Self {
        let y_mean = self.y.mean().unwrap();
        let col_means = self.x.mean_axis(Axis(0)).unwrap();
        Self {
            y: &self.y - y_mean,
            x: &self.x - &col_means.insert_axis(Axis(0)),
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: Array1<f64>,
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn objective_at(d: &RegressionData, beta: &Array1<f64>, lambda: f64) -> f64 {
    let resid = d.y() - &d.x().dot(beta);
    resid.dot(&resid) / d.n() as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent until the largest coordinate change in a sweep
/// (on the rescaled columns) drops below `tol`. Exceeding `max_iter` sweeps
/// returns a non-convergence error that carries the last iterate.
pub fn lasso_fit(d: &RegressionData, lambda: f64, tol: f64, max_iter: usize) -> Result<LassoFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidData(format!(
            "penalty must be nonnegative and finite, got {lambda}"
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidData("tolerance must be nonnegative".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidData("max_iter must be at least 1".into()));
    }
    let n = d.n() as f64;
    let p = d.p();
    let x = d.x();
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let c = x.column(j);
            (c.dot(&c) / n).sqrt()
        })
        .collect();
    let mut xn = x.clone();
    for (j, s) in scale.iter().enumerate() {
        if *s > 0.0 {
            xn.column_mut(j).mapv_inplace(|v| v / s);
        }
    }

    let mut beta_n = vec![0.0f64; p];
    let mut resid = d.y().clone();
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    for sweep in 1..=max_iter {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if scale[j] == 0.0 {
                continue;
            }
            let col = xn.column(j);
            let z = col.dot(&resid) / n + beta_n[j];
            let new = soft_threshold(z, lambda / (2.0 * scale[j]));
            let delta = new - beta_n[j];
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                beta_n[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        iterations = sweep;
        last_change = max_delta;
        if max_delta < tol {
            converged = true;
            break;
        }
    }

    let beta = Array1::from_iter(
        (0..p).map(|j| if scale[j] > 0.0 { beta_n[j] / scale[j] } else { 0.0 }),
    );
    let active_set: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
    let fit = LassoFit {
        objective: objective_at(d, &beta, lambda),
        beta,
        lambda,
        active_set,
        iterations,
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::NonConvergence { iterations, last_change, last_fit: Box::new(fit) })
    }
}

/// Design-weighted norm sqrt(n^(-1)·Σ(xᵢᵀdelta)²) used in the rate checks.
pub fn prediction_norm(x: &Array2<f64>, delta: &Array1<f64>) -> f64 {
    let fitted = x.dot(delta);
    (fitted.dot(&fitted) / x.nrows() as f64).sqrt()
}

/// Conditional (1-alpha)-quantile of 2·max_j|n^(-1)·Σᵢ x_ij·e_i·ξ_i| over B
/// standard-normal multiplier vectors ξ. Both penalty rules reduce to this
/// kernel, which makes the constant-residual identity exact at equal seeds.
fn multiplier_score_quantile(
    x: &Array2<f64>,
    e: &Array1<f64>,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if b == 0 {
        return Err(Error::InvalidData("B must be positive".into()));
    }
    let n = x.nrows();
    if e.len() != n {
        return Err(Error::InvalidData(format!(
            "residual length {} does not match {} rows",
            e.len(),
            n
        )));
    }
    let nf = n as f64;
    let nchunks = b.div_ceil(CHUNK);
    let stats: Vec<Vec<f64>> = (0..nchunks)
        .into_par_iter()
        .map(|ci| {
            let start = ci * CHUNK;
            let rows = CHUNK.min(b - start);
            let mut w = Array2::<f64>::zeros((rows, n));
            for (r, mut wrow) in w.rows_mut().into_iter().enumerate() {
                let mut rng = stream_rng(seed, (start + r) as u64);
                for (v, ei) in wrow.iter_mut().zip(e.iter()) {
                    let xi: f64 = rng.sample(StandardNormal);
                    *v = xi * ei;
                }
            }
            let prod = w.dot(x);
            prod.rows()
                .into_iter()
                .map(|row| {
                    2.0 * max_stat(row.as_slice().expect("contiguous"), MaxMode::MaxAbs)
                        .expect("p >= 1")
                        / nf
                })
                .collect()
        })
        .collect();
    let stats = stats.concat();
    Ok(order_stat(&stats, 1.0 - alpha))
}

/// Penalty level for known noise scale sigma: the (1-alpha)-quantile of
/// 2·sigma·max_j|n^(-1)·Σ x_ij·ξ_i|.
pub fn penalty_homoscedastic(
    x: &Array2<f64>,
    sigma: f64,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidData(format!(
            "noise scale must be positive and finite, got {sigma}"
        )));
    }
    let e = Array1::from_elem(x.nrows(), sigma);
    multiplier_score_quantile(x, &e, alpha, b, seed)
}

/// Penalty level from estimated residuals: the (1-alpha)-quantile of
/// 2·max_j|n^(-1)·Σ x_ij·ê_i·ξ_i|.
pub fn penalty_heteroscedastic(
    x: &Array2<f64>,
    residuals: &Array1<f64>,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<f64> {
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("residuals must be finite".into()));
    }
    if residuals.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidData(
            "residuals are all zero; the multiplier score is degenerate".into(),
        ));
    }
    multiplier_score_quantile(x, residuals, alpha, b, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    Homoscedastic,
    Heteroscedastic,
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseMode::Homoscedastic => "homoscedastic",
            NoiseMode::Heteroscedastic => "heteroscedastic",
        })
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homoscedastic" => Ok(NoiseMode::Homoscedastic),
            "heteroscedastic" => Ok(NoiseMode::Heteroscedastic),
            other => Err(Error::Config(format!("unknown noise mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RlassoFit {
    pub fit: LassoFit,
    /// Crude penalty first, then one entry per refinement.
    pub lambda_trace: Vec<f64>,
}

fn rms(v: &Array1<f64>) -> f64 {
    (v.dot(v) / v.len() as f64).sqrt()
}

/// Iterated penalty refinement: start from a crude penalty that uses the
/// response standard deviation as the noise scale, then alternate fitting
/// and re-selecting the penalty from the fit's residuals.
pub fn rlasso_pipeline(
    d: &RegressionData,
    alpha: f64,
    mode: NoiseMode,
    refinements: usize,
    b: usize,
    seed: u64,
) -> Result<RlassoFit> {
    if refinements == 0 {
        return Err(Error::InvalidData("refinements must be at least 1".into()));
    }
    let y = d.y();
    let y_mean = y.mean().unwrap();
    let sd_y = rms(&(y - y_mean));
    if !(sd_y > 0.0) {
        return Err(Error::InvalidData(
            "response is constant; the crude penalty is undefined".into(),
        ));
    }
    let mut lambda = penalty_homoscedastic(d.x(), sd_y, alpha, b, mix(seed, 0))?;
    let mut trace = vec![lambda];
    for k in 1..=refinements {
        let fit = lasso_fit(d, lambda, LASSO_TOL, LASSO_MAX_ITER)?;
        let resid = d.y() - &d.x().dot(&fit.beta);
        lambda = match mode {
            NoiseMode::Homoscedastic => {
                let s = rms(&resid);
                if !(s > 0.0) {
                    return Err(Error::InvalidData(
                        "zero residuals; the noise scale is degenerate".into(),
                    ));
                }
                penalty_homoscedastic(d.x(), s, alpha, b, mix(seed, k as u64))?
            }
            NoiseMode::Heteroscedastic => {
                penalty_heteroscedastic(d.x(), &resid, alpha, b, mix(seed, k as u64))?
            }
        };
        trace.push(lambda);
    }
    let fit = lasso_fit(d, lambda, LASSO_TOL, LASSO_MAX_ITER)?;
    Ok(RlassoFit { fit, lambda_trace: trace })
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SupScoreTest {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
}

/// Joint significance test: statistic 2·max_j|n^(-1)·Σ x_ij·y_i| against the
/// residual-bootstrap penalty computed with the response as residuals (the
/// null model has no signal). An identically zero response never rejects.
pub fn sup_score_test(d: &RegressionData, alpha: f64, b: usize, seed: u64) -> Result<SupScoreTest> {
    if d.y().iter().all(|v| *v == 0.0) {
        return Ok(SupScoreTest { statistic: 0.0, critical_value: 0.0, reject: false });
    }
    let score = d.x().t().dot(d.y());
    let statistic =
        2.0 * max_stat(score.as_slice().expect("contiguous"), MaxMode::MaxAbs)? / d.n() as f64;
    let critical_value = penalty_heteroscedastic(d.x(), d.y(), alpha, b, seed)?;
    Ok(SupScoreTest { statistic, critical_value, reject: statistic > critical_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{arr1, arr2};

    fn ones_design(n: usize) -> RegressionData {
        RegressionData::new(Array1::from_elem(n, 2.0), Array2::from_elem((n, 1), 1.0)).unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(-0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(0.7, 0.0), 0.7);
    }

    #[test]
    fn intercept_only_fit_matches_closed_form() {
        let fit = lasso_fit(&ones_design(4), 1.0, LASSO_TOL, LASSO_MAX_ITER).unwrap();
        assert_relative_eq!(fit.beta[0], 1.5, epsilon = 1e-10);
        assert_eq!(fit.active_set, vec![0]);
        assert_relative_eq!(fit.objective, 0.25 + 1.5, epsilon = 1e-10);
    }

    #[test]
    fn unpenalized_orthonormal_design_gives_least_squares() {
        let x = arr2(&[[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]);
        let y = arr1(&[0.3, 1.1, -0.4, 2.0]);
        let ls = x.t().dot(&y) / 4.0;
        let d = RegressionData::new(y, x).unwrap();
        let fit = lasso_fit(&d, 0.0, LASSO_TOL, LASSO_MAX_ITER).unwrap();
        assert_relative_eq!(fit.beta[0], ls[0], epsilon = 1e-10);
        assert_relative_eq!(fit.beta[1], ls[1], epsilon = 1e-10);
    }

    #[test]
    fn penalty_at_score_threshold_zeroes_the_fit() {
        let x = arr2(&[[0.5, -1.2], [1.4, 0.3], [-0.9, 0.8], [0.2, 2.0], [-1.1, -0.4]]);
        let y = arr1(&[1.0, -0.7, 0.4, 1.9, -0.2]);
        let score: Array1<f64> = x.t().dot(&y) / 5.0;
        let lambda = 2.0 * score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d = RegressionData::new(y, x).unwrap();
        let fit = lasso_fit(&d, lambda, LASSO_TOL, LASSO_MAX_ITER).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!(fit.active_set.is_empty());
        let smaller = lasso_fit(&d, 0.9 * lambda, LASSO_TOL, LASSO_MAX_ITER).unwrap();
        assert!(!smaller.active_set.is_empty(), "just below the threshold something enters");
    }

    #[test]
    fn zero_column_is_frozen() {
        let x = arr2(&[[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]]);
        let d = RegressionData::new(arr1(&[1.0, 2.0, -1.0]), x).unwrap();
        let fit = lasso_fit(&d, 0.1, LASSO_TOL, LASSO_MAX_ITER).unwrap();
        assert_eq!(fit.beta[1], 0.0);
        assert!(fit.beta[0] != 0.0);
    }

    #[test]
    fn exhausted_sweeps_return_last_iterate() {
        match lasso_fit(&ones_design(4), 1.0, 0.0, 3) {
            Err(Error::NonConvergence { iterations, last_fit, .. }) => {
                assert_eq!(iterations, 3);
                assert_relative_eq!(last_fit.beta[0], 1.5, epsilon = 1e-10);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn objective_never_increases_with_more_sweeps() {
        let x = arr2(&[
            [0.5, -1.2, 0.3],
            [1.4, 0.3, -0.8],
            [-0.9, 0.8, 0.1],
            [0.2, 2.0, 1.5],
            [-1.1, -0.4, 0.6],
            [0.7, 0.1, -1.3],
        ]);
        let y = arr1(&[1.0, -0.7, 0.4, 1.9, -0.2, 0.8]);
        let d = RegressionData::new(y, x).unwrap();
        let mut prev = f64::INFINITY;
        for sweeps in 1..=8 {
            let obj = match lasso_fit(&d, 0.3, 0.0, sweeps) {
                Err(Error::NonConvergence { last_fit, .. }) => last_fit.objective,
                other => panic!("expected capped sweeps, got {other:?}"),
            };
            assert!(obj <= prev + 1e-12, "objective rose at sweep {sweeps}");
            prev = obj;
        }
    }

    #[test]
    fn kkt_holds_at_convergence() {
        let x = arr2(&[
            [0.5, -1.2, 0.3, 0.9],
            [1.4, 0.3, -0.8, -0.2],
            [-0.9, 0.8, 0.1, 1.1],
            [0.2, 2.0, 1.5, -0.6],
            [-1.1, -0.4, 0.6, 0.4],
            [0.7, 0.1, -1.3, -1.0],
        ]);
        let y = arr1(&[1.0, -0.7, 0.4, 1.9, -0.2, 0.8]);
        let d = RegressionData::new(y.clone(), x.clone()).unwrap();
        let lambda = 0.4;
        let fit = lasso_fit(&d, lambda, 1e-12, LASSO_MAX_ITER).unwrap();
        let resid = &y - &x.dot(&fit.beta);
        for j in 0..d.p() {
            let g = 2.0 * x.column(j).dot(&resid) / d.n() as f64;
            if fit.beta[j] != 0.0 {
                assert_relative_eq!(g, lambda * fit.beta[j].signum(), epsilon = 1e-6);
            } else {
                assert!(g.abs() <= lambda + 1e-6, "inactive coordinate {j} violates the bound");
            }
        }
    }

    #[test]
    fn known_sigma_penalty_is_homogeneous_and_monotone() {
        let x = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let lam1 = penalty_homoscedastic(&x, 1.0, 0.1, 400, 9).unwrap();
        let lam2 = penalty_homoscedastic(&x, 2.0, 0.1, 400, 9).unwrap();
        assert_relative_eq!(lam2, 2.0 * lam1, max_relative = 1e-12);
        let tighter = penalty_homoscedastic(&x, 1.0, 0.01, 400, 9).unwrap();
        assert!(tighter >= lam1);
    }

    #[test]
    fn constant_residuals_match_known_sigma_exactly() {
        let x = Array2::from_shape_fn((25, 3), |(i, j)| ((i + 2 * j) % 7) as f64 - 3.0);
        let sigma = 1.7;
        let e = Array1::from_elem(25, sigma);
        let a = penalty_homoscedastic(&x, sigma, 0.1, 300, 4).unwrap();
        let b = penalty_heteroscedastic(&x, &e, 0.1, 300, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residual_scaling_scales_the_penalty() {
        let x = Array2::from_shape_fn((25, 3), |(i, j)| ((i + 2 * j) % 7) as f64 - 3.0);
        let e = Array1::from_shape_fn(25, |i| 0.5 + (i % 4) as f64);
        let a = penalty_heteroscedastic(&x, &e, 0.1, 300, 4).unwrap();
        let b = penalty_heteroscedastic(&x, &(&e * 3.0), 0.1, 300, 4).unwrap();
        assert_relative_eq!(b, 3.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn zero_residuals_are_degenerate() {
        let x = Array2::from_elem((10, 2), 1.0);
        let e = Array1::zeros(10);
        assert!(penalty_heteroscedastic(&x, &e, 0.1, 100, 0).is_err());
    }

    #[test]
    fn refinement_trace_has_crude_plus_one_entry_per_round() {
        let x = Array2::from_shape_fn((40, 5), |(i, j)| (((i * 13 + j * 5) % 17) as f64 - 8.0) / 4.0);
        let y = Array1::from_shape_fn(40, |i| ((i % 9) as f64 - 4.0) / 2.0);
        let d = RegressionData::new(y, x).unwrap();
        for refinements in [1, 2, 3] {
            let r = rlasso_pipeline(&d, 0.1, NoiseMode::Heteroscedastic, refinements, 200, 5).unwrap();
            assert_eq!(r.lambda_trace.len(), refinements + 1);
            assert_eq!(r.fit.lambda, *r.lambda_trace.last().unwrap());
        }
    }

    #[test]
    fn zero_response_never_rejects() {
        let x = Array2::from_shape_fn((20, 3), |(i, j)| ((i + j) % 5) as f64);
        let d = RegressionData::new(Array1::zeros(20), x).unwrap();
        let t = sup_score_test(&d, 0.1, 200, 1).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.critical_value, 0.0);
        assert!(!t.reject);
    }

    #[test]
    fn response_scaling_leaves_the_decision_unchanged() {
        let x = Array2::from_shape_fn((30, 6), |(i, j)| (((i * 7 + j * 11) % 13) as f64 - 6.0) / 3.0);
        let y = Array1::from_shape_fn(30, |i| (((i * 5) % 9) as f64 - 4.0) / 2.0);
        let d = RegressionData::new(y.clone(), x.clone()).unwrap();
        let base = sup_score_test(&d, 0.1, 300, 8).unwrap();
        let scaled = RegressionData::new(&y * 4.0, x).unwrap();
        let big = sup_score_test(&scaled, 0.1, 300, 8).unwrap();
        assert_relative_eq!(big.statistic, 4.0 * base.statistic, max_relative = 1e-12);
        assert_relative_eq!(big.critical_value, 4.0 * base.critical_value, max_relative = 1e-12);
        assert_eq!(big.reject, base.reject);
    }

    #[test]
    fn centering_zeroes_means() {
        let x = arr2(&[[1.0, 4.0], [3.0, 0.0], [5.0, 2.0]]);
        let d = RegressionData::new(arr1(&[2.0, 4.0, 9.0]), x).unwrap().centered();
        assert_relative_eq!(d.y().sum(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.x().column(0).sum(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.x().column(1).sum(), 0.0, epsilon = 1e-12);
    }
}
