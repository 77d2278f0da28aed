//! Downstream procedures built on studentized bootstrap draws: simultaneous
//! confidence rectangles, post-selection intervals, stepdown multiple
//! testing with adjusted p-values, one-sided max-effect bounds, best-policy
//! sets, and the two-sample covariance comparison test.
//!
//! Indices in this module are zero-based; the CLI shifts to one-based
//! indices when serializing.

use ndarray::parallel::prelude::*;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::RngExt;
use rand_distr::StandardNormal;

use crate::bootstrap::{
    ceil_index, order_stat, studentized_draws, BootstrapDraws, BootstrapScheme, QuantileEstimate,
    CHUNK,
};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{
    col_means, col_second_moments, col_variances, max_stat, negligible_variance, DataMatrix,
    MaxMode, Rectangle,
};

/// Estimated influence values (one row per observation) together with the
/// estimator they expand. Inference on theta reduces to mean inference on
/// the rows.
#[derive(Debug, Clone)]
pub struct InfluencePanel {
    psi: DataMatrix,
    theta_hat: Array1<f64>,
}

impl InfluencePanel {
    pub fn new(psi: DataMatrix, theta_hat: Array1<f64>) -> Result<Self> {
        if theta_hat.len() != psi.p() {
            return Err(Error::InvalidData(format!(
                "estimate length {} does not match {} influence columns",
                theta_hat.len(),
                psi.p()
            )));
        }
        if theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("estimates must be finite".into()));
        }
        Ok(Self { psi, theta_hat })
    }

    /// Panel for coordinate means: each observation is its own influence
    /// value (draws recenter internally) and theta is the column mean.
    pub fn from_observations(x: DataMatrix) -> Self {
        let theta_hat = col_means(&x.values().view());
        Self { psi: x, theta_hat }
    }

    /// CSV with a header row; rows are observations, columns coordinates.
    /// Loads under the coordinate-mean convention of `from_observations`.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        Ok(Self::from_observations(DataMatrix::from_csv(path)?))
    }

    pub fn psi(&self) -> &DataMatrix {
        &self.psi
    }

    pub fn theta_hat(&self) -> &Array1<f64> {
        &self.theta_hat
    }

    pub fn n(&self) -> usize {
        self.psi.n()
    }

    pub fn p(&self) -> usize {
        self.psi.p()
    }
}

fn panel_sigma(panel: &InfluencePanel) -> Result<Array1<f64>> {
    let vars = col_variances(&panel.psi.values().view());
    let m2 = col_second_moments(&panel.psi.values().view());
    if let Some(index) =
        vars.iter().zip(m2.iter()).position(|(v, s)| negligible_variance(*v, *s))
    {
        return Err(Error::DegenerateCoordinate { index });
    }
    Ok(vars.mapv(f64::sqrt))
}

/// Studentized bootstrap draws of the scaled influence sum.
pub fn influence_bootstrap(
    panel: &InfluencePanel,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    studentized_draws(&panel.psi, scheme, b, seed)
}

/// Simultaneous intervals theta_j ± sigma_j * q / sqrt(n), q the conditional
/// (1-alpha)-quantile of the max-abs studentized draw.
#[derive(Debug, Clone)]
pub struct SimultaneousCI {
    lower: Array1<f64>,
    upper: Array1<f64>,
    level: f64,
    quantile_used: QuantileEstimate,
}

impl SimultaneousCI {
    pub fn lower(&self) -> &Array1<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &Array1<f64> {
        &self.upper
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn quantile_used(&self) -> QuantileEstimate {
        self.quantile_used
    }

    pub fn p(&self) -> usize {
        self.lower.len()
    }

    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn rectangle(&self) -> Rectangle {
        Rectangle::new(self.lower.clone(), self.upper.clone()).expect("bounds are ordered")
    }

    /// Closed membership test for a parameter vector.
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.rectangle().contains(theta)
    }
}

pub fn simultaneous_ci(
    panel: &InfluencePanel,
    alpha: f64,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<SimultaneousCI> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let draws = influence_bootstrap(panel, scheme, b, seed)?;
    let q = crate::bootstrap::conditional_quantile(&draws.reduce(MaxMode::MaxAbs)?, 1.0 - alpha)?;
    let sigma = panel_sigma(panel)?;
    let half = sigma * (q.value / (panel.n() as f64).sqrt());
    Ok(SimultaneousCI {
        lower: panel.theta_hat() - &half,
        upper: panel.theta_hat() + &half,
        level: 1.0 - alpha,
        quantile_used: q,
    })
}

/// The selected coordinate's interval from the simultaneous rectangle;
/// simultaneity makes it valid no matter how `j_hat` was chosen.
pub fn post_selection_ci(
    panel: &InfluencePanel,
    alpha: f64,
    j_hat: usize,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if j_hat >= panel.p() {
        return Err(Error::InvalidData(format!(
            "selected index {j_hat} out of range for {} coordinates",
            panel.p()
        )));
    }
    Ok(simultaneous_ci(panel, alpha, scheme, b, seed)?.interval(j_hat))
}

/// Influence panel for per-outcome average treatment effects under random
/// assignment with probability gamma: psi_ij = D_i Y_ij / gamma
/// - (1 - D_i) Y_ij / (1 - gamma), theta the column means.
pub fn ate_influence(d: &[bool], y: &DataMatrix, gamma: f64) -> Result<InfluencePanel> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidData(format!(
            "assignment probability must lie strictly between 0 and 1, got {gamma}"
        )));
    }
    if d.len() != y.n() {
        return Err(Error::InvalidData(format!(
            "treatment vector length {} does not match {} outcome rows",
            d.len(),
            y.n()
        )));
    }
    let v = y.values();
    let mut psi = Array2::zeros(v.dim());
    for (i, &treated) in d.iter().enumerate() {
        let w = if treated { 1.0 / gamma } else { -1.0 / (1.0 - gamma) };
        for j in 0..y.p() {
            psi[[i, j]] = w * v[[i, j]];
        }
    }
    let theta_hat = col_means(&psi.view());
    InfluencePanel::new(DataMatrix::new(psi)?, theta_hat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sides {
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone)]
pub struct StepdownStep {
    /// Hypotheses still in play when this step's critical value was taken.
    pub active: Vec<usize>,
    pub critical_value: f64,
    pub rejected: Vec<usize>,
}

/// Stepdown outcome. For two-sided runs the per-hypothesis fields are folded
/// back to the original coordinates (statistic = |t|, p-value = min of the
/// two one-sided p-values) while `steps` keeps the split-panel indices, where
/// index j+p is the reflected copy of j.
#[derive(Debug, Clone)]
pub struct StepdownResult {
    pub statistics: Vec<f64>,
    pub adjusted_p: Vec<f64>,
    /// Rejected hypotheses, ascending.
    pub rejected: Vec<usize>,
    /// 1-based step at which each hypothesis fell; 0 means never rejected.
    pub rejected_at_step: Vec<usize>,
    pub steps: Vec<StepdownStep>,
    /// Set when B is too small to resolve the level: the top order statistic
    /// is the quantile and every first-step max draw is tied.
    pub degenerate_draws_warning: bool,
}

impl StepdownResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,statistic,adjusted_p,rejected,step\n");
        for j in 0..self.statistics.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                j + 1,
                self.statistics[j],
                self.adjusted_p[j],
                u8::from(self.rejected_at_step[j] > 0),
                self.rejected_at_step[j]
            ));
        }
        out
    }
}

/// Stepdown over explicit statistics and one shared B x p draw matrix.
///
/// Each step takes the ceil((1-alpha)B)-th order statistic of the per-draw
/// maximum over the surviving set and rejects statistics strictly above it;
/// the loop stops at the first step with no rejection. Sharing one draw
/// matrix makes subset critical values exactly monotone. Adjusted p-values
/// come from the per-draw running maxima along the ascending statistic
/// order, with a running maximum down the order so they are monotone.
pub fn stepdown_from_draws(
    statistics: &[f64],
    draws: ArrayView2<f64>,
    alpha: f64,
) -> Result<StepdownResult> {
    let p = statistics.len();
    let b = draws.nrows();
    if p == 0 {
        return Err(Error::InvalidData("no hypotheses".into()));
    }
    if b == 0 {
        return Err(Error::InvalidData("no bootstrap draws".into()));
    }
    if draws.ncols() != p {
        return Err(Error::InvalidData(format!(
            "draw matrix has {} columns for {} statistics",
            draws.ncols(),
            p
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if statistics.iter().any(|t| !t.is_finite()) || draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("statistics and draws must be finite".into()));
    }

    let level = 1.0 - alpha;
    let mut active = vec![true; p];
    let mut n_active = p;
    let mut steps = Vec::new();
    let mut rejected_at_step = vec![0usize; p];
    let mut warning = false;
    let mut step_no = 0usize;
    while n_active > 0 {
        step_no += 1;
        let maxima: Vec<f64> = draws
            .rows()
            .into_iter()
            .map(|row| {
                let mut m = f64::NEG_INFINITY;
                for (j, &keep) in active.iter().enumerate() {
                    if keep {
                        m = m.max(row[j]);
                    }
                }
                m
            })
            .collect();
        if step_no == 1 && ceil_index(level, b) == b {
            let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            warning = lo == hi;
        }
        let c = order_stat(&maxima, level);
        let newly: Vec<usize> =
            (0..p).filter(|&j| active[j] && statistics[j] > c).collect();
        steps.push(StepdownStep {
            active: (0..p).filter(|&j| active[j]).collect(),
            critical_value: c,
            rejected: newly.clone(),
        });
        if newly.is_empty() {
            break;
        }
        for &j in &newly {
            active[j] = false;
            rejected_at_step[j] = step_no;
        }
        n_active -= newly.len();
    }

    let mut ord: Vec<usize> = (0..p).collect();
    ord.sort_by(|&a, &b2| statistics[a].total_cmp(&statistics[b2]));
    let mut counts = vec![0usize; p];
    for row in draws.rows() {
        let mut cm = f64::NEG_INFINITY;
        for (k, &j) in ord.iter().enumerate() {
            cm = cm.max(row[j]);
            if cm >= statistics[j] {
                counts[k] += 1;
            }
        }
    }
    let mut adjusted_p = vec![0.0; p];
    let mut running = 0usize;
    for k in (0..p).rev() {
        running = running.max(counts[k]);
        adjusted_p[ord[k]] = (1 + running) as f64 / (b as f64 + 1.0);
    }

    Ok(StepdownResult {
        statistics: statistics.to_vec(),
        adjusted_p,
        rejected: (0..p).filter(|&j| rejected_at_step[j] > 0).collect(),
        rejected_at_step,
        steps,
        degenerate_draws_warning: warning,
    })
}

/// Stepdown test of the coordinate nulls theta_j <= 0 (one-sided) or
/// theta_j = 0 (two-sided, via the reflected split panel) using studentized
/// statistics sqrt(n)·theta_j / sigma_j.
pub fn stepdown(
    panel: &InfluencePanel,
    alpha: f64,
    sides: Sides,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<StepdownResult> {
    let draws = influence_bootstrap(panel, scheme, b, seed)?;
    let dv = draws.vectors()?;
    let sigma = panel_sigma(panel)?;
    let sqrt_n = (panel.n() as f64).sqrt();
    let t: Vec<f64> = panel
        .theta_hat()
        .iter()
        .zip(sigma.iter())
        .map(|(th, s)| sqrt_n * th / s)
        .collect();
    match sides {
        Sides::OneSided => stepdown_from_draws(&t, dv, alpha),
        Sides::TwoSided => {
            let p = panel.p();
            let stats2: Vec<f64> = t.iter().copied().chain(t.iter().map(|v| -v)).collect();
            let mut doubled = Array2::zeros((dv.nrows(), 2 * p));
            doubled.slice_mut(s![.., ..p]).assign(&dv);
            doubled.slice_mut(s![.., p..]).assign(&dv.mapv(|v| -v));
            let core = stepdown_from_draws(&stats2, doubled.view(), alpha)?;
            let mut adjusted_p = vec![0.0; p];
            let mut rejected_at_step = vec![0usize; p];
            let mut statistics = vec![0.0; p];
            for j in 0..p {
                statistics[j] = t[j].abs();
                adjusted_p[j] = core.adjusted_p[j].min(core.adjusted_p[j + p]);
                rejected_at_step[j] = match (core.rejected_at_step[j], core.rejected_at_step[j + p])
                {
                    (0, s2) => s2,
                    (s1, 0) => s1,
                    (s1, s2) => s1.min(s2),
                };
            }
            Ok(StepdownResult {
                statistics,
                adjusted_p,
                rejected: (0..p).filter(|&j| rejected_at_step[j] > 0).collect(),
                rejected_at_step,
                steps: core.steps,
                degenerate_draws_warning: core.degenerate_draws_warning,
            })
        }
    }
}

fn max_lower_value(theta: &Array1<f64>, sigma: &Array1<f64>, sqrt_n: f64, k: f64) -> f64 {
    theta
        .iter()
        .zip(sigma.iter())
        .map(|(th, s)| th - k * s / sqrt_n)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Quantile-corrected lower bound for max_j theta_j; `ci` is one-sided.
#[derive(Debug, Clone, Copy)]
pub struct MaxEffectLower {
    pub value: f64,
    pub quantile_used: QuantileEstimate,
}

impl MaxEffectLower {
    pub fn ci(&self) -> (f64, f64) {
        (self.value, f64::INFINITY)
    }
}

/// max_j[theta_j - k·sigma_j/sqrt(n)] with k the (1-alpha)-quantile of the
/// one-sided max (not max-abs) studentized draws.
pub fn max_effect_lower(
    panel: &InfluencePanel,
    alpha: f64,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<MaxEffectLower> {
    let draws = influence_bootstrap(panel, scheme, b, seed)?;
    let k = crate::bootstrap::conditional_quantile(&draws.reduce(MaxMode::Max)?, 1.0 - alpha)?;
    let sigma = panel_sigma(panel)?;
    let sqrt_n = (panel.n() as f64).sqrt();
    Ok(MaxEffectLower {
        value: max_lower_value(panel.theta_hat(), &sigma, sqrt_n, k.value),
        quantile_used: k,
    })
}

fn policy_indices(theta: &Array1<f64>, margin: &Array1<f64>) -> Vec<usize> {
    let floor = theta
        .iter()
        .zip(margin.iter())
        .map(|(th, m)| th - m)
        .fold(f64::NEG_INFINITY, f64::max);
    theta
        .iter()
        .zip(margin.iter())
        .enumerate()
        .filter(|(_, (th, m))| *th + *m >= floor)
        .map(|(j, _)| j)
        .collect()
}

/// Indices whose upper limit theta_j + m_j reaches the best lower limit
/// max_k(theta_k - m_k), with margins m_j = q·sigma_j/sqrt(n) from the
/// (1-beta) max-abs quantile. Always contains the argmax.
pub fn best_policy_set(
    panel: &InfluencePanel,
    beta: f64,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let draws = influence_bootstrap(panel, scheme, b, seed)?;
    let q = crate::bootstrap::conditional_quantile(&draws.reduce(MaxMode::MaxAbs)?, 1.0 - beta)?;
    let sigma = panel_sigma(panel)?;
    let margin = sigma * (q.value / (panel.n() as f64).sqrt());
    Ok(policy_indices(panel.theta_hat(), &margin))
}

/// Refinement that pre-estimates the argmax set at level beta and takes the
/// one-sided correction over that set only, reusing one shared draw matrix
/// for both stages. Returns the bound and the pre-estimated set.
pub fn max_effect_lower_refined(
    panel: &InfluencePanel,
    alpha: f64,
    beta: f64,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<(MaxEffectLower, Vec<usize>)> {
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidData("levels must lie in (0,1)".into()));
    }
    let draws = influence_bootstrap(panel, scheme, b, seed)?;
    let dv = draws.vectors()?;
    let sigma = panel_sigma(panel)?;
    let sqrt_n = (panel.n() as f64).sqrt();

    let maxabs: Vec<f64> = dv
        .rows()
        .into_iter()
        .map(|r| max_stat(r.as_slice().expect("contiguous"), MaxMode::MaxAbs).expect("p >= 1"))
        .collect();
    let q_beta = order_stat(&maxabs, 1.0 - beta);
    let margin = &sigma * (q_beta / sqrt_n);
    let set = policy_indices(panel.theta_hat(), &margin);

    let subset_max: Vec<f64> = dv
        .rows()
        .into_iter()
        .map(|row| set.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let k = order_stat(&subset_max, 1.0 - alpha);
    let value = set
        .iter()
        .map(|&j| panel.theta_hat()[j] - k * sigma[j] / sqrt_n)
        .fold(f64::NEG_INFINITY, f64::max);
    let quantile_used = QuantileEstimate { level: 1.0 - alpha, value: k, b: dv.nrows() };
    Ok((MaxEffectLower { value, quantile_used }, set))
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CovCompareResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub pairs_tested: usize,
    /// Set when the sample sizes are badly unbalanced (ratio above 4).
    pub size_ratio_warning: bool,
}

fn centered_products(x: &DataMatrix, pairs: &[(usize, usize)]) -> Array2<f64> {
    let v = x.values();
    let means = col_means(&v.view());
    let mut a = Array2::zeros((x.n(), pairs.len()));
    for (idx, &(j, k)) in pairs.iter().enumerate() {
        for i in 0..x.n() {
            a[[i, idx]] = (v[[i, j]] - means[j]) * (v[[i, k]] - means[k]);
        }
    }
    a
}

/// Two-sample max-type test of equal covariance matrices. Per pair j <= k,
/// t_jk = (Sigma1_jk - Sigma2_jk) / sqrt(s1_jk/n + s2_jk/m) with s the
/// empirical variances of the centered products; the critical value is the
/// (1-alpha)-quantile of the multiplier-bootstrap analog, one shared normal
/// weight vector of length n+m per replicate split between the samples.
pub fn cov_compare_test(
    x: &DataMatrix,
    y: &DataMatrix,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<CovCompareResult> {
    if x.p() != y.p() {
        return Err(Error::InvalidData(format!(
            "samples have different dimensions: {} vs {}",
            x.p(),
            y.p()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if b == 0 {
        return Err(Error::InvalidData("B must be positive".into()));
    }
    let p = x.p();
    let (n, m) = (x.n(), y.n());
    let (nf, mf) = (n as f64, m as f64);
    let pairs: Vec<(usize, usize)> =
        (0..p).flat_map(|j| (j..p).map(move |k| (j, k))).collect();

    let a1 = centered_products(x, &pairs);
    let a2 = centered_products(y, &pairs);
    let s1 = col_means(&a1.view());
    let s2 = col_means(&a2.view());
    let v1 = col_variances(&a1.view());
    let v2 = col_variances(&a2.view());
    let q1 = col_second_moments(&a1.view());
    let q2 = col_second_moments(&a2.view());
    let mut denom = Array1::zeros(pairs.len());
    for (idx, &(j, k)) in pairs.iter().enumerate() {
        let d = v1[idx] / nf + v2[idx] / mf;
        let both_flat =
            negligible_variance(v1[idx], q1[idx]) && negligible_variance(v2[idx], q2[idx]);
        if both_flat || !(d > 0.0) {
            return Err(Error::DegeneratePair { j, k });
        }
        denom[idx] = d.sqrt();
    }
    let tstat: Vec<f64> =
        s1.iter().zip(s2.iter()).zip(denom.iter()).map(|((a, b2), d)| (a - b2) / d).collect();
    let statistic = max_stat(&tstat, MaxMode::MaxAbs)?;

    let a1c = &a1 - &s1.view().insert_axis(Axis(0));
    let a2c = &a2 - &s2.view().insert_axis(Axis(0));
    let denom_row = denom.view().insert_axis(Axis(0));
    let nchunks = b.div_ceil(CHUNK);
    let tmax: Vec<Vec<f64>> = (0..nchunks)
        .into_par_iter()
        .map(|ci| {
            let start = ci * CHUNK;
            let rows = CHUNK.min(b - start);
            let mut w1 = Array2::<f64>::zeros((rows, n));
            let mut w2 = Array2::<f64>::zeros((rows, m));
            for r in 0..rows {
                let mut rng = stream_rng(seed, (start + r) as u64);
                for v in w1.row_mut(r).iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for v in w2.row_mut(r).iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            let mut g = w1.dot(&a1c);
            g /= nf;
            let mut g2 = w2.dot(&a2c);
            g2 /= mf;
            g -= &g2;
            g /= &denom_row;
            g.rows()
                .into_iter()
                .map(|row| {
                    max_stat(row.as_slice().expect("contiguous"), MaxMode::MaxAbs)
                        .expect("pairs nonempty")
                })
                .collect()
        })
        .collect();
    let critical_value = order_stat(&tmax.concat(), 1.0 - alpha);

    Ok(CovCompareResult {
        statistic,
        critical_value,
        reject: statistic > critical_value,
        pairs_tested: pairs.len(),
        size_ratio_warning: n.max(m) > 4 * n.min(m),
    })
}
