//! Bootstrap replicates of the scaled sample mean under multiplier and
//! empirical resampling schemes, and conditional quantiles of their
//! max-statistic reductions.
//!
//! Replicate `b` always draws from RNG stream `b` under the caller's seed,
//! so draws are reproducible and independent of thread count.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{
    col_means, col_second_moments, col_variances, max_stat, negligible_variance, DataMatrix,
    MaxMode,
};

/// Rows processed per parallel task; replicate streams make the split invisible.
pub(crate) const CHUNK: usize = 128;

/// Resampling scheme. Multiplier weights all have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootstrapScheme {
    GaussianMultiplier,
    Empirical,
    MammenMultiplier,
    RademacherMultiplier,
}

impl BootstrapScheme {
    pub fn is_multiplier(&self) -> bool {
        !matches!(self, BootstrapScheme::Empirical)
    }

    pub fn name(&self) -> &'static str {
        match self {
            BootstrapScheme::GaussianMultiplier => "gaussian-multiplier",
            BootstrapScheme::Empirical => "empirical",
            BootstrapScheme::MammenMultiplier => "mammen-multiplier",
            BootstrapScheme::RademacherMultiplier => "rademacher-multiplier",
        }
    }
}

impl std::fmt::Display for BootstrapScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BootstrapScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-multiplier" => Ok(BootstrapScheme::GaussianMultiplier),
            "empirical" => Ok(BootstrapScheme::Empirical),
            "mammen-multiplier" => Ok(BootstrapScheme::MammenMultiplier),
            "rademacher-multiplier" => Ok(BootstrapScheme::RademacherMultiplier),
            other => Err(Error::Config(format!("unknown bootstrap scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Replicates {
    Vectors(Array2<f64>),
    Scalars(Vec<f64>),
}

/// B bootstrap replicates: vectors of length p, or scalars once reduced by a
/// max statistic. Regeneration with the same (data, scheme, seed, B) is
/// bit-identical.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    replicates: Replicates,
    scheme: BootstrapScheme,
    seed: u64,
    b: usize,
}

impl BootstrapDraws {
    /// Wraps precomputed replicate scalars (custom pipelines and tests).
    pub fn from_scalars(scalars: Vec<f64>, scheme: BootstrapScheme, seed: u64) -> Result<Self> {
        if scalars.is_empty() {
            return Err(Error::InvalidData("need at least one replicate".into()));
        }
        let b = scalars.len();
        Ok(Self { replicates: Replicates::Scalars(scalars), scheme, seed, b })
    }

    fn from_vectors(vectors: Array2<f64>, scheme: BootstrapScheme, seed: u64) -> Self {
        let b = vectors.nrows();
        Self { replicates: Replicates::Vectors(vectors), scheme, seed, b }
    }

    pub fn scheme(&self) -> BootstrapScheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// The B x p replicate matrix; errors if already reduced to scalars.
    pub fn vectors(&self) -> Result<ArrayView2<'_, f64>> {
        match &self.replicates {
            Replicates::Vectors(m) => Ok(m.view()),
            Replicates::Scalars(_) => {
                Err(Error::InvalidData("replicates already reduced to scalars".into()))
            }
        }
    }

    /// Replicate scalars; errors if the draws are still vector-valued.
    pub fn scalars(&self) -> Result<&[f64]> {
        match &self.replicates {
            Replicates::Scalars(v) => Ok(v),
            Replicates::Vectors(_) => Err(Error::InvalidData(
                "vector-valued replicates; reduce with a max statistic first".into(),
            )),
        }
    }

    /// Reduces each replicate vector to its max statistic.
    pub fn reduce(&self, mode: MaxMode) -> Result<BootstrapDraws> {
        let m = self.vectors()?;
        let scalars: Vec<f64> = m
            .rows()
            .into_iter()
            .map(|r| max_stat(r.as_slice().expect("replicates are row-contiguous"), mode))
            .collect::<Result<_>>()?;
        Ok(Self {
            replicates: Replicates::Scalars(scalars),
            scheme: self.scheme,
            seed: self.seed,
            b: self.b,
        })
    }
}

/// The conditional quantile of a reduced bootstrap law: the ceil(level*B)-th
/// order statistic of the replicate scalars.
#[derive(Debug, Clone, Copy)]
pub struct QuantileEstimate {
    pub level: f64,
    pub value: f64,
    pub b: usize,
}

/// 1-based order-statistic index ceil(level*b), with a snap tolerance that
/// absorbs binary rounding of level*b at intended integers.
pub(crate) fn ceil_index(level: f64, b: usize) -> usize {
    let t = level * b as f64;
    let nearest = t.round();
    let k = if (t - nearest).abs() < 1e-9 { nearest as usize } else { t.ceil() as usize };
    k.clamp(1, b)
}

pub(crate) fn order_stat(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted[ceil_index(level, sorted.len()) - 1]
}

fn fill_weights(scheme: BootstrapScheme, rng: &mut ChaCha12Rng, out: &mut [f64]) {
    match scheme {
        BootstrapScheme::GaussianMultiplier => {
            for w in out {
                *w = rng.sample(StandardNormal);
            }
        }
        BootstrapScheme::RademacherMultiplier => {
            for w in out {
                *w = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            }
        }
        BootstrapScheme::MammenMultiplier => {
            // two-point law with mean 0, variance 1, third moment 1
            let s5 = 5f64.sqrt();
            let lo = 0.5 * (1.0 - s5);
            let hi = 0.5 * (1.0 + s5);
            let p_lo = (1.0 + s5) / (2.0 * s5);
            for w in out {
                *w = if rng.random::<f64>() < p_lo { lo } else { hi };
            }
        }
        BootstrapScheme::Empirical => unreachable!("weights are only defined for multiplier schemes"),
    }
}

/// One i.i.d. weight vector from the scheme's law (stream 0 under `seed`;
/// replicate-level operations use stream b for replicate b).
pub fn gen_weights(scheme: BootstrapScheme, n: usize, seed: u64) -> Result<Array1<f64>> {
    if !scheme.is_multiplier() {
        return Err(Error::WrongScheme(format!(
            "{scheme} has no multiplier weights"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidData("weight vector length must be positive".into()));
    }
    let mut out = Array1::zeros(n);
    fill_weights(scheme, &mut stream_rng(seed, 0), out.as_slice_mut().unwrap());
    Ok(out)
}

/// One multiplier replicate from explicit weights: n^(-1/2) Σ w_i (x_i - mean).
/// Reference implementation the batched draws are checked against.
#[cfg(test)]
pub(crate) fn multiplier_replicate(centered: &ArrayView2<f64>, weights: &[f64]) -> Array1<f64> {
    let n = centered.nrows() as f64;
    let mut out = Array1::<f64>::zeros(centered.ncols());
    for (w, row) in weights.iter().zip(centered.rows()) {
        out.scaled_add(*w, &row);
    }
    out / n.sqrt()
}

/// B multiplier bootstrap replicates n^(-1/2) Σ ξ_i (X_i - mean(X)).
pub fn multiplier_draws(
    x: &DataMatrix,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    if !scheme.is_multiplier() {
        return Err(Error::WrongScheme(format!(
            "multiplier_draws needs a multiplier scheme, got {scheme}"
        )));
    }
    if b == 0 {
        return Err(Error::InvalidData("B must be positive".into()));
    }
    let n = x.n();
    let p = x.p();
    let means = col_means(&x.values().view());
    let centered = x.values() - &means.view().insert_axis(Axis(0));
    let sqrt_n = (n as f64).sqrt();

    let mut out = Array2::<f64>::zeros((b, p));
    out.axis_chunks_iter_mut(Axis(0), CHUNK)
        .into_par_iter()
        .enumerate()
        .for_each(|(ci, mut chunk)| {
            let rows = chunk.nrows();
            let mut weights = Array2::<f64>::zeros((rows, n));
            for (r, mut wrow) in weights.rows_mut().into_iter().enumerate() {
                let stream = (ci * CHUNK + r) as u64;
                fill_weights(scheme, &mut stream_rng(seed, stream), wrow.as_slice_mut().unwrap());
            }
            let mut product = weights.dot(&centered);
            product /= sqrt_n;
            chunk.assign(&product);
        });
    Ok(BootstrapDraws::from_vectors(out, scheme, seed))
}

/// B empirical bootstrap replicates n^(-1/2) Σ (X^B_i - mean(X)); the
/// recentering uses the original sample mean, not the resample mean.
pub fn empirical_draws(x: &DataMatrix, b: usize, seed: u64) -> Result<BootstrapDraws> {
    if b == 0 {
        return Err(Error::InvalidData("B must be positive".into()));
    }
    let n = x.n();
    let p = x.p();
    let values = x.values();
    let means = col_means(&values.view());
    let sqrt_n = (n as f64).sqrt();

    let mut out = Array2::<f64>::zeros((b, p));
    out.axis_chunks_iter_mut(Axis(0), CHUNK)
        .into_par_iter()
        .enumerate()
        .for_each(|(ci, mut chunk)| {
            for (r, mut row) in chunk.rows_mut().into_iter().enumerate() {
                let stream = (ci * CHUNK + r) as u64;
                let mut rng = stream_rng(seed, stream);
                let mut acc = Array1::<f64>::zeros(p);
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    acc += &values.row(i);
                }
                acc /= sqrt_n;
                acc.scaled_add(-sqrt_n, &means);
                row.assign(&acc);
            }
        });
    Ok(BootstrapDraws::from_vectors(out, BootstrapScheme::Empirical, seed))
}

/// Studentized replicates: each raw replicate divided coordinate-wise by the
/// standard deviations from the original data's empirical covariance.
pub fn studentized_draws(
    x: &DataMatrix,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    let vars = col_variances(&x.values().view());
    let m2 = col_second_moments(&x.values().view());
    if let Some(index) =
        vars.iter().zip(m2.iter()).position(|(v, s)| negligible_variance(*v, *s))
    {
        return Err(Error::DegenerateCoordinate { index });
    }
    let raw = match scheme {
        BootstrapScheme::Empirical => empirical_draws(x, b, seed)?,
        _ => multiplier_draws(x, scheme, b, seed)?,
    };
    let sd = vars.mapv(f64::sqrt);
    let mut m = match raw.replicates {
        Replicates::Vectors(m) => m,
        Replicates::Scalars(_) => unreachable!("draw constructors produce vectors"),
    };
    m /= &sd.view().insert_axis(Axis(0));
    Ok(BootstrapDraws::from_vectors(m, scheme, seed))
}

/// The ceil(level*B)-th order statistic of the replicate scalars: the
/// right-continuous generalized inverse of the bootstrap ECDF.
pub fn conditional_quantile(draws: &BootstrapDraws, level: f64) -> Result<QuantileEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidData(format!("quantile level must lie in (0,1), got {level}")));
    }
    let scalars = draws.scalars()?;
    Ok(QuantileEstimate { level, value: order_stat(scalars, level), b: draws.b() })
}
