//! Gaussian reference draws for possibly singular covariances, the rate
//! functionals used as references in experiments, and anticoncentration and
//! comparison bound checks for Gaussian maxima.

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Axis};
use rand::RngExt;
use rand_distr::StandardNormal;

use crate::bootstrap::CHUNK;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{CovMatrix, MaxMode, RateInputs};

/// Rank-revealing root F (p x r) of a PSD matrix, F Fᵀ = S.
#[derive(Debug, Clone)]
pub struct PSDFactor {
    factor: Array2<f64>,
    rank: usize,
}

impl PSDFactor {
    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn p(&self) -> usize {
        self.factor.nrows()
    }
}

/// Pivoted Cholesky with pivots below 1e-10 times the largest diagonal entry
/// truncated; singular input yields rank < p rather than an error.
pub fn psd_factor(s: &CovMatrix) -> Result<PSDFactor> {
    let p = s.p();
    let mut a = s.entries().to_owned();
    let buf = a.as_slice_mut().expect("owned matrix is standard layout");
    let mut piv: Vec<usize> = (0..p).collect();
    let scale = (0..p).map(|j| buf[j * p + j]).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let tol = 1e-10 * scale;
    let mut rank = 0usize;

    for k in 0..p {
        let mut jmax = k;
        let mut dmax = f64::NEG_INFINITY;
        let mut dmin = f64::INFINITY;
        for j in k..p {
            let d = buf[j * p + j];
            if d > dmax {
                dmax = d;
                jmax = j;
            }
            dmin = dmin.min(d);
        }
        if dmin < -tol {
            return Err(Error::Indefinite { pivot: dmin });
        }
        if dmax <= tol {
            break;
        }
        if jmax != k {
            for c in 0..p {
                buf.swap(k * p + c, jmax * p + c);
            }
            for r in 0..p {
                buf.swap(r * p + k, r * p + jmax);
            }
            piv.swap(k, jmax);
        }
        let root = dmax.sqrt();
        buf[k * p + k] = root;
        for i in (k + 1)..p {
            buf[i * p + k] /= root;
        }
        // rank-1 downdate of the full trailing block keeps it symmetric, so
        // later pivot swaps stay valid
        let colk: Vec<f64> = ((k + 1)..p).map(|i| buf[i * p + k]).collect();
        for (ii, &aik) in colk.iter().enumerate() {
            let i = k + 1 + ii;
            let row = &mut buf[i * p + k + 1..i * p + p];
            for (jj, &ajk) in colk.iter().enumerate() {
                row[jj] -= aik * ajk;
            }
        }
        rank += 1;
    }

    let mut factor = Array2::zeros((p, rank));
    for i in 0..p {
        let out_row = piv[i];
        for j in 0..rank.min(i + 1) {
            factor[[out_row, j]] = buf[i * p + j];
        }
    }
    Ok(PSDFactor { factor, rank })
}

fn standard_normal_block(rows: usize, r: usize, seed: u64, first_stream: usize) -> Array2<f64> {
    let mut z = Array2::zeros((rows, r));
    for (row_i, mut zrow) in z.rows_mut().into_iter().enumerate() {
        let mut rng = stream_rng(seed, (first_stream + row_i) as u64);
        for v in zrow.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
    z
}

/// B i.i.d. draws from N(0, S) as rows, draw b from RNG stream b.
pub fn gaussian_draws(s: &CovMatrix, b: usize, seed: u64) -> Result<Array2<f64>> {
    if b == 0 {
        return Err(Error::InvalidData("B must be positive".into()));
    }
    let f = psd_factor(s)?;
    let ft = f.factor.t();
    let mut out = Array2::zeros((b, f.p()));
    out.axis_chunks_iter_mut(Axis(0), CHUNK)
        .into_par_iter()
        .enumerate()
        .for_each(|(ci, mut chunk)| {
            let z = standard_normal_block(chunk.nrows(), f.rank, seed, ci * CHUNK);
            chunk.assign(&z.dot(&ft));
        });
    Ok(out)
}

/// Max statistics of B draws from N(0, S), generated chunk-wise so the B x p
/// matrix is never materialized. Stream convention matches gaussian_draws, so
/// these equal the row-wise max statistics of that matrix.
pub fn gaussian_max_draws(s: &CovMatrix, b: usize, seed: u64, mode: MaxMode) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(Error::InvalidData("B must be positive".into()));
    }
    let f = psd_factor(s)?;
    let ft = f.factor.t();
    let nchunks = b.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..nchunks)
        .into_par_iter()
        .map(|ci| {
            let start = ci * CHUNK;
            let rows = CHUNK.min(b - start);
            let z = standard_normal_block(rows, f.rank, seed, start);
            let d = z.dot(&ft);
            d.rows()
                .into_iter()
                .map(|row| match mode {
                    MaxMode::Max => row.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    MaxMode::MaxAbs => row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.abs())),
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Upper bound delta*(sqrt(2 ln p)+2)/sigma_lo on the probability that the
/// max of a centered Gaussian vector with coordinate variances >= sigma_lo^2
/// lands in any interval of length delta.
pub fn nazarov_bound(p: usize, sigma_lo: f64, delta: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidData("dimension must be at least 2".into()));
    }
    if !(sigma_lo > 0.0 && sigma_lo.is_finite()) {
        return Err(Error::InvalidData(format!(
            "sigma_lo must be positive and finite, got {sigma_lo}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidData(format!(
            "interval length must be nonnegative and finite, got {delta}"
        )));
    }
    Ok(delta * ((2.0 * (p as f64).ln()).sqrt() + 2.0) / sigma_lo)
}

/// Shape sqrt(Δ)·ln(p) of the Gaussian comparison bound, Δ the largest
/// entrywise gap between the two covariances. The unknown multiplicative
/// constant is omitted; callers fit it empirically. `p` is passed as a real
/// so rate studies can probe the shape directly.
pub fn comparison_scale(s1: &CovMatrix, s2: &CovMatrix, p: f64) -> Result<f64> {
    if s1.p() != s2.p() {
        return Err(Error::InvalidData(format!(
            "covariance dimensions differ: {} vs {}",
            s1.p(),
            s2.p()
        )));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidData(format!(
            "effective dimension must be finite and at least 1, got {p}"
        )));
    }
    let delta = s1
        .entries()
        .iter()
        .zip(s2.entries().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(delta.sqrt() * p.ln())
}

/// (B_n^2 ln^5(pn) / n)^(1/4), natural log.
pub fn rate_delta1(r: &RateInputs, n: usize, p: usize) -> Result<f64> {
    if n < 2 || p < 2 {
        return Err(Error::InvalidData("need n >= 2 and p >= 2".into()));
    }
    let ln_pn = (p as f64 * n as f64).ln();
    let b = r.b_n();
    Ok((b * b * ln_pn.powi(5) / n as f64).powf(0.25))
}

/// sqrt(B_n^2 ln(pn)^(3-2/q) / n^(1-2/q)), natural log; requires q > 2.
pub fn rate_delta2(r: &RateInputs, n: usize, p: usize) -> Result<f64> {
    if n < 2 || p < 2 {
        return Err(Error::InvalidData("need n >= 2 and p >= 2".into()));
    }
    let q = r
        .q()
        .ok_or_else(|| Error::Config("the polynomial-moment rate needs q".into()))?;
    let ln_pn = (p as f64 * n as f64).ln();
    let b = r.b_n();
    Ok((b * b * ln_pn.powf(3.0 - 2.0 / q) / (n as f64).powf(1.0 - 2.0 / q)).sqrt())
}

#[derive(Debug, Clone, Copy)]
pub struct AnticoncentrationRow {
    pub t: f64,
    pub mass: f64,
    pub bound: f64,
    pub se: f64,
    pub violation: bool,
}

/// Per-grid-point interval masses of the Gaussian max against the analytic
/// bound; `violation` marks mass above bound + 4 binomial standard errors.
#[derive(Debug, Clone)]
pub struct AnticoncentrationReport {
    pub delta: f64,
    pub sigma_lo: f64,
    pub b: usize,
    pub rows: Vec<AnticoncentrationRow>,
}

impl AnticoncentrationReport {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violation)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mass,bound,se,violation-flag\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.t,
                r.mass,
                r.bound,
                r.se,
                u8::from(r.violation)
            ));
        }
        out
    }
}

/// Empirical mass of the N(0,S) max in each (t, t+delta] from B draws,
/// paired with the anticoncentration bound at the smallest diagonal sd.
pub fn anticoncentration_check(
    s: &CovMatrix,
    delta: f64,
    grid: &[f64],
    b: usize,
    seed: u64,
) -> Result<AnticoncentrationReport> {
    if grid.is_empty() {
        return Err(Error::InvalidData("grid must be nonempty".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidData("grid points must be finite".into()));
    }
    let diag = s.diag();
    if let Some(index) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::DegenerateCoordinate { index });
    }
    let sigma_lo = diag.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
    let bound = nazarov_bound(s.p(), sigma_lo, delta)?;
    let maxima = gaussian_max_draws(s, b, seed, MaxMode::Max)?;
    let bf = b as f64;
    let rows = grid
        .iter()
        .map(|&t| {
            let count = maxima.iter().filter(|&&w| w > t && w <= t + delta).count();
            let mass = count as f64 / bf;
            let se = (mass * (1.0 - mass) / bf).sqrt();
            AnticoncentrationRow { t, mass, bound, se, violation: mass > bound + 4.0 * se }
        })
        .collect();
    Ok(AnticoncentrationReport { delta, sigma_lo, b, rows })
}
