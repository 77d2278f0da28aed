//! Data model, moments, studentization, max statistics, and the empirical
//! distribution distance used to compare bootstrap laws.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An n x p matrix of observations, rows independent. Entries are finite and
/// n >= 2, p >= 2 by construction.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        if n < 2 || p < 2 {
            return Err(Error::InvalidData(format!(
                "data matrix must be at least 2 x 2, got {n} x {p}"
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData("data matrix has nonfinite entries".into()));
        }
        Ok(Self { values })
    }

    /// CSV with a header row and all-numeric columns, one observation per row.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let (_, rows) = read_numeric_csv(path)?;
        Self::from_rows(&rows)
    }

    /// Convenience constructor from row vectors; rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((n, p), flat)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// A symmetric p x p covariance matrix; may be singular. Symmetry and
/// finiteness are checked at construction; positive semidefiniteness is
/// enforced where the matrix is factored (see `gaussian::psd_factor`).
#[derive(Debug, Clone)]
pub struct CovMatrix {
    entries: Array2<f64>,
}

impl CovMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidData(format!(
                "covariance must be square and nonempty, got {r} x {c}"
            )));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData("covariance has nonfinite entries".into()));
        }
        let scale = entries.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..r {
            for j in (i + 1)..r {
                if (entries[[i, j]] - entries[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidData(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn identity(p: usize) -> Self {
        Self { entries: Array2::eye(p) }
    }

    /// Equicorrelated matrix: 1 on the diagonal, `rho` off it. Requires
    /// 0 <= rho < 1 so the matrix stays positive semidefinite for every p.
    pub fn equicorrelated(p: usize, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidData(format!(
                "equicorrelated rho must lie in [0, 1), got {rho}"
            )));
        }
        let mut entries = Array2::from_elem((p, p), rho);
        entries.diag_mut().fill(1.0);
        Ok(Self { entries })
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn diag(&self) -> Array1<f64> {
        self.entries.diag().to_owned()
    }
}

/// Inputs to the convergence-rate functionals: an envelope constant, an
/// optional moment order, and bounds on coordinate standard deviations.
#[derive(Debug, Clone, Copy)]
pub struct RateInputs {
    b_n: f64,
    q: Option<f64>,
    sigma_lo: f64,
    sigma_hi: f64,
}

impl RateInputs {
    pub fn new(b_n: f64, q: Option<f64>, sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(b_n.is_finite() && b_n >= 1.0) {
            return Err(Error::InvalidData(format!("B_n must be >= 1, got {b_n}")));
        }
        if let Some(q) = q {
            if !(q.is_finite() && q > 2.0) {
                return Err(Error::InvalidData(format!("q must exceed 2, got {q}")));
            }
        }
        if !(sigma_lo.is_finite() && sigma_lo > 0.0) {
            return Err(Error::InvalidData(format!("sigma_lo must be positive, got {sigma_lo}")));
        }
        if !(sigma_hi.is_finite() && sigma_hi >= sigma_lo) {
            return Err(Error::InvalidData(format!(
                "sigma_hi must be >= sigma_lo, got {sigma_hi} < {sigma_lo}"
            )));
        }
        Ok(Self { b_n, q, sigma_lo, sigma_hi })
    }

    pub fn b_n(&self) -> f64 {
        self.b_n
    }

    pub fn q(&self) -> Option<f64> {
        self.q
    }

    pub fn sigma_lo(&self) -> f64 {
        self.sigma_lo
    }

    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi
    }
}

/// A closed axis-aligned rectangle in R^p; endpoints may be infinite.
#[derive(Debug, Clone)]
pub struct Rectangle {
    lower: Array1<f64>,
    upper: Array1<f64>,
}

impl Rectangle {
    pub fn new(lower: Array1<f64>, upper: Array1<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidData("rectangle bounds must share a positive length".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidData(format!("rectangle bound {j} is NaN")));
            }
            if lo > hi {
                return Err(Error::InvalidData(format!(
                    "rectangle bound {j} inverted: {lo} > {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &Array1<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &Array1<f64> {
        &self.upper
    }

    /// Closed membership test; `x` must have the rectangle's dimension.
    pub fn contains(&self, x: &[f64]) -> bool {
        assert_eq!(x.len(), self.lower.len(), "dimension mismatch");
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Scaled sample mean `S_n = n^(-1/2)` times the column sums.
pub fn scaled_mean(x: &DataMatrix) -> Array1<f64> {
    let n = x.n() as f64;
    x.values().sum_axis(Axis(0)) / n.sqrt()
}

/// Centered second-moment matrix with 1/n normalization (not 1/(n-1)).
pub fn empirical_covariance(x: &DataMatrix) -> Result<CovMatrix> {
    let n = x.n() as f64;
    let means = col_means(&x.values().view());
    let centered = x.values() - &means.view().insert_axis(Axis(0));
    let mut s = centered.t().dot(&centered) / n;
    // gemm rounding can leave the product asymmetric in the last bit
    let st = s.t().to_owned();
    s += &st;
    s *= 0.5;
    CovMatrix::new(s)
}

/// Divides each coordinate by the square root of its variance entry.
pub fn studentize(v: &Array1<f64>, diag: &Array1<f64>) -> Result<Array1<f64>> {
    if v.len() != diag.len() {
        return Err(Error::InvalidData(format!(
            "studentize length mismatch: {} vs {}",
            v.len(),
            diag.len()
        )));
    }
    for (index, d) in diag.iter().enumerate() {
        if !(*d > 0.0) {
            return Err(Error::DegenerateCoordinate { index });
        }
    }
    Ok(v.iter().zip(diag.iter()).map(|(x, d)| x / d.sqrt()).collect())
}

/// Reduction applied to a replicate vector before taking quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxMode {
    /// Plain coordinate maximum, for one-sided statistics.
    Max,
    /// Maximum absolute coordinate, the sup norm.
    MaxAbs,
}

/// Coordinate maximum or maximum absolute value; errors on empty input.
pub fn max_stat(v: &[f64], mode: MaxMode) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidData("max_stat on empty vector".into()));
    }
    let it = v.iter();
    Ok(match mode {
        MaxMode::Max => it.fold(f64::NEG_INFINITY, |m, x| m.max(*x)),
        MaxMode::MaxAbs => it.fold(0.0, |m: f64, x| m.max(x.abs())),
    })
}

/// Two-sample Kolmogorov-Smirnov distance, evaluated at pooled sample points
/// (exact for step functions). Both ECDFs are right-continuous.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidData("ks_distance requires nonempty samples".into()));
    }
    if !(a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidData("ks_distance requires finite samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    y.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < x.len() || j < y.len() {
        let t = match (x.get(i), y.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Reads a CSV with a mandatory header row into (header, numeric rows).
pub(crate) fn read_numeric_csv(path: &std::path::Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> =
        reader.headers().map_err(|e| Error::InvalidData(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidData(e.to_string()))?;
        let row: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}, column {}: '{}' is not a number",
                        i + 2,
                        j + 1,
                        field
                    ))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{} has no data rows", path.display())));
    }
    Ok((header, rows))
}

pub(crate) fn col_means(x: &ArrayView2<f64>) -> Array1<f64> {
    x.sum_axis(Axis(0)) / x.nrows() as f64
}

/// Column variances with the same 1/n normalization as `empirical_covariance`.
pub(crate) fn col_variances(x: &ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    let means = col_means(x);
    let mut acc = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        for (a, (v, m)) in acc.iter_mut().zip(row.iter().zip(means.iter())) {
            let d = v - m;
            *a += d * d;
        }
    }
    acc / n
}

pub(crate) fn col_second_moments(x: &ArrayView2<f64>) -> Array1<f64> {
    x.map_axis(Axis(0), |c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64)
}

/// True when a variance is zero up to the cancellation noise of the second
/// moment it was computed from. A column constant at a value without an exact
/// binary representation leaves ~1e-32 of centering residue, which must count
/// as degenerate rather than feed a studentization denominator.
pub(crate) fn negligible_variance(variance: f64, second_moment: f64) -> bool {
    variance <= 1e-24 * second_moment
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn data_matrix_rejects_small_and_nonfinite() {
        assert!(DataMatrix::new(array![[1.0, 2.0]]).is_err(), "n=1 must be rejected");
        assert!(DataMatrix::new(array![[1.0], [2.0]]).is_err(), "p=1 must be rejected");
        assert!(DataMatrix::new(array![[1.0, f64::NAN], [0.0, 1.0]]).is_err());
        assert!(DataMatrix::new(array![[1.0, f64::INFINITY], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn cov_matrix_rejects_asymmetry() {
        let bad = array![[1.0, 0.5], [0.4, 1.0]];
        assert!(CovMatrix::new(bad).is_err());
        let ok = array![[1.0, 0.5], [0.5, 1.0]];
        assert!(CovMatrix::new(ok).is_ok());
    }

    #[test]
    fn equicorrelated_range_checked() {
        assert!(CovMatrix::equicorrelated(3, 1.0).is_err());
        assert!(CovMatrix::equicorrelated(3, -0.1).is_err());
        let s = CovMatrix::equicorrelated(3, 0.5).unwrap();
        assert_eq!(s.entries()[[0, 1]], 0.5);
        assert_eq!(s.entries()[[2, 2]], 1.0);
    }

    #[test]
    fn scaled_mean_is_linear() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let y = DataMatrix::from_rows(&[vec![0.5, 0.5], vec![1.5, -1.0], vec![0.0, 0.0]]).unwrap();
        let sum = DataMatrix::new(x.values() + y.values()).unwrap();
        let lhs = scaled_mean(&sum);
        let rhs = scaled_mean(&x) + scaled_mean(&y);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn studentize_errors_name_the_coordinate() {
        let v = array![1.0, 2.0, 3.0];
        let diag = array![1.0, 0.0, 4.0];
        match studentize(&v, &diag) {
            Err(Error::DegenerateCoordinate { index }) => assert_eq!(index, 1),
            other => panic!("expected degenerate coordinate error, got {other:?}"),
        }
    }

    #[test]
    fn max_stat_empty_errors() {
        assert!(max_stat(&[], MaxMode::Max).is_err());
    }

    #[test]
    fn ks_distance_metric_axioms_on_fixed_triples() {
        let a = [0.0, 1.0, 2.0];
        let b = [0.5, 1.5, 2.5];
        let c = [0.2, 0.9, 3.0];
        let dab = ks_distance(&a, &b).unwrap();
        let dba = ks_distance(&b, &a).unwrap();
        assert_eq!(dab, dba, "symmetry");
        assert_eq!(ks_distance(&a, &a).unwrap(), 0.0, "identity");
        let dac = ks_distance(&a, &c).unwrap();
        let dcb = ks_distance(&c, &b).unwrap();
        assert!(dab <= dac + dcb + 1e-15, "triangle inequality");
    }

    #[test]
    fn rectangle_contains_respects_closed_bounds() {
        let r = Rectangle::new(array![0.0, f64::NEG_INFINITY], array![1.0, 0.0]).unwrap();
        assert!(r.contains(&[0.0, -5.0]));
        assert!(r.contains(&[1.0, 0.0]));
        assert!(!r.contains(&[1.1, 0.0]));
        assert!(Rectangle::new(array![1.0], array![0.0]).is_err(), "inverted bounds");
    }

    #[test]
    fn col_variances_match_covariance_diagonal() {
        let x = DataMatrix::from_rows(&[
            vec![1.0, -2.0, 0.3],
            vec![0.0, 4.0, 0.1],
            vec![2.5, 1.0, -0.7],
            vec![-1.0, 0.5, 0.9],
        ])
        .unwrap();
        let cov = empirical_covariance(&x).unwrap();
        let vars = col_variances(&x.values().view());
        for (a, b) in cov.diag().iter().zip(vars.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
