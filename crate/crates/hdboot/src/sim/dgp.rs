//! Scenario data generators. Each sampler is a pure function of
//! (config, scenario seed, replication index), so experiments are
//! reproducible no matter how replications are scheduled.

use ndarray::Array2;
use rand::RngExt;
use rand_distr::{Exp1, StandardNormal, StudentT};

use crate::error::Result;
use crate::rng::{mix, stream_rng};
use crate::sim::config::DgpConfig;
use crate::stats::{CovMatrix, DataMatrix};

/// Seed-derivation tags. Fixed designs, data draws, and bootstrap draws
/// live in disjoint key spaces so no stream is ever reused across roles.
pub const TAG_Z: u64 = 1;
pub const TAG_DATA: u64 = 2;
pub const TAG_BOOT: u64 = 3;

#[derive(Debug, Clone)]
pub struct DgpSampler {
    cfg: DgpConfig,
    n: usize,
    p: usize,
    seed: u64,
    /// Fixed regression design, drawn once per scenario (figure1 mode only).
    z: Option<Array2<f64>>,
}

impl DgpSampler {
    pub fn new(cfg: &DgpConfig, n: usize, p: usize, seed: u64) -> Result<Self> {
        cfg.validate(p)?;
        let z = match cfg {
            DgpConfig::Figure1Regression => {
                let mut rng = stream_rng(mix(seed, TAG_Z), 0);
                let mut z = Array2::zeros((n, p));
                for v in z.iter_mut() {
                    *v = rng.random::<f64>();
                }
                Some(z)
            }
            _ => None,
        };
        Ok(Self { cfg: *cfg, n, p, seed, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn design(&self) -> Option<&Array2<f64>> {
        self.z.as_ref()
    }

    /// Seed for bootstrap draws inside replication `rep`, disjoint from the
    /// data streams.
    pub fn bootstrap_seed(&self, rep: u64) -> u64 {
        mix(mix(self.seed, TAG_BOOT), rep)
    }

    /// The covariance of the scaled column sums. Singular for duplicated
    /// coordinates; for the fixed-design DGP it is the design Gram matrix
    /// over n.
    pub fn population_covariance(&self) -> CovMatrix {
        let sigma = match self.cfg {
            DgpConfig::Figure1Regression => {
                let z = self.z.as_ref().expect("figure1 stores its design");
                let gram = z.t().dot(z) / self.n as f64;
                (&gram + &gram.t()) / 2.0
            }
            DgpConfig::GaussianEquicorrelated { rho } => {
                return CovMatrix::equicorrelated(self.p, rho).expect("rho validated");
            }
            DgpConfig::HeavyTailT { .. } => return CovMatrix::identity(self.p),
            DgpConfig::DuplicatedCoordinates { k } => Array2::from_shape_fn(
                (self.p, self.p),
                |(j, l)| if j % k == l % k { 1.0 } else { 0.0 },
            ),
            DgpConfig::VarianceDecay { a } => Array2::from_diag(
                &(1..=self.p).map(|j| (j as f64).powf(-a)).collect::<ndarray::Array1<f64>>(),
            ),
        };
        CovMatrix::new(sigma).expect("constructed covariances are symmetric")
    }

    /// One dataset for replication `rep`.
    pub fn draw(&self, rep: u64) -> DataMatrix {
        let mut rng = stream_rng(mix(self.seed, TAG_DATA), rep);
        let (n, p) = (self.n, self.p);
        let values = match self.cfg {
            DgpConfig::Figure1Regression => {
                let z = self.z.as_ref().expect("figure1 stores its design");
                let mut x = Array2::zeros((n, p));
                for i in 0..n {
                    let eps: f64 = rng.sample::<f64, _>(Exp1) - 1.0;
                    for j in 0..p {
                        x[[i, j]] = z[[i, j]] * eps;
                    }
                }
                x
            }
            DgpConfig::GaussianEquicorrelated { rho } => {
                let (sc, sz) = (rho.sqrt(), (1.0 - rho).sqrt());
                let mut x = Array2::zeros((n, p));
                for i in 0..n {
                    let common: f64 = rng.sample(StandardNormal);
                    for j in 0..p {
                        let own: f64 = rng.sample(StandardNormal);
                        x[[i, j]] = sc * common + sz * own;
                    }
                }
                x
            }
            DgpConfig::HeavyTailT { df } => {
                let t = StudentT::new(df).expect("df validated");
                let scale = ((df - 2.0) / df).sqrt();
                let mut x = Array2::zeros((n, p));
                for v in x.iter_mut() {
                    *v = scale * rng.sample::<f64, _>(t);
                }
                x
            }
            DgpConfig::DuplicatedCoordinates { k } => {
                let mut base = Array2::zeros((n, k));
                for v in base.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                Array2::from_shape_fn((n, p), |(i, j)| base[[i, j % k]])
            }
            DgpConfig::VarianceDecay { a } => {
                let sd: Vec<f64> = (1..=p).map(|j| (j as f64).powf(-a / 2.0)).collect();
                let mut x = Array2::zeros((n, p));
                for i in 0..n {
                    for j in 0..p {
                        x[[i, j]] = sd[j] * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                x
            }
        };
        DataMatrix::new(values).expect("generated draws are finite and n, p >= 2")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::empirical_covariance;
    use approx::assert_relative_eq;

    #[test]
    fn draws_are_reproducible_and_rep_indexed() {
        let cfg = DgpConfig::HeavyTailT { df: 5.0 };
        let s1 = DgpSampler::new(&cfg, 20, 4, 9).unwrap();
        let s2 = DgpSampler::new(&cfg, 20, 4, 9).unwrap();
        assert_eq!(s1.draw(3).values(), s2.draw(3).values());
        assert_ne!(s1.draw(3).values(), s1.draw(4).values());
        assert_ne!(s1.bootstrap_seed(3), s1.bootstrap_seed(4));
    }

    #[test]
    fn figure1_design_is_fixed_and_rows_share_their_noise() {
        let cfg = DgpConfig::Figure1Regression;
        let s = DgpSampler::new(&cfg, 15, 6, 2).unwrap();
        let z = s.design().unwrap().clone();
        assert!(z.iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(s.design().unwrap(), DgpSampler::new(&cfg, 15, 6, 2).unwrap().design().unwrap());

        // x_ij / z_ij is the per-row noise, constant across the row; with
        // the noise forced to its mean the columns vanish exactly
        let x = s.draw(0);
        for i in 0..15 {
            let eps = x.values()[[i, 0]] / z[[i, 0]];
            for j in 0..6 {
                assert_relative_eq!(x.values()[[i, j]], z[[i, j]] * eps, epsilon = 1e-12);
                assert_eq!(z[[i, j]] * 0.0, 0.0);
            }
        }
    }

    #[test]
    fn duplicated_columns_are_identical_in_every_draw() {
        let cfg = DgpConfig::DuplicatedCoordinates { k: 2 };
        let s = DgpSampler::new(&cfg, 10, 6, 5).unwrap();
        for rep in 0..3 {
            let x = s.draw(rep);
            for j in 0..6 {
                assert_eq!(x.values().column(j), x.values().column(j % 2));
            }
        }
        let sigma = s.population_covariance();
        assert_eq!(sigma.entries()[[0, 2]], 1.0);
        assert_eq!(sigma.entries()[[0, 1]], 0.0);
    }

    #[test]
    fn independent_case_has_vanishing_cross_correlation() {
        let cfg = DgpConfig::GaussianEquicorrelated { rho: 0.0 };
        let s = DgpSampler::new(&cfg, 10_000, 3, 11).unwrap();
        let x = s.draw(0);
        let cov = empirical_covariance(&x).unwrap();
        // 5 MC SE for a correlation estimate at n = 1e4
        let band = 5.0 / (10_000f64).sqrt();
        for j in 0..3 {
            for k in 0..3 {
                if j != k {
                    assert!(cov.entries()[[j, k]].abs() < band, "corr {j},{k}");
                }
            }
        }
    }

    #[test]
    fn equicorrelated_matches_its_population_covariance() {
        let cfg = DgpConfig::GaussianEquicorrelated { rho: 0.5 };
        let s = DgpSampler::new(&cfg, 20_000, 3, 13).unwrap();
        let cov = empirical_covariance(&s.draw(0)).unwrap();
        let pop = s.population_covariance();
        for j in 0..3 {
            for k in 0..3 {
                assert_relative_eq!(
                    cov.entries()[[j, k]],
                    pop.entries()[[j, k]],
                    epsilon = 0.05
                );
            }
        }
    }

    #[test]
    fn heavy_tail_is_rescaled_to_unit_variance() {
        let cfg = DgpConfig::HeavyTailT { df: 5.0 };
        let s = DgpSampler::new(&cfg, 40_000, 2, 17).unwrap();
        let cov = empirical_covariance(&s.draw(0)).unwrap();
        // t_5 has kurtosis 9, so the variance estimate is noisy; 5 SE band
        assert_relative_eq!(cov.entries()[[0, 0]], 1.0, epsilon = 0.08);
        assert!(cov.entries()[[0, 1]].abs() < 0.05);
    }

    #[test]
    fn variance_decay_follows_the_power_law() {
        let cfg = DgpConfig::VarianceDecay { a: 1.0 };
        let s = DgpSampler::new(&cfg, 50_000, 4, 19).unwrap();
        let cov = empirical_covariance(&s.draw(0)).unwrap();
        for j in 0..4 {
            let want = 1.0 / (j as f64 + 1.0);
            assert_relative_eq!(cov.entries()[[j, j]], want, max_relative = 0.1);
        }
        let pop = s.population_covariance();
        assert_eq!(pop.entries()[[2, 2]], 3f64.powf(-1.0));
        assert_eq!(pop.entries()[[0, 1]], 0.0);
    }

    #[test]
    fn figure1_population_covariance_is_the_design_gram() {
        let cfg = DgpConfig::Figure1Regression;
        let s = DgpSampler::new(&cfg, 8, 3, 23).unwrap();
        let z = s.design().unwrap();
        let pop = s.population_covariance();
        let mut want = 0.0;
        for i in 0..8 {
            want += z[[i, 0]] * z[[i, 1]];
        }
        assert_relative_eq!(pop.entries()[[0, 1]], want / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected_at_construction() {
        assert!(DgpSampler::new(&DgpConfig::HeavyTailT { df: 2.0 }, 10, 4, 0).is_err());
        assert!(DgpSampler::new(&DgpConfig::DuplicatedCoordinates { k: 5 }, 10, 4, 0).is_err());
        assert!(DgpSampler::new(&DgpConfig::GaussianEquicorrelated { rho: -0.1 }, 10, 4, 0)
            .is_err());
    }
}
