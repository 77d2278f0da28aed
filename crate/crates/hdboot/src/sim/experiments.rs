//! Monte Carlo experiments. Every estimate is a pure function of
//! (config, seed): replications draw from per-index streams and aggregate
//! through exact counts, so partitioning or reordering the work cannot
//! change the result.

use std::time::Instant;

use rayon::prelude::*;

use crate::bootstrap::{ceil_index, empirical_draws, multiplier_draws, BootstrapScheme};
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_max_draws, rate_delta1};
use crate::inference::{simultaneous_ci, stepdown, InfluencePanel, Sides};
use crate::rng::mix;
use crate::sim::config::{ExperimentKind, ScenarioConfig};
use crate::sim::dgp::DgpSampler;
use crate::sim::report::{proportion_se, CellReport, MCReport, PpRow, PpTable};
use crate::stats::{ks_distance, max_stat, scaled_mean, DataMatrix, MaxMode, RateInputs};

/// Two-sample Kolmogorov distance has sd ~ c·sqrt(1/r + 1/b) under equal
/// laws; c is the sd of the Kolmogorov law.
const KOLMOGOROV_SD: f64 = 0.2603328714624129;

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Report(MCReport),
    Table(PpTable),
}

impl ExperimentOutput {
    pub fn serialize(&self) -> String {
        match self {
            ExperimentOutput::Report(r) => r.to_json(),
            ExperimentOutput::Table(t) => t.to_csv(),
        }
    }

    pub fn runtime_seconds(&self) -> f64 {
        match self {
            ExperimentOutput::Report(r) => r.runtime_seconds,
            ExperimentOutput::Table(_) => 0.0,
        }
    }
}

pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::Pp => Ok(ExperimentOutput::Table(experiment_pp(cfg)?)),
        ExperimentKind::Coverage => Ok(ExperimentOutput::Report(experiment_coverage(cfg)?)),
        ExperimentKind::Fwer => Ok(ExperimentOutput::Report(experiment_fwer(cfg)?)),
        ExperimentKind::Rate => Ok(ExperimentOutput::Report(experiment_rate(cfg)?)),
    }
}

/// Fraction of replications whose simultaneous rectangle contains the true
/// mean (the origin for every built-in process).
pub fn experiment_coverage(cfg: &ScenarioConfig) -> Result<MCReport> {
    cfg.validate()?;
    let start = Instant::now();
    let sampler = DgpSampler::new(&cfg.dgp, cfg.n, cfg.p, cfg.seed)?;
    let zeros = vec![0.0; cfg.p];
    let hits: Vec<bool> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let x = sampler.draw(r as u64);
            let panel = InfluencePanel::from_observations(x);
            let ci = simultaneous_ci(
                &panel,
                cfg.alpha,
                cfg.scheme,
                cfg.b,
                sampler.bootstrap_seed(r as u64),
            )?;
            Ok(ci.contains(&zeros))
        })
        .collect::<Result<_>>()?;
    let estimate = hits.iter().filter(|h| **h).count() as f64 / cfg.reps as f64;
    let mc_se = proportion_se(estimate, cfg.reps);
    Ok(MCReport {
        estimate,
        mc_se,
        cells: vec![CellReport {
            name: cfg.dgp.name().into(),
            n: cfg.n,
            p: cfg.p,
            estimate,
            mc_se,
            reference: Some(1.0 - cfg.alpha),
        }],
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Familywise error of the two-sided stepdown test. Without a signal the
/// whole null holds and the estimate is the fraction of replications with
/// any rejection; with a signal the error counts rejections among the
/// unshifted coordinates and a second cell reports the fraction of
/// replications rejecting every shifted coordinate.
pub fn experiment_fwer(cfg: &ScenarioConfig) -> Result<MCReport> {
    cfg.validate()?;
    let start = Instant::now();
    let sampler = DgpSampler::new(&cfg.dgp, cfg.n, cfg.p, cfg.seed)?;
    let signal = cfg.signal.filter(|s| s.count > 0);
    let outcomes: Vec<(bool, bool)> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let x = sampler.draw(r as u64);
            let x = match signal {
                Some(s) => {
                    let mut v = x.values().clone();
                    for j in 0..s.count {
                        v.column_mut(j).mapv_inplace(|t| t + s.magnitude);
                    }
                    DataMatrix::new(v)?
                }
                None => x,
            };
            let panel = InfluencePanel::from_observations(x);
            let res = stepdown(
                &panel,
                cfg.alpha,
                Sides::TwoSided,
                cfg.scheme,
                cfg.b,
                sampler.bootstrap_seed(r as u64),
            )?;
            let null_start = signal.map_or(0, |s| s.count);
            let false_rejection = res.rejected.iter().any(|&j| j >= null_start);
            let all_signals = (0..null_start).all(|j| res.rejected_at_step[j] > 0);
            Ok((false_rejection, null_start > 0 && all_signals))
        })
        .collect::<Result<_>>()?;
    let reps = cfg.reps as f64;
    let fwer = outcomes.iter().filter(|(f, _)| *f).count() as f64 / reps;
    let mut cells = vec![CellReport {
        name: "fwer".into(),
        n: cfg.n,
        p: cfg.p,
        estimate: fwer,
        mc_se: proportion_se(fwer, cfg.reps),
        reference: Some(cfg.alpha),
    }];
    if signal.is_some() {
        let power = outcomes.iter().filter(|(_, a)| *a).count() as f64 / reps;
        cells.push(CellReport {
            name: "power".into(),
            n: cfg.n,
            p: cfg.p,
            estimate: power,
            mc_se: proportion_se(power, cfg.reps),
            reference: None,
        });
    }
    Ok(MCReport {
        estimate: fwer,
        mc_se: proportion_se(fwer, cfg.reps),
        cells,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn truth_sample(sampler: &DgpSampler, reps: usize) -> Vec<f64> {
    let mut truth: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let x = sampler.draw(r as u64);
            max_stat(scaled_mean(&x).as_slice().expect("contiguous"), MaxMode::MaxAbs)
                .expect("p >= 2")
        })
        .collect();
    truth.sort_by(f64::total_cmp);
    truth
}

fn raw_max_draws(
    x: &DataMatrix,
    scheme: BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let draws = if scheme.is_multiplier() {
        multiplier_draws(x, scheme, b, seed)?
    } else {
        empirical_draws(x, b, seed)?
    };
    let mut out = draws.reduce(MaxMode::MaxAbs)?.scalars()?.to_vec();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

/// CDF agreement table for the max-abs scaled mean: at each u the
/// u-quantile of the Monte Carlo "truth" is scored under the Gaussian
/// reference, a multiplier bootstrap, and the empirical bootstrap, the
/// bootstraps conditioning on one held-out dataset.
pub fn experiment_pp(cfg: &ScenarioConfig) -> Result<PpTable> {
    cfg.validate()?;
    let mult_scheme = if cfg.scheme.is_multiplier() {
        cfg.scheme
    } else {
        BootstrapScheme::GaussianMultiplier
    };
    let mut rows = Vec::new();
    for &n in &cfg.grid() {
        let sampler = DgpSampler::new(&cfg.dgp, n, cfg.p, mix(cfg.seed, n as u64))?;
        let truth = truth_sample(&sampler, cfg.reps);
        let held = sampler.draw(cfg.reps as u64);
        let held_seed = sampler.bootstrap_seed(cfg.reps as u64);
        let mult = raw_max_draws(&held, mult_scheme, cfg.b, held_seed)?;
        let emp = raw_max_draws(&held, BootstrapScheme::Empirical, cfg.b, mix(held_seed, 1))?;
        let mut gauss = gaussian_max_draws(
            &sampler.population_covariance(),
            cfg.b,
            mix(held_seed, 2),
            MaxMode::MaxAbs,
        )?;
        gauss.sort_by(f64::total_cmp);
        for i in 1..100 {
            let u = i as f64 / 100.0;
            let q = truth[ceil_index(u, truth.len()) - 1];
            rows.push(PpRow {
                n,
                u,
                f_true: ecdf(&truth, q),
                f_gauss: ecdf(&gauss, q),
                f_mult: ecdf(&mult, q),
                f_emp: ecdf(&emp, q),
            });
        }
    }
    Ok(PpTable { rows })
}

/// Kolmogorov distance between the Monte Carlo law of the max-abs scaled
/// mean and one dataset's bootstrap law, per sample size, plus the fitted
/// slope of log distance against log n. The reference column carries the
/// theoretical rate functional at B_n = 1 for side-by-side reading.
pub fn experiment_rate(cfg: &ScenarioConfig) -> Result<MCReport> {
    cfg.validate()?;
    let start = Instant::now();
    let grid = cfg.grid();
    if grid.len() < 2 {
        return Err(Error::Config(
            "the rate experiment needs an n_grid with at least two sample sizes".into(),
        ));
    }
    let unit = RateInputs::new(1.0, None, 1.0, 1.0)?;
    let se = KOLMOGOROV_SD
        * ((cfg.reps + cfg.b) as f64 / (cfg.reps as f64 * cfg.b as f64)).sqrt();
    let mut cells = Vec::new();
    for &n in &grid {
        let sampler = DgpSampler::new(&cfg.dgp, n, cfg.p, mix(cfg.seed, n as u64))?;
        let truth = truth_sample(&sampler, cfg.reps);
        let held = sampler.draw(cfg.reps as u64);
        let boot =
            raw_max_draws(&held, cfg.scheme, cfg.b, sampler.bootstrap_seed(cfg.reps as u64))?;
        let d = ks_distance(&truth, &boot)?;
        cells.push(CellReport {
            name: "ks".into(),
            n,
            p: cfg.p,
            estimate: d,
            mc_se: se,
            reference: Some(rate_delta1(&unit, n, cfg.p)?),
        });
    }

    // least-squares slope of ln d on ln n, with the cell SEs pushed
    // through the same linear map
    if cells.iter().any(|c| !(c.estimate > 0.0)) {
        return Err(Error::InvalidData(
            "a Kolmogorov distance of zero leaves the log-log fit undefined".into(),
        ));
    }
    let lx: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let mut slope = 0.0;
    let mut var = 0.0;
    for (c, x) in cells.iter().zip(lx.iter()) {
        let w = (x - mx) / sxx;
        slope += w * c.estimate.ln();
        var += (w * c.mc_se / c.estimate).powi(2);
    }
    Ok(MCReport {
        estimate: slope,
        mc_se: var.sqrt(),
        cells,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
