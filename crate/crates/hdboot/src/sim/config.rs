//! Declarative experiment descriptions. Configs are strict JSON: unknown
//! keys are rejected so typos fail loudly instead of silently changing the
//! experiment.

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapScheme;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pp,
    Coverage,
    Fwer,
    Rate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Pp => "pp",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Fwer => "fwer",
            ExperimentKind::Rate => "rate",
        }
    }
}

/// Data-generating process. All processes have mean zero, so the true
/// parameter in mean-inference experiments is the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DgpConfig {
    /// X_ij = z_ij * e_i with a fixed U[0,1] design z (drawn once per
    /// scenario) and centered standard-exponential row noise e_i.
    Figure1Regression,
    /// Jointly Gaussian rows with corr(X_j, X_k) = rho for j != k.
    GaussianEquicorrelated { rho: f64 },
    /// Independent t coordinates with df degrees of freedom, rescaled to
    /// unit variance; needs df > 2.
    HeavyTailT { df: f64 },
    /// k independent standard normal columns, each repeated cyclically to
    /// width p; the population covariance is singular for k < p.
    DuplicatedCoordinates { k: usize },
    /// Independent centered normals with sd_j = j^(-a/2) (1-based j).
    VarianceDecay { a: f64 },
}

impl DgpConfig {
    pub fn name(&self) -> &'static str {
        match self {
            DgpConfig::Figure1Regression => "figure1-regression",
            DgpConfig::GaussianEquicorrelated { .. } => "gaussian-equicorrelated",
            DgpConfig::HeavyTailT { .. } => "heavy-tail-t",
            DgpConfig::DuplicatedCoordinates { .. } => "duplicated-coordinates",
            DgpConfig::VarianceDecay { .. } => "variance-decay",
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            DgpConfig::Figure1Regression => Ok(()),
            DgpConfig::GaussianEquicorrelated { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::Config(format!(
                        "equicorrelation must lie in [0,1), got {rho}"
                    )));
                }
                Ok(())
            }
            DgpConfig::HeavyTailT { df } => {
                if !(df.is_finite() && df > 2.0) {
                    return Err(Error::Config(format!(
                        "t degrees of freedom must exceed 2 for unit-variance scaling, got {df}"
                    )));
                }
                Ok(())
            }
            DgpConfig::DuplicatedCoordinates { k } => {
                if k == 0 || k > p {
                    return Err(Error::Config(format!(
                        "distinct column count must lie in 1..={p}, got {k}"
                    )));
                }
                Ok(())
            }
            DgpConfig::VarianceDecay { a } => {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::Config(format!(
                        "variance decay exponent must be a finite nonnegative real, got {a}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Mean shift applied to the first `count` columns; turns the FWER
/// experiment into a mixed null/alternative power study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub count: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: ExperimentKind,
    pub dgp: DgpConfig,
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub scheme: BootstrapScheme,
    #[serde(default)]
    pub seed: u64,
    /// Sample-size grid for the pp and rate experiments; defaults to [n].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalConfig>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.p < 2 {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        if self.b == 0 {
            return Err(Error::Config("B must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        self.dgp.validate(self.p)?;
        if let Some(grid) = &self.n_grid {
            if grid.is_empty() {
                return Err(Error::Config("n_grid must be nonempty when present".into()));
            }
            if grid.iter().any(|&n| n < 2) {
                return Err(Error::Config("every n_grid entry must be at least 2".into()));
            }
        }
        if let Some(sig) = &self.signal {
            if sig.count > self.p {
                return Err(Error::Config(format!(
                    "signal count {} exceeds p = {}",
                    sig.count, self.p
                )));
            }
            if !sig.magnitude.is_finite() {
                return Err(Error::Config("signal magnitude must be finite".into()));
            }
        }
        Ok(())
    }

    /// Grid for grid-driven experiments, defaulting to the scalar n.
    pub fn grid(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| vec![self.n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> String {
        r#"{
            "experiment": "coverage",
            "dgp": {"kind": "gaussian-equicorrelated", "rho": 0.5},
            "n": 200, "p": 500, "reps": 1000, "B": 999,
            "alpha": 0.05, "scheme": "gaussian-multiplier", "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn round_trip_is_stable() {
        let cfg = ScenarioConfig::from_json(&base_json()).unwrap();
        let json = cfg.to_json();
        let again = ScenarioConfig::from_json(&json).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(json, again.to_json());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = base_json().replace("\"seed\": 7", "\"seed\": 7, \"repz\": 3");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(Error::Config(_))));
        let bad_dgp = base_json().replace("\"rho\": 0.5", "\"rho\": 0.5, \"sigma\": 1");
        assert!(matches!(ScenarioConfig::from_json(&bad_dgp), Err(Error::Config(_))));
    }

    #[test]
    fn missing_seed_defaults_to_zero() {
        let no_seed = base_json().replace(", \"seed\": 7", "");
        let cfg = ScenarioConfig::from_json(&no_seed).unwrap();
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn out_of_range_parameters_are_rejected() {
        for (from, to) in [
            ("\"rho\": 0.5", "\"rho\": 1.0"),
            ("\"alpha\": 0.05", "\"alpha\": 0.0"),
            ("\"n\": 200", "\"n\": 1"),
            ("\"reps\": 1000", "\"reps\": 0"),
            ("\"B\": 999", "\"B\": 0"),
        ] {
            let bad = base_json().replace(from, to);
            assert!(
                matches!(ScenarioConfig::from_json(&bad), Err(Error::Config(_))),
                "{to} should be rejected"
            );
        }
        let df = base_json().replace(
            "{\"kind\": \"gaussian-equicorrelated\", \"rho\": 0.5}",
            "{\"kind\": \"heavy-tail-t\", \"df\": 2.0}",
        );
        assert!(ScenarioConfig::from_json(&df).is_err());
        let dup = base_json().replace(
            "{\"kind\": \"gaussian-equicorrelated\", \"rho\": 0.5}",
            "{\"kind\": \"duplicated-coordinates\", \"k\": 501}",
        );
        assert!(ScenarioConfig::from_json(&dup).is_err());
    }

    #[test]
    fn dgp_names_match_their_json_tags() {
        let cfg = ScenarioConfig::from_json(&base_json()).unwrap();
        assert_eq!(cfg.dgp.name(), "gaussian-equicorrelated");
        assert!(base_json().contains(cfg.dgp.name()));
        assert_eq!(cfg.experiment.name(), "coverage");
    }

    #[test]
    fn signal_is_checked_against_p() {
        let with_signal = base_json().replace(
            "\"seed\": 7",
            "\"seed\": 7, \"signal\": {\"count\": 501, \"magnitude\": 0.7}",
        );
        assert!(ScenarioConfig::from_json(&with_signal).is_err());
        let ok = base_json().replace(
            "\"seed\": 7",
            "\"seed\": 7, \"signal\": {\"count\": 10, \"magnitude\": 0.7}",
        );
        let cfg = ScenarioConfig::from_json(&ok).unwrap();
        assert_eq!(cfg.signal.unwrap().count, 10);
    }
}
