//! Serialized experiment outputs. Reports are byte-stable functions of
//! (config, seed); wall-clock time is kept on the struct for logging but
//! never serialized, so reruns compare equal.

use serde::{Deserialize, Serialize};

/// One (n, p) cell of a Monte Carlo experiment. `reference` carries the
/// comparison value the cell should be read against (nominal level, rate
/// functional, ...) when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub estimate: f64,
    pub mc_se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub estimate: f64,
    pub mc_se: f64,
    pub cells: Vec<CellReport>,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl MCReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Binomial standard error of a proportion estimated from `reps` draws.
pub fn proportion_se(estimate: f64, reps: usize) -> f64 {
    (estimate * (1.0 - estimate) / reps as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpRow {
    pub n: usize,
    pub u: f64,
    pub f_true: f64,
    pub f_gauss: f64,
    pub f_mult: f64,
    pub f_emp: f64,
}

/// Probability-probability table: reference CDF levels against the CDF
/// values the three approximations assign to the same quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PpTable {
    pub rows: Vec<PpRow>,
}

impl PpTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,u,f_true,f_gauss,f_mult,f_emp\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n, r.u, r.f_true, r.f_gauss, r.f_mult, r.f_emp
            ));
        }
        out
    }
}
