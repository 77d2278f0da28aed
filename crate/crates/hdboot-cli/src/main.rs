use clap::{Parser, Subcommand, ValueEnum};
use hdboot::bootstrap::BootstrapScheme;
use hdboot::inference::{cov_compare_test, simultaneous_ci, stepdown, InfluencePanel, Sides};
use hdboot::lasso::{rlasso_pipeline, sup_score_test, NoiseMode, RegressionData, SupScoreTest};
use hdboot::sim::{run_experiment, ScenarioConfig};
use hdboot::stats::{DataMatrix, RateInputs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hdboot",
    version,
    about = "Bootstrap inference for high-dimensional panels: simultaneous intervals, \
             stepdown testing, covariance comparison, penalized regression, and \
             Monte Carlo scenario runs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    GaussianMultiplier,
    Empirical,
    MammenMultiplier,
    RademacherMultiplier,
}

impl From<SchemeArg> for BootstrapScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::GaussianMultiplier => BootstrapScheme::GaussianMultiplier,
            SchemeArg::Empirical => BootstrapScheme::Empirical,
            SchemeArg::MammenMultiplier => BootstrapScheme::MammenMultiplier,
            SchemeArg::RademacherMultiplier => BootstrapScheme::RademacherMultiplier,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Homoscedastic,
    Heteroscedastic,
}

impl From<ModeArg> for NoiseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Homoscedastic => NoiseMode::Homoscedastic,
            ModeArg::Heteroscedastic => NoiseMode::Heteroscedastic,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a Monte Carlo scenario from a JSON config and write its report
    Simulate {
        /// Scenario JSON (see the config schema in the README)
        #[arg(long)]
        config: PathBuf,
        /// Output file: JSON report, or CSV for the pp experiment
        #[arg(long)]
        out: PathBuf,
        /// Replaces the seed field of the config
        #[arg(long)]
        seed: u64,
    },
    /// Simultaneous confidence intervals for the column means of a CSV panel
    Ci {
        /// CSV with a header row; rows are observations
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = SchemeArg::GaussianMultiplier)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 999)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stepdown multiple testing with adjusted p-values over panel columns
    Stepdown {
        /// CSV with a header row; rows are observations
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Test theta_j <= 0 instead of theta_j = 0
        #[arg(long)]
        one_sided: bool,
        #[arg(long, value_enum, default_value_t = SchemeArg::GaussianMultiplier)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 999)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test whether two samples share a covariance matrix
    Covcmp {
        /// First sample, CSV with a header row
        #[arg(long)]
        x: PathBuf,
        /// Second sample over the same columns
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 499)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lasso with bootstrap penalty refinement; first CSV column is the response
    Rlasso {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Heteroscedastic)]
        mode: ModeArg,
        #[arg(long, default_value_t = 2)]
        refinements: usize,
        #[arg(long, default_value_t = 999)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the joint significance test at the same level
        #[arg(long)]
        sup_score: bool,
    },
    /// Distributional approximation rate functionals for planning
    Rates {
        /// Envelope moment bound for the coordinates
        #[arg(long = "B")]
        b_n: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// Moment order; adds the polynomial-tail functional to the output
        #[arg(long)]
        q: Option<f64>,
    },
}

/// Input errors (bad flags handled by clap, bad files/configs here) exit
/// with 2; failures after inputs were accepted exit with 3.
enum CliError {
    Input(String),
    Run(String),
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

fn main() -> ExitCode {
    if let Ok(t) = std::env::var("HDBOOT_THREADS") {
        match t.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: HDBOOT_THREADS must be a positive integer, got '{t}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 2 } else { 0 };
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(run_err),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Simulate { config, out, seed } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| input(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = ScenarioConfig::from_json(&text).map_err(input)?;
            cfg.seed = seed;
            let report = run_experiment(&cfg).map_err(run_err)?;
            std::fs::write(&out, report.serialize()).map_err(run_err)?;
            eprintln!(
                "{} experiment done in {:.1}s -> {}",
                cfg.experiment.name(),
                report.runtime_seconds(),
                out.display()
            );
            Ok(())
        }
        Cmd::Ci { data, alpha, scheme, b, seed, out } => {
            let panel = InfluencePanel::from_csv(&data).map_err(input)?;
            let ci = simultaneous_ci(&panel, alpha, scheme.into(), b, seed).map_err(run_err)?;
            let mut text = String::from("index,theta_hat,lower,upper\n");
            for j in 0..panel.p() {
                let (lo, hi) = ci.interval(j);
                text.push_str(&format!("{},{},{},{}\n", j + 1, panel.theta_hat()[j], lo, hi));
            }
            emit(&text, out.as_deref())
        }
        Cmd::Stepdown { data, alpha, one_sided, scheme, b, seed, out } => {
            let panel = InfluencePanel::from_csv(&data).map_err(input)?;
            let sides = if one_sided { Sides::OneSided } else { Sides::TwoSided };
            let res = stepdown(&panel, alpha, sides, scheme.into(), b, seed).map_err(run_err)?;
            if res.degenerate_draws_warning {
                eprintln!(
                    "warning: critical value hit the largest bootstrap draw; \
                     raise B for a meaningful quantile"
                );
            }
            emit(&res.to_csv(), out.as_deref())
        }
        Cmd::Covcmp { x, y, alpha, b, seed } => {
            let xm = DataMatrix::from_csv(&x).map_err(input)?;
            let ym = DataMatrix::from_csv(&y).map_err(input)?;
            let res = cov_compare_test(&xm, &ym, alpha, b, seed).map_err(run_err)?;
            println!("{}", serde_json::to_string_pretty(&res).map_err(run_err)?);
            Ok(())
        }
        Cmd::Rlasso { data, alpha, mode, refinements, b, seed, sup_score } => {
            let d = RegressionData::from_csv(&data).map_err(input)?;
            let fit =
                rlasso_pipeline(&d, alpha, mode.into(), refinements, b, seed).map_err(run_err)?;
            let score = if sup_score {
                Some(sup_score_test(&d, alpha, b, seed).map_err(run_err)?)
            } else {
                None
            };
            #[derive(serde::Serialize)]
            struct Out {
                lambda_trace: Vec<f64>,
                /// 1-based indices of the nonzero coefficients
                active_set: Vec<usize>,
                coefficients: Vec<f64>,
                objective: f64,
                iterations: usize,
                #[serde(skip_serializing_if = "Option::is_none")]
                sup_score: Option<SupScoreTest>,
            }
            let out = Out {
                lambda_trace: fit.lambda_trace.clone(),
                active_set: fit.fit.active_set.iter().map(|j| j + 1).collect(),
                coefficients: fit.fit.beta.to_vec(),
                objective: fit.fit.objective,
                iterations: fit.fit.iterations,
                sup_score: score,
            };
            println!("{}", serde_json::to_string_pretty(&out).map_err(run_err)?);
            Ok(())
        }
        Cmd::Rates { b_n, n, p, q } => {
            let inputs = RateInputs::new(b_n, q, 1.0, 1.0).map_err(input)?;
            let d1 = hdboot::gaussian::rate_delta1(&inputs, n, p).map_err(run_err)?;
            match q {
                Some(_) => {
                    let d2 = hdboot::gaussian::rate_delta2(&inputs, n, p).map_err(run_err)?;
                    println!("b_n,n,p,delta1,delta2");
                    println!("{b_n},{n},{p},{d1},{d2}");
                }
                None => {
                    println!("b_n,n,p,delta1");
                    println!("{b_n},{n},{p},{d1}");
                }
            }
            Ok(())
        }
    }
}
