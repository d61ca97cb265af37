//! Maximum simulated likelihood, nested (look-up table) and MPEC.
//!
//! Both estimators minimise the average negative kernel log-likelihood with
//! the same Nelder–Mead settings and start from the all-zeros vector. The
//! nested estimator maps every trial `log c` to a margin through the table;
//! the MPEC estimator optimises `(β, log c, m)` jointly under the equality
//! `cost_of_m(m) = exp(log c)`, handled by an augmented Lagrangian.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood_with, DrawSet, Smoothing};
use crate::model::{Dataset, Parameters};
use crate::optim::{augmented_lagrangian, nelder_mead, AugmentedLagrangianOptions, SimplexOptions};
use crate::par::Execution;
use crate::reservation::{cost_of_m, lookup_m, solve_m_newton, LookupTable, DEFAULT_TOL};

/// Objective value returned when a trial cost falls outside the table.
pub const OUT_OF_RANGE_PENALTY: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mpec,
    Benchmark,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Mpec, Method::Benchmark];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mpec => "mpec",
            Method::Benchmark => "benchmark",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpec" => Ok(Method::Mpec),
            "benchmark" => Ok(Method::Benchmark),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// Where the nested estimator gets `m` for a trial cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginSource {
    #[default]
    Table,
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// `(β₁..β_J, log c)`; `None` means all zeros.
    pub start: Option<Vec<f64>>,
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_evals: usize,
    pub simplex_step: f64,
    pub al_penalty0: f64,
    pub al_growth: f64,
    pub al_outer_max: usize,
    pub constraint_tol: f64,
    pub margin_source: MarginSource,
    pub execution: Execution,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            start: None,
            f_tol: 1e-8,
            x_tol: 1e-6,
            max_evals: 50_000,
            simplex_step: 0.25,
            al_penalty0: 10.0,
            al_growth: 10.0,
            al_outer_max: 12,
            constraint_tol: 1e-8,
            margin_source: MarginSource::Table,
            execution: Execution::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.f_tol, self.x_tol, self.simplex_step, self.al_penalty0, self.constraint_tol];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.al_growth > 1.0) || self.max_evals == 0 {
            return Err(Error::InvalidInput(
                "optimizer tolerances must be positive and al_growth > 1".into(),
            ));
        }
        Ok(())
    }

    fn simplex(&self) -> SimplexOptions {
        SimplexOptions {
            step: self.simplex_step,
            f_tol: self.f_tol,
            x_tol: self.x_tol,
            max_evals: self.max_evals,
        }
    }

    fn start_for(&self, num_products: usize) -> Result<Vec<f64>> {
        match &self.start {
            None => Ok(vec![0.0; num_products + 1]),
            Some(s) if s.len() == num_products + 1 => Ok(s.clone()),
            Some(s) => Err(Error::InvalidInput(format!(
                "start has {} entries, expected {}",
                s.len(),
                num_products + 1
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub method: Method,
    pub theta_hat: Parameters,
    pub m_hat: f64,
    pub loglik: f64,
    /// `|cost_of_m(m_hat) − exp(log_c_hat)|`
    pub constraint_residual: f64,
    pub converged: bool,
    pub evals: usize,
    /// Seconds spent inside the estimator.
    pub wall_time: f64,
}

impl EstimationResult {
    /// Same result apart from timing.
    pub fn same_estimate(&self, other: &Self) -> bool {
        Self { wall_time: 0.0, ..self.clone() } == Self { wall_time: 0.0, ..other.clone() }
    }
}

struct Problem<'a> {
    dataset: &'a Dataset,
    draws: &'a DrawSet,
    smoothing: Smoothing,
    exec: Execution,
}

impl Problem<'_> {
    fn loglik(&self, theta: &Parameters, m: f64) -> f64 {
        log_likelihood_with(self.dataset, theta, self.draws, m, self.smoothing, self.exec).unwrap_or(f64::NEG_INFINITY)
    }

    /// Average negative log-likelihood.
    fn objective(&self, theta: &Parameters, m: f64) -> f64 {
        let ll = self.loglik(theta, m);
        if ll.is_finite() {
            -ll / self.dataset.len() as f64
        } else {
            OUT_OF_RANGE_PENALTY
        }
    }

    fn check(&self) -> Result<()> {
        if self.draws.num_consumers() != self.dataset.len()
            || self.draws.num_products() != self.dataset.num_products
            || self.draws.num_draws() == 0
        {
            return Err(Error::InvalidInput("draw set does not match dataset".into()));
        }
        if let Smoothing::Kernel { rho } = self.smoothing {
            if rho.iter().any(|r| !(*r > 0.0)) {
                return Err(Error::InvalidInput("kernel scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Nested estimator: every trial `log c` is mapped to `m` through `table`
/// (or Newton, per [`OptimizerConfig::margin_source`]).
pub fn estimate_benchmark(
    dataset: &Dataset,
    draws: &DrawSet,
    table: &LookupTable,
    config: &OptimizerConfig,
    rho: f64,
) -> Result<EstimationResult> {
    estimate_benchmark_with(dataset, draws, table, config, Smoothing::kernel(rho))
}

pub fn estimate_benchmark_with(
    dataset: &Dataset,
    draws: &DrawSet,
    table: &LookupTable,
    config: &OptimizerConfig,
    smoothing: Smoothing,
) -> Result<EstimationResult> {
    config.validate()?;
    let problem = Problem {
        dataset,
        draws,
        smoothing,
        exec: config.execution,
    };
    problem.check()?;
    let start = config.start_for(dataset.num_products)?;
    let margin = |log_c: f64| -> Option<f64> {
        let c = log_c.exp();
        match config.margin_source {
            MarginSource::Table => lookup_m(table, c).ok(),
            MarginSource::Newton => solve_m_newton(c, DEFAULT_TOL).ok(),
        }
    };

    let clock = Instant::now();
    let out = nelder_mead(
        |x| {
            let theta = Parameters::from_slice(x);
            match margin(theta.log_c) {
                Some(m) => problem.objective(&theta, m),
                None => OUT_OF_RANGE_PENALTY,
            }
        },
        &start,
        &config.simplex(),
    );
    let theta_hat = Parameters::from_slice(&out.x);
    let (m_hat, loglik, residual, in_range) = match margin(theta_hat.log_c) {
        Some(m) => (
            m,
            problem.loglik(&theta_hat, m),
            (cost_of_m(m) - theta_hat.cost()).abs(),
            true,
        ),
        None => (f64::NAN, f64::NEG_INFINITY, f64::INFINITY, false),
    };
    let wall_time = clock.elapsed().as_secs_f64();
    Ok(EstimationResult {
        method: Method::Benchmark,
        theta_hat,
        m_hat,
        loglik,
        constraint_residual: residual,
        converged: out.converged && in_range && loglik.is_finite(),
        evals: out.evals,
        wall_time,
    })
}

/// MPEC estimator over `(β, log c, m)` with `cost_of_m(m) − exp(log c) = 0`.
///
/// The search cost is common to all products, so a single margin and a
/// single constraint suffice; the initial margin is 0.
pub fn estimate_mpec(dataset: &Dataset, draws: &DrawSet, config: &OptimizerConfig, rho: f64) -> Result<EstimationResult> {
    estimate_mpec_with(dataset, draws, config, Smoothing::kernel(rho))
}

pub fn estimate_mpec_with(
    dataset: &Dataset,
    draws: &DrawSet,
    config: &OptimizerConfig,
    smoothing: Smoothing,
) -> Result<EstimationResult> {
    config.validate()?;
    let problem = Problem {
        dataset,
        draws,
        smoothing,
        exec: config.execution,
    };
    problem.check()?;
    let mut start = config.start_for(dataset.num_products)?;
    start.push(0.0);
    let split = |x: &[f64]| (Parameters::from_slice(&x[..x.len() - 1]), x[x.len() - 1]);
    let opts = AugmentedLagrangianOptions {
        inner: config.simplex(),
        penalty0: config.al_penalty0,
        growth: config.al_growth,
        max_outer: config.al_outer_max,
        constraint_tol: config.constraint_tol,
    };

    let clock = Instant::now();
    let out = augmented_lagrangian(
        |x| {
            let (theta, m) = split(x);
            problem.objective(&theta, m)
        },
        |x| {
            let (theta, m) = split(x);
            vec![cost_of_m(m) - theta.cost()]
        },
        &start,
        &opts,
    );
    let (theta_hat, m_hat) = split(&out.x);
    let loglik = problem.loglik(&theta_hat, m_hat);
    let residual = (cost_of_m(m_hat) - theta_hat.cost()).abs();
    let wall_time = clock.elapsed().as_secs_f64();
    Ok(EstimationResult {
        method: Method::Mpec,
        theta_hat,
        m_hat,
        loglik,
        constraint_residual: residual,
        converged: out.converged && residual <= config.constraint_tol && loglik.is_finite(),
        evals: out.evals,
        wall_time,
    })
}

pub fn estimate(
    method: Method,
    dataset: &Dataset,
    draws: &DrawSet,
    table: &LookupTable,
    config: &OptimizerConfig,
    smoothing: Smoothing,
) -> Result<EstimationResult> {
    match method {
        Method::Mpec => estimate_mpec_with(dataset, draws, config, smoothing),
        Method::Benchmark => estimate_benchmark_with(dataset, draws, table, config, smoothing),
    }
}
