//! Simulated likelihood of observed search-and-purchase records.
//!
//! For one draw of `(μ, ε, ε₀)` the observed record is consistent with the
//! optimal policy when four families of margins are non-negative:
//!
//! * selection `v1_h = z_{s_h} − max{z_k : k not among s_1..s_h}`;
//! * continuation `v2_h = z_{s_h} − max(u_0, u_{s_1}, …, u_{s_{h−1}})`;
//! * stopping `v3 = max(u over S ∪ {0}) − max(z over unsearched)`;
//! * choice `v4 = u_y − max(u over (S ∪ {0}) ∖ {y})`.
//!
//! A margin whose inner maximum ranges over an empty set is `+∞`. The crude
//! frequency simulator averages the product of indicators over draws; the
//! kernel simulator replaces the indicators with a scaled multivariate
//! logistic CDF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConsumerRecord, Dataset, Parameters};
use crate::par::{self, Execution};
use crate::stats::RngStream;

/// Floor applied to crude per-consumer likelihoods before taking logs.
pub const CRUDE_FLOOR: f64 = 1e-12;

/// Largest exponent passed to `exp` in the kernel; keeps terms finite.
const MAX_EXPONENT: f64 = 700.0;

/// Fixed simulation draws for every consumer: `D` sets of `(μ, ε, ε₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawSet {
    num_consumers: usize,
    num_products: usize,
    num_draws: usize,
    /// `[(i * D + d) * J + j]`
    mu: Vec<f64>,
    eps: Vec<f64>,
    /// `[i * D + d]`
    eps0: Vec<f64>,
}

/// The draws belonging to one consumer.
#[derive(Clone, Copy, Debug)]
pub struct ConsumerDrawSlice<'a> {
    pub num_products: usize,
    pub mu: &'a [f64],
    pub eps: &'a [f64],
    pub eps0: &'a [f64],
}

impl ConsumerDrawSlice<'_> {
    pub fn num_draws(&self) -> usize {
        self.eps0.len()
    }

    pub fn mu(&self, d: usize) -> &[f64] {
        &self.mu[d * self.num_products..(d + 1) * self.num_products]
    }

    pub fn eps(&self, d: usize) -> &[f64] {
        &self.eps[d * self.num_products..(d + 1) * self.num_products]
    }
}

impl DrawSet {
    /// Draws for consumer `i` come from `stream.substream(i)`, `D` blocks of
    /// `(μ_1..μ_J, ε_1..ε_J, ε₀)` in that order.
    pub fn generate(stream: &RngStream, num_consumers: usize, num_products: usize, num_draws: usize) -> Self {
        Self::generate_with(stream, num_consumers, num_products, num_draws, Execution::default())
    }

    pub fn generate_with(
        stream: &RngStream,
        num_consumers: usize,
        num_products: usize,
        num_draws: usize,
        exec: Execution,
    ) -> Self {
        let j = num_products;
        let block = 2 * j + 1;
        let per_consumer = par::map_range(exec, num_consumers, |i| {
            crate::stats::draw_normal_array(&stream.substream(i as u64), num_draws * block)
        });
        let mut out = Self {
            num_consumers,
            num_products,
            num_draws,
            mu: Vec::with_capacity(num_consumers * num_draws * j),
            eps: Vec::with_capacity(num_consumers * num_draws * j),
            eps0: Vec::with_capacity(num_consumers * num_draws),
        };
        for raw in per_consumer {
            for chunk in raw.chunks_exact(block) {
                out.mu.extend_from_slice(&chunk[..j]);
                out.eps.extend_from_slice(&chunk[j..2 * j]);
                out.eps0.push(chunk[2 * j]);
            }
        }
        out
    }

    /// Assemble from explicit per-consumer draws, `draws[i][d] = (μ, ε, ε₀)`.
    pub fn from_parts(num_products: usize, draws: &[Vec<(Vec<f64>, Vec<f64>, f64)>]) -> Result<Self> {
        let num_draws = draws.first().map_or(0, Vec::len);
        let mut out = Self {
            num_consumers: draws.len(),
            num_products,
            num_draws,
            mu: Vec::new(),
            eps: Vec::new(),
            eps0: Vec::new(),
        };
        for consumer in draws {
            if consumer.len() != num_draws {
                return Err(Error::InvalidInput("ragged draw set".into()));
            }
            for (mu, eps, eps0) in consumer {
                if mu.len() != num_products || eps.len() != num_products {
                    return Err(Error::InvalidInput("draw has wrong product count".into()));
                }
                out.mu.extend_from_slice(mu);
                out.eps.extend_from_slice(eps);
                out.eps0.push(*eps0);
            }
        }
        Ok(out)
    }

    pub fn num_consumers(&self) -> usize {
        self.num_consumers
    }

    pub fn num_products(&self) -> usize {
        self.num_products
    }

    pub fn num_draws(&self) -> usize {
        self.num_draws
    }

    pub fn consumer(&self, i: usize) -> ConsumerDrawSlice<'_> {
        let (j, d) = (self.num_products, self.num_draws);
        ConsumerDrawSlice {
            num_products: j,
            mu: &self.mu[i * d * j..(i + 1) * d * j],
            eps: &self.eps[i * d * j..(i + 1) * d * j],
            eps0: &self.eps0[i * d..(i + 1) * d],
        }
    }

    fn check_against(&self, dataset: &Dataset) -> Result<()> {
        if self.num_consumers != dataset.len() || self.num_products != dataset.num_products {
            return Err(Error::InvalidInput(format!(
                "draws sized {}x{} but dataset is {}x{}",
                self.num_consumers,
                self.num_products,
                dataset.len(),
                dataset.num_products
            )));
        }
        if self.num_draws == 0 {
            return Err(Error::InvalidInput("draw set has no draws".into()));
        }
        Ok(())
    }
}

/// Condition families, in the order used by [`Smoothing::Kernel`] scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    Selection,
    Continuation,
    Stopping,
    Choice,
}

impl Condition {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VStatistics {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: f64,
    pub v4: f64,
}

impl VStatistics {
    pub fn all_nonnegative(&self) -> bool {
        self.v1.iter().chain(&self.v2).all(|&v| v >= 0.0) && self.v3 >= 0.0 && self.v4 >= 0.0
    }

    /// Every margin, finite or not.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.v1.iter().chain(&self.v2).copied().chain([self.v3, self.v4])
    }
}

/// Searched order and unsearched set of one record, prepared once per
/// likelihood call.
struct RecordLayout<'a> {
    searched: &'a [usize],
    unsearched: Vec<usize>,
    purchase: usize,
}

impl<'a> RecordLayout<'a> {
    fn new(record: &'a ConsumerRecord) -> Result<Self> {
        let j = record.num_products();
        if record.purchase != 0 && !record.searched.contains(&record.purchase) {
            return Err(Error::MalformedRecord(format!(
                "purchase {} not in searched set {:?}",
                record.purchase, record.searched
            )));
        }
        if record.searched.iter().any(|&p| p == 0 || p > j) {
            return Err(Error::MalformedRecord(format!("searched index outside 1..={j}")));
        }
        let unsearched = (1..=j).filter(|p| !record.searched.contains(p)).collect();
        Ok(Self {
            searched: &record.searched,
            unsearched,
            purchase: record.purchase,
        })
    }

    /// Calls `visit` once per margin. Selection margins arrive from the last
    /// search position to the first; everything else in natural order.
    #[inline]
    fn visit(&self, z: &[f64], u: &[f64], u0: f64, mut visit: impl FnMut(Condition, f64)) {
        let unsearched_z = self
            .unsearched
            .iter()
            .map(|&p| z[p - 1])
            .fold(f64::NEG_INFINITY, f64::max);

        let mut rest = unsearched_z;
        for &p in self.searched.iter().rev() {
            visit(Condition::Selection, z[p - 1] - rest);
            rest = rest.max(z[p - 1]);
        }

        let mut best = u0;
        for &p in self.searched {
            visit(Condition::Continuation, z[p - 1] - best);
            best = best.max(u[p - 1]);
        }

        visit(Condition::Stopping, best - unsearched_z);

        let mut others = if self.purchase == 0 { f64::NEG_INFINITY } else { u0 };
        for &p in self.searched {
            if p != self.purchase {
                others = others.max(u[p - 1]);
            }
        }
        let chosen = if self.purchase == 0 { u0 } else { u[self.purchase - 1] };
        visit(Condition::Choice, chosen - others);
    }
}

/// Margins for one record under one draw's `z`, `u`, `u0`.
pub fn compute_v(record: &ConsumerRecord, z: &[f64], u: &[f64], u0: f64) -> Result<VStatistics> {
    let layout = RecordLayout::new(record)?;
    let mut v = VStatistics {
        v1: Vec::with_capacity(record.searched.len()),
        v2: Vec::with_capacity(record.searched.len()),
        v3: f64::INFINITY,
        v4: f64::INFINITY,
    };
    layout.visit(z, u, u0, |cond, value| match cond {
        Condition::Selection => v.v1.push(value),
        Condition::Continuation => v.v2.push(value),
        Condition::Stopping => v.v3 = value,
        Condition::Choice => v.v4 = value,
    });
    v.v1.reverse();
    Ok(v)
}

/// Per-draw kernel contribution `1 / (1 + Σ exp(−ρ_k v))` from explicit margins.
pub fn kernel_from_v(v: &VStatistics, rho: [f64; 4]) -> f64 {
    let term = |cond: Condition, value: f64| (-rho[cond.index()] * value).min(MAX_EXPONENT).exp();
    let mut denom = 1.0;
    for &x in &v.v1 {
        denom += term(Condition::Selection, x);
    }
    for &x in &v.v2 {
        denom += term(Condition::Continuation, x);
    }
    denom += term(Condition::Stopping, v.v3);
    denom += term(Condition::Choice, v.v4);
    1.0 / denom
}

/// Indicator or logistic-kernel simulator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Smoothing {
    Crude,
    /// Scales per condition family (selection, continuation, stopping, choice).
    Kernel { rho: [f64; 4] },
}

impl Smoothing {
    pub fn kernel(rho: f64) -> Self {
        Self::Kernel { rho: [rho; 4] }
    }
}

/// Per-draw utilities `z^d = ξ + μ^d + m`, `u^d = ξ + μ^d + ε^d`.
#[inline]
fn fill_utilities(theta: &Parameters, draws: &ConsumerDrawSlice<'_>, d: usize, m: f64, z: &mut [f64], u: &mut [f64]) {
    let (mu, eps) = (draws.mu(d), draws.eps(d));
    for j in 0..z.len() {
        let delta = theta.beta[j] + mu[j];
        z[j] = delta + m;
        u[j] = delta + eps[j];
    }
}

fn simulate_likelihood(
    record: &ConsumerRecord,
    theta: &Parameters,
    draws: &ConsumerDrawSlice<'_>,
    m: f64,
    smoothing: Smoothing,
) -> Result<f64> {
    let layout = RecordLayout::new(record)?;
    let j = record.num_products();
    if theta.num_products() != j || draws.num_products != j {
        return Err(Error::InvalidInput("parameter, record and draw product counts differ".into()));
    }
    let num_draws = draws.num_draws();
    if num_draws == 0 {
        return Err(Error::InvalidInput("no draws".into()));
    }
    let mut z = vec![0.0; j];
    let mut u = vec![0.0; j];
    let mut total = 0.0;
    for d in 0..num_draws {
        fill_utilities(theta, draws, d, m, &mut z, &mut u);
        let u0 = draws.eps0[d];
        // Keep in step with `kernel_from_v`.
        match smoothing {
            Smoothing::Crude => {
                let mut ok = true;
                layout.visit(&z, &u, u0, |_, v| ok &= v >= 0.0);
                if ok {
                    total += 1.0;
                }
            }
            Smoothing::Kernel { rho } => {
                let mut denom = 1.0;
                layout.visit(&z, &u, u0, |cond, v| {
                    let arg = (-rho[cond.index()] * v).min(MAX_EXPONENT);
                    // -inf for v = +inf gives exactly zero.
                    denom += arg.exp();
                });
                total += 1.0 / denom;
            }
        }
    }
    Ok(total / num_draws as f64)
}

/// Frequency simulator: share of draws under which every margin is `≥ 0`.
pub fn crude_likelihood(record: &ConsumerRecord, theta: &Parameters, draws: &ConsumerDrawSlice<'_>, m: f64) -> Result<f64> {
    simulate_likelihood(record, theta, draws, m, Smoothing::Crude)
}

/// Logistic-kernel simulator with a common scale `rho` for all families.
pub fn kernel_likelihood(
    record: &ConsumerRecord,
    theta: &Parameters,
    draws: &ConsumerDrawSlice<'_>,
    m: f64,
    rho: f64,
) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(format!("kernel scale must be positive, got {rho}")));
    }
    simulate_likelihood(record, theta, draws, m, Smoothing::kernel(rho))
}

/// `L_i` for every consumer, in dataset order.
pub fn consumer_likelihoods(
    dataset: &Dataset,
    theta: &Parameters,
    draws: &DrawSet,
    m: f64,
    smoothing: Smoothing,
    exec: Execution,
) -> Result<Vec<f64>> {
    draws.check_against(dataset)?;
    if let Smoothing::Kernel { rho } = smoothing {
        if rho.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidInput(format!("kernel scales must be positive, got {rho:?}")));
        }
    }
    par::map_indexed(exec, &dataset.consumers, |i, record| {
        simulate_likelihood(record, theta, &draws.consumer(i), m, smoothing)
    })
    .into_iter()
    .collect()
}

/// `Σ_i log L_i` with a fixed-order reduction. Crude likelihoods are floored
/// at [`CRUDE_FLOOR`].
pub fn log_likelihood(
    dataset: &Dataset,
    theta: &Parameters,
    draws: &DrawSet,
    m: f64,
    smoothing: Smoothing,
) -> Result<f64> {
    log_likelihood_with(dataset, theta, draws, m, smoothing, Execution::default())
}

pub fn log_likelihood_with(
    dataset: &Dataset,
    theta: &Parameters,
    draws: &DrawSet,
    m: f64,
    smoothing: Smoothing,
    exec: Execution,
) -> Result<f64> {
    let floor = match smoothing {
        Smoothing::Crude => CRUDE_FLOOR,
        Smoothing::Kernel { .. } => 0.0,
    };
    let terms: Vec<f64> = consumer_likelihoods(dataset, theta, draws, m, smoothing, exec)?
        .into_iter()
        .map(|l| l.max(floor).ln())
        .collect();
    Ok(par::ordered_sum(&terms))
}
