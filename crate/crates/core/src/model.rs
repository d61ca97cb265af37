//! Structural model and optimal-policy simulator.
//!
//! Product `j ∈ 1..=J` has pre-search utility `δ_j = ξ_j + μ_j` with
//! `ξ_j = β_j`, post-search utility `u_j = δ_j + ε_j` and reservation
//! utility `z_j = δ_j + m`. The outside option (index 0) pays
//! `u_0 = ε_0`, is known for free and is never searched. Shocks are
//! standard normal.
//!
//! Simulated consumers open boxes in descending `z`, stop as soon as the
//! best utility in hand is at least the next reservation utility, and buy
//! the best opened option. Ties are broken toward the lower index, with the
//! outside option winning utility ties.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::reservation::{solve_m_newton, DEFAULT_TOL};
use crate::stats::{draw_normal_array, RngStream};

/// Structural parameters: brand intercepts and log search cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub beta: Vec<f64>,
    pub log_c: f64,
}

impl Parameters {
    pub fn new(beta: Vec<f64>, log_c: f64) -> Self {
        Self { beta, log_c }
    }

    /// The simulation design's truth: `β = (1.0, 0.7, 0.5, 0.3)`, `log c = −3`.
    pub fn reference() -> Self {
        Self::new(vec![1.0, 0.7, 0.5, 0.3], -3.0)
    }

    pub fn num_products(&self) -> usize {
        self.beta.len()
    }

    pub fn cost(&self) -> f64 {
        self.log_c.exp()
    }

    /// Observed pre-search component of product `j` (1-based).
    pub fn xi(&self, j: usize) -> f64 {
        self.beta[j - 1]
    }

    /// Flattened `(β₁, …, β_J, log c)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.log_c);
        v
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let (beta, last) = x.split_at(x.len() - 1);
        Self::new(beta.to_vec(), last[0])
    }

    /// Display names in `to_vec` order.
    pub fn names(num_products: usize) -> Vec<String> {
        (1..=num_products)
            .map(|j| format!("beta{j}"))
            .chain(std::iter::once("log_c".to_string()))
            .collect()
    }
}

/// One consumer's taste shocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerDraws {
    pub mu: Vec<f64>,
    pub eps: Vec<f64>,
    pub eps0: f64,
}

impl ConsumerDraws {
    pub fn from_stream(stream: &RngStream, num_products: usize) -> Self {
        let mut raw = draw_normal_array(stream, 2 * num_products + 1);
        let eps0 = raw.pop().unwrap_or_default();
        let eps = raw.split_off(num_products);
        Self { mu: raw, eps, eps0 }
    }
}

fn check_product(params: &Parameters, j: usize) -> Result<()> {
    if j == 0 || j > params.num_products() {
        Err(Error::InvalidInput(format!(
            "product index {j} outside 1..={}",
            params.num_products()
        )))
    } else {
        Ok(())
    }
}

/// `δ_j = ξ_j + μ_j`.
pub fn pre_search_utility(params: &Parameters, draws: &ConsumerDraws, j: usize) -> Result<f64> {
    check_product(params, j)?;
    Ok(params.xi(j) + draws.mu[j - 1])
}

/// `z_j = δ_j + m`.
pub fn reservation_utility(params: &Parameters, draws: &ConsumerDraws, j: usize, m: f64) -> Result<f64> {
    Ok(pre_search_utility(params, draws, j)? + m)
}

/// `u_j = δ_j + ε_j` for inside products, `u_0 = ε_0` for the outside option.
pub fn post_search_utility(params: &Parameters, draws: &ConsumerDraws, j: usize) -> Result<f64> {
    if j == 0 {
        return Ok(draws.eps0);
    }
    Ok(pre_search_utility(params, draws, j)? + draws.eps[j - 1])
}

/// Observed outcome for one consumer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerRecord {
    /// Products in the order they were opened (1-based).
    pub searched: Vec<usize>,
    /// Purchased product, 0 for the outside option.
    pub purchase: usize,
    /// Observed pre-search components ξ_j, one per inside product.
    pub xi: Vec<f64>,
}

impl ConsumerRecord {
    pub fn num_products(&self) -> usize {
        self.xi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.num_products();
        let mut seen = vec![false; j + 1];
        for &p in &self.searched {
            if p == 0 || p > j {
                return Err(Error::MalformedRecord(format!("searched product {p} outside 1..={j}")));
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::MalformedRecord(format!("product {p} searched twice")));
            }
        }
        if self.purchase != 0 && !self.searched.contains(&self.purchase) {
            return Err(Error::MalformedRecord(format!(
                "purchase {} not among searched {:?}",
                self.purchase, self.searched
            )));
        }
        Ok(())
    }
}

/// Apply the selection, stopping and choice rules to known utilities.
///
/// `z[j-1]`, `u[j-1]` belong to product `j`; `u0` is the outside option.
pub fn apply_policy(z: &[f64], u: &[f64], u0: f64) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (1..=z.len()).collect();
    // Stable sort keeps ascending index among equal z.
    order.sort_by(|&a, &b| z[b - 1].total_cmp(&z[a - 1]));
    let mut best = u0;
    let mut searched = Vec::new();
    for p in order {
        if best >= z[p - 1] {
            break;
        }
        searched.push(p);
        best = best.max(u[p - 1]);
    }
    let mut purchase = 0;
    let mut best_u = u0;
    let mut ascending = searched.clone();
    ascending.sort_unstable();
    for p in ascending {
        if u[p - 1] > best_u {
            best_u = u[p - 1];
            purchase = p;
        }
    }
    (searched, purchase)
}

/// Simulate one consumer's search and purchase; `m` is the margin for
/// the common cost `exp(log_c)`.
pub fn simulate_consumer(params: &Parameters, draws: &ConsumerDraws, m: f64) -> ConsumerRecord {
    let j = params.num_products();
    let delta: Vec<f64> = (1..=j).map(|p| params.xi(p) + draws.mu[p - 1]).collect();
    let z: Vec<f64> = delta.iter().map(|d| d + m).collect();
    let u: Vec<f64> = delta.iter().zip(&draws.eps).map(|(d, e)| d + e).collect();
    let (searched, purchase) = apply_policy(&z, &u, draws.eps0);
    ConsumerRecord {
        searched,
        purchase,
        xi: params.beta.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub stream: RngStream,
    pub params: Parameters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub consumers: Vec<ConsumerRecord>,
    pub num_products: usize,
    pub meta: Option<DatasetMeta>,
}

impl Dataset {
    pub fn new(consumers: Vec<ConsumerRecord>, num_products: usize) -> Result<Self> {
        for (i, c) in consumers.iter().enumerate() {
            if c.num_products() != num_products {
                return Err(Error::MalformedRecord(format!(
                    "consumer {i} has {} products, expected {num_products}",
                    c.num_products()
                )));
            }
            c.validate()?;
        }
        Ok(Self {
            consumers,
            num_products,
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.consumers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumers.is_empty()
    }

    /// One row per (consumer, product) preceded by the outside-option row:
    /// `consumer_id,product_id,xi,searched_rank,purchased`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "consumer_id,product_id,xi,searched_rank,purchased")?;
        for (i, rec) in self.consumers.iter().enumerate() {
            writeln!(out, "{i},0,{:.16e},0,{}", 0.0, u8::from(rec.purchase == 0))?;
            for p in 1..=self.num_products {
                let rank = rec.searched.iter().position(|&s| s == p).map_or(0, |r| r + 1);
                writeln!(
                    out,
                    "{i},{p},{:.16e},{rank},{}",
                    rec.xi[p - 1],
                    u8::from(rec.purchase == p)
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        #[derive(Default)]
        struct Rows {
            xi: BTreeMap<usize, f64>,
            ranks: Vec<(usize, usize)>,
            purchases: Vec<usize>,
        }
        let bad = |line: usize, msg: &str| Error::InvalidInput(format!("dataset line {line}: {msg}"));
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))??;
        if header.trim() != "consumer_id,product_id,xi,searched_rank,purchased" {
            return Err(bad(1, "unexpected header"));
        }
        let mut by_consumer: BTreeMap<usize, Rows> = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(bad(lineno, "expected 5 columns"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(lineno, &e.to_string()));
            let id = int(fields[0])?;
            let product = int(fields[1])?;
            let xi = fields[2].parse::<f64>().map_err(|e| bad(lineno, &e.to_string()))?;
            let rank = int(fields[3])?;
            let purchased = int(fields[4])?;
            let rows = by_consumer.entry(id).or_default();
            if purchased > 1 {
                return Err(bad(lineno, "purchased must be 0 or 1"));
            }
            if purchased == 1 {
                rows.purchases.push(product);
            }
            if product == 0 {
                if rank != 0 {
                    return Err(bad(lineno, "outside option cannot be searched"));
                }
                continue;
            }
            if rows.xi.insert(product, xi).is_some() {
                return Err(bad(lineno, "duplicate product row"));
            }
            if rank > 0 {
                rows.ranks.push((rank, product));
            }
        }
        let mut num_products = None;
        let mut consumers = Vec::with_capacity(by_consumer.len());
        for (expected, (id, mut rows)) in by_consumer.into_iter().enumerate() {
            if id != expected {
                return Err(Error::InvalidInput(format!("consumer ids not contiguous at {id}")));
            }
            let j = rows.xi.len();
            if rows.xi.keys().copied().ne(1..=j) {
                return Err(Error::MalformedRecord(format!("consumer {id}: products not 1..={j}")));
            }
            if *num_products.get_or_insert(j) != j {
                return Err(Error::MalformedRecord(format!("consumer {id}: product count differs")));
            }
            rows.ranks.sort_unstable();
            if rows.ranks.iter().enumerate().any(|(k, &(r, _))| r != k + 1) {
                return Err(Error::MalformedRecord(format!("consumer {id}: search ranks not 1..=|S|")));
            }
            let purchase = match rows.purchases.as_slice() {
                [p] => *p,
                _ => return Err(Error::MalformedRecord(format!("consumer {id}: need exactly one purchase"))),
            };
            consumers.push(ConsumerRecord {
                searched: rows.ranks.iter().map(|&(_, p)| p).collect(),
                purchase,
                xi: rows.xi.into_values().collect(),
            });
        }
        let num_products = num_products.ok_or_else(|| Error::InvalidInput("dataset has no consumers".into()))?;
        Self::new(consumers, num_products)
    }
}

/// Simulate `n` consumers at `params`; consumer `i` uses `stream.substream(i)`.
pub fn simulate_dataset(params: &Parameters, n: usize, stream: &RngStream) -> Result<Dataset> {
    simulate_dataset_with(params, n, stream, Execution::default())
}

pub fn simulate_dataset_with(
    params: &Parameters,
    n: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<Dataset> {
    let j = params.num_products();
    if n == 0 || j == 0 {
        return Err(Error::InvalidInput("need at least one consumer and one product".into()));
    }
    let m = solve_m_newton(params.cost(), DEFAULT_TOL)?;
    let consumers = par::map_range(exec, n, |i| {
        let draws = ConsumerDraws::from_stream(&stream.substream(i as u64), j);
        simulate_consumer(params, &draws, m)
    });
    Ok(Dataset {
        consumers,
        num_products: j,
        meta: Some(DatasetMeta {
            stream: stream.clone(),
            params: params.clone(),
        }),
    })
}
