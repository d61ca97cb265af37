//! The reservation-margin equation `c = φ(m) + m·(Φ(m) − 1)`.
//!
//! `m(c)` is the shift of the reservation utility above pre-search utility
//! for a searcher with standard-normal post-search shocks and search cost
//! `c`. It is strictly decreasing in `c`, with `m(φ(0)) = 0`. Three
//! interchangeable solvers are provided: safeguarded Newton, the
//! contraction `Γ(m) = −c + φ(m) + m·Φ(m)`, and a pre-computed
//! [`LookupTable`] with linear interpolation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{norm_pdf, norm_sf};

pub const DEFAULT_TOL: f64 = 1e-12;

const NEWTON_MAX_ITER: usize = 200;
const CONTRACTION_MAX_ITER: usize = 1_000_000;
const BRACKET: (f64, f64) = (-10.0, 10.0);

/// Search cost implied by reservation margin `m`.
pub fn cost_of_m(m: f64) -> f64 {
    // φ(m) − m·(1 − Φ(m)); the upper tail is taken directly so large m keeps
    // its relative accuracy.
    norm_pdf(m) - m * norm_sf(m)
}

fn check_cost(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveCost(c))
    }
}

/// Solve for `m` by Newton's method on `q(m) = cost_of_m(m) − c`.
///
/// `q'(m) = Φ(m) − 1`. Steps that leave the current bracket are replaced by
/// bisection. Iteration continues past `|q| ≤ tol` until the step stalls at
/// machine precision, so the returned root is accurate in `m` as well.
pub fn solve_m_newton(c: f64, tol: f64) -> Result<f64> {
    check_cost(c)?;
    let (mut lo, mut hi) = BRACKET;
    // cost_of_m(m) ~ -m as m -> -inf; widen for very large costs.
    if cost_of_m(lo) < c {
        lo = -c - 2.0;
    }
    let mut m = 0.0_f64;
    let mut q = cost_of_m(m) - c;
    for _ in 0..NEWTON_MAX_ITER {
        if q == 0.0 {
            return Ok(m);
        }
        // q is decreasing: q > 0 means the root lies to the right.
        if q > 0.0 {
            lo = lo.max(m);
        } else {
            hi = hi.min(m);
        }
        let slope = -norm_sf(m);
        let mut next = m - q / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = next - m;
        m = next;
        q = cost_of_m(m) - c;
        if step.abs() <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
            break;
        }
    }
    if q.abs() <= tol {
        Ok(m)
    } else {
        Err(Error::NoConvergence {
            cost: c,
            residual: q.abs(),
            iterations: NEWTON_MAX_ITER,
        })
    }
}

/// The contraction map `Γ(m) = −c + φ(m) + m·Φ(m)`; its fixed point solves
/// the reservation equation and `Γ(m) − m = cost_of_m(m) − c`.
///
/// Evaluated as `m + (cost_of_m(m) − c)`, which keeps the small residual
/// accurate when `Φ(m)` is close to one.
pub fn contraction_map(m: f64, c: f64) -> f64 {
    m + (cost_of_m(m) - c)
}

/// Solve for `m` by iterating [`contraction_map`] from `m = 0`.
///
/// The map's modulus is `Φ(m)`, which approaches one for small costs, so
/// the plain iteration is accelerated with Aitken's Δ² step (Steffensen's
/// scheme) on every pair of map applications. Terminates when successive
/// iterates differ by at most `tol`.
pub fn solve_m_contraction(c: f64, tol: f64) -> Result<f64> {
    check_cost(c)?;
    // Γ(m) − m = cost_of_m(m) − c is decreasing in m, so every evaluated
    // point tightens a bracket around the fixed point. Extrapolations that
    // leave the bracket are replaced by its midpoint.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let tighten = |m: f64, image: f64, lo: &mut f64, hi: &mut f64| {
        if image > m {
            *lo = lo.max(m);
        } else if image < m {
            *hi = hi.min(m);
        }
    };
    let mut m = 0.0_f64;
    let mut iterations = 0;
    while iterations < CONTRACTION_MAX_ITER {
        // Differences of the map are taken from the residuals directly;
        // differencing rounded iterates loses them when Φ(m) ≈ 1.
        let r0 = cost_of_m(m) - c;
        let m1 = m + r0;
        let r1 = cost_of_m(m1) - c;
        iterations += 2;
        if m1 == m {
            return Ok(m);
        }
        tighten(m, m1, &mut lo, &mut hi);
        tighten(m1, m1 + r1, &mut lo, &mut hi);
        let denom = r1 - r0;
        let aitken = m - r0 * (m1 - m) / denom;
        let accelerated = denom != 0.0 && aitken > lo && aitken < hi;
        let next = if accelerated {
            aitken
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            m1 + r1
        };
        if !next.is_finite() {
            break;
        }
        let step = (next - m).abs();
        m = next;
        // A fallback step says nothing about the distance to the root; only
        // an accepted extrapolation or a collapsed bracket ends the loop.
        let settled = (accelerated && step <= tol) || hi - lo <= tol;
        if settled && (contraction_map(m, c) - m).abs() <= tol {
            return Ok(m);
        }
    }
    Err(Error::MaxIterationsExceeded {
        cost: c,
        iterations,
    })
}

/// Pre-computed `m` on an equally spaced grid of costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub c_min: f64,
    pub c_max: f64,
    pub fineness: f64,
    /// One value per node, ordered by ascending cost.
    pub m_values: Vec<f64>,
}

impl LookupTable {
    pub fn node_cost(&self, k: usize) -> f64 {
        self.c_min + k as f64 * self.fineness
    }

    pub fn len(&self) -> usize {
        self.m_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_values.is_empty()
    }

    /// Writes the table as two columns `c,m`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "c,m")?;
        for (k, m) in self.m_values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.node_cost(k), m)?;
        }
        Ok(())
    }

    /// Reads a table written by [`LookupTable::write_csv`]. The grid must be
    /// equally spaced.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut costs = Vec::new();
        let mut m_values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let (c, m) = line
                .split_once(',')
                .ok_or_else(|| Error::InvalidInput(format!("line {}: expected c,m", lineno + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))
            };
            costs.push(parse(c)?);
            m_values.push(parse(m)?);
        }
        if costs.len() < 2 {
            return Err(Error::InvalidInput("table needs at least two nodes".into()));
        }
        let c_min = costs[0];
        let fineness = (costs[costs.len() - 1] - c_min) / (costs.len() - 1) as f64;
        Ok(Self {
            c_min,
            c_max: costs[costs.len() - 1],
            fineness,
            m_values,
        })
    }
}

/// Tabulate `m` at costs `c_min, c_min + fineness, …` up to `c_max`.
///
/// Nodes are solved independently with [`solve_m_newton`] at the default
/// tolerance. When the range is not a whole number of steps the table ends
/// at the last node below `c_max`.
pub fn build_lookup(c_min: f64, c_max: f64, fineness: f64) -> Result<LookupTable> {
    if !(c_min > 0.0 && c_max > c_min && fineness > 0.0) {
        return Err(Error::InvalidInput(format!(
            "table requires 0 < c_min < c_max and fineness > 0 (got {c_min}, {c_max}, {fineness})"
        )));
    }
    let steps = ((c_max - c_min) / fineness + 1e-9).floor() as usize;
    let m_values = (0..=steps)
        .map(|k| solve_m_newton(c_min + k as f64 * fineness, DEFAULT_TOL))
        .collect::<Result<Vec<_>>>()?;
    Ok(LookupTable {
        c_min,
        c_max: c_min + steps as f64 * fineness,
        fineness,
        m_values,
    })
}

/// Linear interpolation of `m` between the table nodes bracketing `c`.
pub fn lookup_m(table: &LookupTable, c: f64) -> Result<f64> {
    let out_of_range = || Error::OutOfRange {
        cost: c,
        min: table.c_min,
        max: table.c_max,
    };
    if !(c >= table.c_min && c <= table.c_max) || table.len() < 2 {
        return Err(out_of_range());
    }
    let pos = (c - table.c_min) / table.fineness;
    let nearest = pos.round();
    if (pos - nearest).abs() <= 1e-9 {
        return Ok(table.m_values[(nearest as usize).min(table.len() - 1)]);
    }
    let k = (pos.floor() as usize).min(table.len() - 2);
    let t = pos - k as f64;
    let (a, b) = (table.m_values[k], table.m_values[k + 1]);
    Ok(a + t * (b - a))
}

/// Which solver supplies `m(c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Newton,
    Contraction,
    Table,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(Self::Newton),
            "contraction" => Ok(Self::Contraction),
            "table" => Ok(Self::Table),
            other => Err(Error::InvalidInput(format!("unknown solve method `{other}`"))),
        }
    }
}
