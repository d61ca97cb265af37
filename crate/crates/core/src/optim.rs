//! Derivative-free minimisation: Nelder–Mead simplex and an
//! augmented-Lagrangian wrapper for equality constraints.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Offset added to each coordinate of the start to form the simplex.
    pub step: f64,
    /// Stop when the spread of objective values across the simplex is at most this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this distance (max-norm) of the best.
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            step: 0.25,
            f_tol: 1e-8,
            x_tol: 1e-6,
            max_evals: 50_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub evals: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Budget<F> {
    f: F,
    evals: usize,
    max: usize,
}

impl<F: FnMut(&[f64]) -> f64> Budget<F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.evals >= self.max {
            return None;
        }
        self.evals += 1;
        let v = (self.f)(x);
        Some(if v.is_nan() { f64::INFINITY } else { v })
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimise `objective` from `start` with the standard simplex moves
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5). The first
/// evaluation is at `start`.
pub fn nelder_mead<F>(objective: F, start: &[f64], opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut budget = Budget {
        f: objective,
        evals: 0,
        max: opts.max_evals,
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut exhausted = false;
    for k in 0..=n {
        let mut x = start.to_vec();
        if k > 0 {
            x[k - 1] += opts.step;
        }
        match budget.eval(&x) {
            Some(f) => simplex.push((x, f)),
            None => {
                exhausted = true;
                break;
            }
        }
    }
    if exhausted || simplex.len() < n + 1 {
        let (x, f) = simplex
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or_else(|| (start.to_vec(), f64::INFINITY));
        return SimplexOutcome {
            x,
            f,
            converged: false,
            evals: budget.evals,
        };
    }

    let converged = loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = if best.is_finite() && worst.is_finite() {
            worst - best
        } else if best == worst {
            0.0
        } else {
            f64::INFINITY
        };
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol || diameter <= opts.x_tol {
            break true;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst_x = simplex[n].0.clone();
        let second_worst = simplex[n - 1].1;

        let xr = affine(&centroid, &worst_x, -REFLECT);
        let Some(fr) = budget.eval(&xr) else { break false };

        if fr < best {
            let xe = affine(&centroid, &worst_x, -EXPAND);
            let Some(fe) = budget.eval(&xe) else {
                simplex[n] = (xr, fr);
                break false;
            };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[n] = (xr, fr);
            continue;
        }

        let outside = fr < worst;
        let xc = if outside {
            affine(&centroid, &xr, CONTRACT)
        } else {
            affine(&centroid, &worst_x, CONTRACT)
        };
        let Some(fc) = budget.eval(&xc) else { break false };
        let accepted = if outside { fc <= fr } else { fc < worst };
        if accepted {
            simplex[n] = (xc, fc);
            continue;
        }

        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = affine(&best_x, &vertex.0, SHRINK);
            match budget.eval(&x) {
                Some(f) => *vertex = (x, f),
                None => break,
            }
        }
        if budget.evals >= budget.max {
            break false;
        }
    };

    let (x, f) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("simplex is non-empty");
    SimplexOutcome {
        x,
        f,
        converged,
        evals: budget.evals,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedLagrangianOptions {
    pub inner: SimplexOptions,
    pub penalty0: f64,
    pub growth: f64,
    pub max_outer: usize,
    pub constraint_tol: f64,
}

impl Default for AugmentedLagrangianOptions {
    fn default() -> Self {
        Self {
            inner: SimplexOptions::default(),
            penalty0: 10.0,
            growth: 10.0,
            max_outer: 12,
            constraint_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedLagrangianOutcome {
    pub x: Vec<f64>,
    /// Objective (without penalty terms) at `x`.
    pub f: f64,
    pub constraints: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub penalty: f64,
    pub converged: bool,
    pub evals: usize,
    pub outer_rounds: usize,
}

impl AugmentedLagrangianOutcome {
    pub fn max_violation(&self) -> f64 {
        max_abs(&self.constraints)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

// Per-round tightening of the inner simplex tolerances. A simplex resolves
// x only to about sqrt(f_tol / curvature), far coarser than the constraint
// tolerance, so later rounds must stop on near-stagnation instead.
const INNER_F_TIGHTEN: f64 = 1e-2;
const INNER_X_TIGHTEN: f64 = 1e-1;
const INNER_F_FLOOR: f64 = 1e-15;
const INNER_X_FLOOR: f64 = 1e-11;
// Warm-started rounds begin from a smaller simplex.
const INNER_STEP_SHRINK: f64 = 0.1;
const INNER_STEP_FLOOR: f64 = 1e-4;

/// Minimise `objective(x)` subject to `constraints(x) = 0`.
///
/// Each outer round minimises `f + λ·h + (ν/2)|h|²` with [`nelder_mead`]
/// started at the previous solution, then sets `λ ← λ + ν h`. Round `k`
/// runs the simplex with `f_tol·10⁻²⁽ᵏ⁻¹⁾` and `x_tol·10⁻⁽ᵏ⁻¹⁾`. The penalty
/// `ν` grows by `growth` whenever the violation did not shrink by a factor
/// of four. Converged means the last inner solve converged and every
/// `|h_k| ≤ constraint_tol`.
pub fn augmented_lagrangian<F, H>(
    mut objective: F,
    mut constraints: H,
    start: &[f64],
    opts: &AugmentedLagrangianOptions,
) -> AugmentedLagrangianOutcome
where
    F: FnMut(&[f64]) -> f64,
    H: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x = start.to_vec();
    let mut h = constraints(&x);
    let mut multipliers = vec![0.0; h.len()];
    let mut penalty = opts.penalty0;
    let mut evals = 0;
    let mut previous_violation = f64::INFINITY;
    let mut converged = false;
    let mut rounds = 0;

    while rounds < opts.max_outer {
        rounds += 1;
        let lambda = multipliers.clone();
        let nu = penalty;
        let scale = (rounds - 1) as i32;
        let inner_opts = SimplexOptions {
            f_tol: (opts.inner.f_tol * INNER_F_TIGHTEN.powi(scale)).max(INNER_F_FLOOR),
            x_tol: (opts.inner.x_tol * INNER_X_TIGHTEN.powi(scale)).max(INNER_X_FLOOR),
            step: (opts.inner.step * INNER_STEP_SHRINK.powi(scale)).max(INNER_STEP_FLOOR),
            ..opts.inner.clone()
        };
        let inner = nelder_mead(
            |y| {
                let hy = constraints(y);
                let linear: f64 = lambda.iter().zip(&hy).map(|(l, c)| l * c).sum();
                let quad: f64 = hy.iter().map(|c| c * c).sum();
                objective(y) + linear + 0.5 * nu * quad
            },
            &x,
            &inner_opts,
        );
        evals += inner.evals;
        x = inner.x;
        h = constraints(&x);
        let violation = max_abs(&h);
        if inner.converged && violation <= opts.constraint_tol {
            converged = true;
            break;
        }
        for (l, c) in multipliers.iter_mut().zip(&h) {
            *l += penalty * c;
        }
        if violation > 0.25 * previous_violation {
            penalty *= opts.growth;
        }
        previous_violation = violation;
    }

    let f = objective(&x);
    AugmentedLagrangianOutcome {
        x,
        f,
        constraints: h,
        multipliers,
        penalty,
        converged,
        evals,
        outer_rounds: rounds,
    }
}
