//! Straight-line reimplementation of the search policy and of the
//! likelihood margins, written against the model's definitions rather than
//! the library code. Used as an oracle by the integration tests.

#![allow(dead_code)]

use seqsearch::model::{ConsumerDraws, Parameters};

/// Utilities for one consumer under one draw; index 0 of `z`/`u` is product 1.
#[derive(Clone, Debug)]
pub struct Utilities {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub u0: f64,
}

impl Utilities {
    pub fn from_draws(beta: &[f64], mu: &[f64], eps: &[f64], eps0: f64, m: f64) -> Self {
        let mut z = Vec::new();
        let mut u = Vec::new();
        for j in 0..beta.len() {
            z.push(beta[j] + mu[j] + m);
            u.push(beta[j] + mu[j] + eps[j]);
        }
        Utilities { z, u, u0: eps0 }
    }

    pub fn from_consumer(params: &Parameters, draws: &ConsumerDraws, m: f64) -> Self {
        Self::from_draws(&params.beta, &draws.mu, &draws.eps, draws.eps0, m)
    }

    fn utility(&self, product: usize) -> f64 {
        if product == 0 {
            self.u0
        } else {
            self.u[product - 1]
        }
    }
}

/// Run the policy one box at a time.
pub fn oracle_policy(w: &Utilities) -> (Vec<usize>, usize) {
    let j = w.z.len();
    let mut opened: Vec<usize> = Vec::new();
    let mut best_seen = w.u0;
    loop {
        // highest z among closed boxes, lowest index on ties
        let mut next: Option<usize> = None;
        for p in 1..=j {
            if opened.contains(&p) {
                continue;
            }
            match next {
                None => next = Some(p),
                Some(q) => {
                    if w.z[p - 1] > w.z[q - 1] {
                        next = Some(p);
                    }
                }
            }
        }
        let Some(p) = next else { break };
        if best_seen >= w.z[p - 1] {
            break;
        }
        opened.push(p);
        if w.u[p - 1] > best_seen {
            best_seen = w.u[p - 1];
        }
    }
    // outside option first, then ascending index, strict improvement only
    let mut choice = 0;
    for p in 1..=j {
        if opened.contains(&p) && w.u[p - 1] > w.utility(choice) {
            choice = p;
        }
    }
    (opened, choice)
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for v in values {
        if v > best {
            best = v;
        }
    }
    best
}

/// The four margin families by direct evaluation of their definitions.
pub fn oracle_v(searched: &[usize], purchase: usize, w: &Utilities) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let j = w.z.len();
    let unsearched: Vec<usize> = (1..=j).filter(|p| !searched.contains(p)).collect();
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for h in 0..searched.len() {
        let this = searched[h];
        let first_h = &searched[..=h];
        let rest = max_of((1..=j).filter(|p| !first_h.contains(p)).map(|p| w.z[p - 1]));
        v1.push(w.z[this - 1] - rest);
        let prior = max_of(std::iter::once(w.u0).chain(searched[..h].iter().map(|&p| w.u[p - 1])));
        v2.push(w.z[this - 1] - prior);
    }
    let in_hand = max_of(std::iter::once(w.u0).chain(searched.iter().map(|&p| w.u[p - 1])));
    let v3 = in_hand - max_of(unsearched.iter().map(|&p| w.z[p - 1]));
    let mut pool = vec![0];
    pool.extend_from_slice(searched);
    let others = max_of(pool.iter().filter(|&&p| p != purchase).map(|&p| w.utility(p)));
    let v4 = w.utility(purchase) - others;
    (v1, v2, v3, v4)
}

/// Whether the observed record is what the policy would produce under
/// `w`, checked rule by rule with weak inequalities.
pub fn oracle_consistent(searched: &[usize], purchase: usize, w: &Utilities) -> bool {
    let j = w.z.len();
    for h in 0..searched.len() {
        let this = w.z[searched[h] - 1];
        // selection: no box outside the first h+1 opened has a higher z
        for p in 1..=j {
            if !searched[..=h].contains(&p) && w.z[p - 1] > this {
                return false;
            }
        }
        // continuation: z beats everything already in hand
        if w.u0 > this {
            return false;
        }
        for &q in &searched[..h] {
            if w.u[q - 1] > this {
                return false;
            }
        }
    }
    // stopping: best in hand beats every unopened z
    let mut in_hand = w.u0;
    for &q in searched {
        if w.u[q - 1] > in_hand {
            in_hand = w.u[q - 1];
        }
    }
    for p in 1..=j {
        if !searched.contains(&p) && w.z[p - 1] > in_hand {
            return false;
        }
    }
    // choice: the purchase is at least as good as every other option in hand
    let chosen = w.utility(purchase);
    if purchase != 0 && w.u0 > chosen {
        return false;
    }
    for &q in searched {
        if q != purchase && w.u[q - 1] > chosen {
            return false;
        }
    }
    true
}

pub fn oracle_crude(searched: &[usize], purchase: usize, draws: &[Utilities]) -> f64 {
    let hits = draws.iter().filter(|w| oracle_consistent(searched, purchase, w)).count();
    hits as f64 / draws.len() as f64
}

pub fn oracle_kernel(searched: &[usize], purchase: usize, draws: &[Utilities], rho: f64) -> f64 {
    let mut total = 0.0;
    for w in draws {
        let (v1, v2, v3, v4) = oracle_v(searched, purchase, w);
        let mut denom = 1.0;
        for v in v1.iter().chain(&v2).chain([&v3, &v4]) {
            denom += (-rho * v).min(700.0).exp();
        }
        total += 1.0 / denom;
    }
    total / draws.len() as f64
}

/// Per-draw utilities for consumer `i` of a draw set.
pub fn utilities_for(beta: &[f64], draws: &seqsearch::likelihood::ConsumerDrawSlice<'_>, m: f64) -> Vec<Utilities> {
    (0..draws.num_draws())
        .map(|d| Utilities::from_draws(beta, draws.mu(d), draws.eps(d), draws.eps0[d], m))
        .collect()
}
