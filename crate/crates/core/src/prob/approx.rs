//! Truncated, pruned series for a linear class.
//!
//! Each inner sum over partitions `l` of `i` is evaluated best-first from the
//! mode of `κ`, stopping once the skipped partitions are guaranteed to add at
//! most `ε' = ε / (2 (M - k + 1))`. Together with the tail beyond `M` the
//! total error stays below `ε`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::Serialize;

use super::series::{choose_m_weights, class_weights, inner_sums, tail_bound};
use super::{check_epsilon, LinearParams, ProbError};
use crate::classes::LinearClass;
use crate::numeric::{binomial_f64, binomial_u128, CompensatedSum, LnFactorials};

/// Budget on `required · k²` summed over all `i`, the neighbour evaluations
/// of best-first search. Once spent, remaining inner sums come from the full
/// dynamic program, which only tightens the error.
pub const SEARCH_WORK_LIMIT: u128 = 4_000_000;

/// Relative shrink on `γ` that absorbs rounding in the skip budget.
const GAMMA_SHRINK: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub i: usize,
    /// Partitions whose `κ` was added.
    pub included: u128,
    /// All compositions of `i` into `k` positive parts.
    pub total: u128,
    /// Fraction of partitions allowed to be skipped.
    pub gamma: f64,
    /// Inner sum came from the dynamic program.
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub estimate: f64,
    pub error_bound: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub mbar: f64,
    pub iterations: Vec<IterationReport>,
}

struct Entry {
    ln_kappa: f64,
    l: Vec<u32>,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Largest κ first; among equal κ the lexicographically smallest vector.
    fn cmp(&self, other: &Self) -> Ordering {
        self.ln_kappa
            .total_cmp(&other.ln_kappa)
            .then_with(|| other.l.cmp(&self.l))
    }
}

struct Kappa<'a> {
    lf: &'a LnFactorials,
    ln_w: &'a [f64],
}

impl Kappa<'_> {
    fn ln(&self, i: usize, l: &[u32]) -> f64 {
        let mut v = self.lf.get(i);
        for (&lj, &lw) in l.iter().zip(self.ln_w) {
            v += lj as f64 * lw - self.lf.get(lj as usize);
        }
        v
    }
}

/// Maximiser of `κ` over compositions of `i` into `k = w.len()` positive
/// parts. `κ` is concave along exchange moves, so a local optimum under
/// single-unit exchanges is global.
fn mode_point(i: usize, w: &[f64], ln_w: &[f64]) -> Vec<u32> {
    let total: f64 = w.iter().sum();
    let mut l: Vec<u32> = w
        .iter()
        .map(|&x| ((i as f64 * x / total).floor() as u32).max(1))
        .collect();
    let mut s: usize = l.iter().map(|&x| x as usize).sum();
    while s > i {
        let j = (0..l.len())
            .max_by_key(|&j| (l[j], std::cmp::Reverse(j)))
            .unwrap();
        l[j] -= 1;
        s -= 1;
    }
    let gain = |l: &[u32], j: usize| ln_w[j] - ((l[j] + 1) as f64).ln();
    while s < i {
        let j = (0..l.len())
            .max_by(|&a, &b| gain(&l, a).total_cmp(&gain(&l, b)).then(b.cmp(&a)))
            .unwrap();
        l[j] += 1;
        s += 1;
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..l.len() {
            if l[a] < 2 {
                continue;
            }
            let loss = ln_w[a] - (l[a] as f64).ln();
            for b in 0..l.len() {
                if a == b {
                    continue;
                }
                let delta = gain(&l, b) - loss;
                if delta > 1e-12 && best.is_none_or(|(d, _, _)| delta > d) {
                    best = Some((delta, a, b));
                }
            }
        }
        match best {
            Some((_, a, b)) => {
                l[a] -= 1;
                l[b] += 1;
            }
            None => return l,
        }
    }
}

/// Adds the `required` largest `κ` values, best-first from the mode.
/// Returns `None` if some `κ` exceeds `ln_mbar`, which would void the skip
/// bound.
fn best_first(
    kappa: &Kappa,
    i: usize,
    mode: Vec<u32>,
    required: u128,
    ln_mbar: f64,
) -> Option<f64> {
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    seen.insert(mode.clone());
    heap.push(Entry {
        ln_kappa: kappa.ln(i, &mode),
        l: mode,
    });
    let mut acc = CompensatedSum::new();
    let mut count = 0u128;
    while count < required {
        let Entry { ln_kappa, l } = heap.pop()?;
        if ln_kappa > ln_mbar {
            return None;
        }
        acc.add(ln_kappa.exp());
        count += 1;
        for a in 0..l.len() {
            if l[a] < 2 {
                continue;
            }
            for b in 0..l.len() {
                if a == b {
                    continue;
                }
                let mut next = l.clone();
                next[a] -= 1;
                next[b] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Entry {
                        ln_kappa: kappa.ln(i, &next),
                        l: next,
                    });
                }
            }
        }
    }
    Some(acc.value())
}

pub(crate) fn approx_weights(
    p: f64,
    weights: &[f64],
    epsilon: f64,
) -> Result<ApproxReport, ProbError> {
    check_epsilon(epsilon)?;
    let k = weights.len();
    if k == 0 {
        return Ok(ApproxReport {
            estimate: 1.0 - p,
            error_bound: 0.0,
            m: 0,
            mbar: 0.0,
            iterations: Vec::new(),
        });
    }
    let total: f64 = weights.iter().sum();
    if weights.contains(&0.0) {
        // Some variable can never be generated.
        tail_bound(p, total, k)?;
        return Ok(ApproxReport {
            estimate: 0.0,
            error_bound: 0.0,
            m: k,
            mbar: 0.0,
            iterations: Vec::new(),
        });
    }
    let m = choose_m_weights(p, total, k, epsilon)?;
    let tail = tail_bound(p, total, m)?;
    let eps_i = epsilon / (2.0 * (m - k + 1) as f64);

    let lf = LnFactorials::new(m);
    let ln_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let kappa = Kappa {
        lf: &lf,
        ln_w: &ln_w,
    };
    let modes: Vec<Vec<u32>> = (k..=m).map(|i| mode_point(i, weights, &ln_w)).collect();
    let ln_mbar = std::f64::consts::LN_2
        + modes
            .iter()
            .zip(k..)
            .map(|(l, i)| kappa.ln(i, l))
            .fold(f64::NEG_INFINITY, f64::max);

    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut full: Option<Vec<f64>> = None;
    let mut budget = SEARCH_WORK_LIMIT;
    let mut estimate = CompensatedSum::new();
    let mut skipped_bound = CompensatedSum::new();
    let mut iterations = Vec::with_capacity(m - k + 1);
    for (i, mode) in (k..=m).zip(modes) {
        let total_f = binomial_f64(i as u64 - 1, k as u64 - 1);
        let total_n = binomial_u128(i as u64 - 1, k as u64 - 1).unwrap_or(u128::MAX);
        let weight_ln = ln_q + i as f64 * ln_p;
        let ln_gamma = eps_i.ln() - weight_ln - ln_mbar - total_f.ln();
        let gamma = ln_gamma.exp().min(1.0) * GAMMA_SHRINK;
        let required = (((1.0 - gamma) * total_f).ceil() as u128).clamp(1, total_n);

        let work = required.saturating_mul((k * k) as u128);
        let pruned = if work <= budget {
            budget -= work;
            best_first(&kappa, i, mode, required, ln_mbar)
        } else {
            None
        };
        let (inner, included) = match pruned {
            Some(s) => (s, required),
            None => {
                let d = full.get_or_insert_with(|| inner_sums(weights, m));
                (d[i], total_n)
            }
        };
        estimate.add(weight_ln.exp() * inner);
        let skipped = total_n - included;
        if skipped > 0 {
            skipped_bound.add((weight_ln + ln_mbar).exp() * skipped as f64);
        }
        iterations.push(IterationReport {
            i,
            included,
            total: total_n,
            gamma,
            full: pruned.is_none(),
        });
    }
    Ok(ApproxReport {
        estimate: estimate.value().clamp(0.0, 1.0),
        error_bound: tail + skipped_bound.value(),
        m,
        mbar: ln_mbar.exp(),
        iterations,
    })
}

/// Approximate probability of a linear class with error at most `epsilon`.
pub fn approx_linear(
    params: &LinearParams,
    cls: &LinearClass,
    epsilon: f64,
) -> Result<ApproxReport, ProbError> {
    approx_weights(params.p, &class_weights(params, cls)?, epsilon)
}
