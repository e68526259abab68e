//! Truncated series for the linear family, the cutoff rule and multinomial
//! coefficients.

use serde::Serialize;

use super::{check_epsilon, LinearParams, ProbError};
use crate::classes::LinearClass;
use crate::numeric::{ln_binomial, CompensatedSum, LnFactorials};

/// Upper limit on `k·M²`, the work of [`series_linear`].
pub const SERIES_LIMIT: f64 = 1e8;

/// `ln (Σl choose l1, ..., lk)`, built up as a product of binomials:
/// `(Σl; l) = (Σl choose lk) · (Σl - lk; l1, ..., l(k-1))`.
pub fn multinomial_log(l: &[u64]) -> f64 {
    let mut total = 0u64;
    let mut acc = CompensatedSum::new();
    for &lj in l {
        total += lj;
        acc.add(ln_binomial(total, lj));
    }
    acc.value()
}

/// In-class weights `q_r1, ..., q_rk` of a linear class.
pub(crate) fn class_weights(
    params: &LinearParams,
    cls: &LinearClass,
) -> Result<Vec<f64>, ProbError> {
    let n = params.n();
    cls.0
        .iter()
        .map(|&i| {
            if (1..=n).contains(&i) {
                Ok(params.q[i - 1])
            } else {
                Err(ProbError::VariableOutOfRange { index: i, n })
            }
        })
        .collect()
}

/// Bound on the series terms beyond `M`: `(1-p)(pQ)^(M+1) / (1-pQ)`.
pub(crate) fn tail_bound(p: f64, total_weight: f64, m: usize) -> Result<f64, ProbError> {
    let pq = p * total_weight;
    if pq >= 1.0 {
        return Err(ProbError::TailUnbounded(pq));
    }
    Ok((1.0 - p) * pq.powi(m as i32 + 1) / (1.0 - pq))
}

/// `D[i] = Σ_{l1+...+lk = i, lj ≥ 1} (i; l) Π w_j^lj` for `i = 0..=m`,
/// one weight at a time:
/// `D_j(i) = Σ_l (i choose l) w_j^l D_(j-1)(i - l)`.
pub(crate) fn inner_sums(weights: &[f64], m: usize) -> Vec<f64> {
    let lf = LnFactorials::new(m);
    let mut d = vec![0.0; m + 1];
    d[0] = 1.0;
    for (j, &w) in weights.iter().enumerate() {
        let mut next = vec![0.0; m + 1];
        if w > 0.0 {
            let ln_w = w.ln();
            for (i, slot) in next.iter_mut().enumerate().skip(j + 1) {
                let mut acc = CompensatedSum::new();
                for l in 1..=i - j {
                    let prev = d[i - l];
                    if prev != 0.0 {
                        acc.add((lf.ln_binomial(i, l) + l as f64 * ln_w).exp() * prev);
                    }
                }
                *slot = acc.value();
            }
        }
        d = next;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    /// Partial sum over `i = k..=M`.
    pub value: f64,
    /// Bound on the omitted terms `i > M`.
    pub tail_bound: f64,
}

pub(crate) fn series_weights(p: f64, weights: &[f64], m: usize) -> Result<SeriesValue, ProbError> {
    let k = weights.len();
    let total: f64 = weights.iter().sum();
    if k == 0 {
        return Ok(SeriesValue {
            value: 1.0 - p,
            tail_bound: 0.0,
        });
    }
    if m < k {
        return Err(ProbError::CutoffBelowClassSize { m, k });
    }
    let work = k as f64 * (m as f64).powi(2);
    if work > SERIES_LIMIT {
        return Err(ProbError::SeriesTooLarge(work));
    }
    let tail = tail_bound(p, total, m)?;
    let d = inner_sums(weights, m);
    let ln_p = p.ln();
    let mut acc = CompensatedSum::new();
    for (i, &di) in d.iter().enumerate().skip(k) {
        acc.add((1.0 - p) * (i as f64 * ln_p).exp() * di);
    }
    Ok(SeriesValue {
        value: acc.value(),
        tail_bound: tail,
    })
}

/// Partial sum of the series for `i = k..=M` with every partition
/// included, and the bound on what is left out.
pub fn series_linear(
    params: &LinearParams,
    cls: &LinearClass,
    m: usize,
) -> Result<SeriesValue, ProbError> {
    series_weights(params.p, &class_weights(params, cls)?, m)
}

pub(crate) fn choose_m_weights(
    p: f64,
    total_weight: f64,
    k: usize,
    epsilon: f64,
) -> Result<usize, ProbError> {
    check_epsilon(epsilon)?;
    let pq = p * total_weight;
    if pq >= 1.0 {
        return Err(ProbError::TailUnbounded(pq));
    }
    if pq <= 0.0 {
        return Ok(k);
    }
    let m = ((epsilon / 2.0) * (1.0 - pq) / (1.0 - p)).ln() / pq.ln();
    if m.is_finite() && m > k as f64 {
        Ok(m.floor() as usize)
    } else {
        Ok(k)
    }
}

/// Smallest-formula cutoff whose series tail is at most `epsilon / 2`,
/// never below the class size.
pub fn choose_m(
    params: &LinearParams,
    cls: &LinearClass,
    epsilon: f64,
) -> Result<usize, ProbError> {
    let w = class_weights(params, cls)?;
    choose_m_weights(params.p, w.iter().sum(), w.len(), epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multinomial_values() {
        assert!((multinomial_log(&[2, 1]) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(multinomial_log(&[1]), 0.0);
        assert!((multinomial_log(&[5, 5, 5]) - 756_756f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn single_variable_geometric_series() {
        let params = LinearParams::new(0.5, vec![1.0]).unwrap();
        let s = series_linear(&params, &LinearClass::new([1]), 20).unwrap();
        assert!((s.value - 0.5 * (1.0 - 0.5f64.powi(20))).abs() < 1e-15);
        assert!((s.tail_bound - 0.5f64.powi(21)).abs() < 1e-20);
    }

    #[test]
    fn single_partition() {
        let params = LinearParams::uniform(0.5, 2).unwrap();
        let s = series_linear(&params, &LinearClass::new([1, 2]), 2).unwrap();
        assert!((s.value - 0.0625).abs() < 1e-16);
        assert!(matches!(
            series_linear(&params, &LinearClass::new([1, 2]), 1),
            Err(ProbError::CutoffBelowClassSize { m: 1, k: 2 })
        ));
    }

    #[test]
    fn cutoff_examples() {
        let one = LinearParams::new(0.5, vec![1.0]).unwrap();
        let cls = LinearClass::new([1]);
        assert_eq!(choose_m(&one, &cls, 1e-3).unwrap(), 10);
        assert_eq!(choose_m(&one, &cls, 0.999_999).unwrap(), 1);
        let high = LinearParams::new(0.9, vec![1.0]).unwrap();
        assert_eq!(choose_m(&high, &cls, 1e-6).unwrap(), 137);
        assert!(tail_bound(0.9, 1.0, 137).unwrap() <= 5e-7);
    }
}
