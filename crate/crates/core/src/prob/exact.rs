//! Closed-form probability of a linear class by inclusion-exclusion.

use super::series::class_weights;
use super::{LinearParams, ProbError};
use crate::classes::LinearClass;
use crate::numeric::CompensatedSum;

/// Largest class size evaluated exactly; the sum has `2^k` terms.
pub const MAX_EXACT_VARIABLES: usize = 30;

/// All subset sums of `w` with the parity of the subset size.
fn subset_sums(w: &[f64]) -> Vec<(f64, bool)> {
    let mut out = vec![(0.0, false)];
    for &x in w {
        let len = out.len();
        for i in 0..len {
            let (s, odd) = out[i];
            out.push((s + x, !odd));
        }
    }
    out
}

pub(crate) fn exact_weights(p: f64, weights: &[f64]) -> Result<f64, ProbError> {
    let k = weights.len();
    if k > MAX_EXACT_VARIABLES {
        return Err(ProbError::TooManyVariables { k });
    }
    let total: f64 = weights.iter().sum();
    if 1.0 - p * total < 1e-300 {
        return Err(ProbError::DenominatorUnderflow);
    }
    // Sum over the kept set T = complement of I; the sign is (-1)^(k - |T|).
    // Meet in the middle so the inner loop is a flat scan.
    let (low, high) = weights.split_at(k / 2);
    let low = subset_sums(low);
    let high = subset_sums(high);
    let k_odd = k % 2 == 1;
    let mut acc = CompensatedSum::new();
    for &(sh, oh) in &high {
        let mut row = CompensatedSum::new();
        for &(sl, ol) in &low {
            let term = 1.0 / (1.0 - p * (sl + sh));
            if (ol ^ oh) == k_odd {
                row.add(term);
            } else {
                row.add(-term);
            }
        }
        acc.add(row.value());
    }
    Ok(((1.0 - p) * acc.value()).clamp(0.0, 1.0))
}

/// Exact probability that a string from the linear grammar lies in `cls`.
pub fn exact_linear(params: &LinearParams, cls: &LinearClass) -> Result<f64, ProbError> {
    exact_weights(params.p, &class_weights(params, cls)?)
}
