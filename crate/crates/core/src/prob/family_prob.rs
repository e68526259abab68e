//! Reductions of the polynomial, rational and alt-linear families to the
//! linear computations.

use serde::Serialize;

use super::approx::approx_weights;
use super::exact::exact_weights;
use super::{AltLinearParams, ApproxReport, PolyParams, ProbError};
use crate::classes::{
    check_class, ClassError, ExprClass, LinearClass, MonomialKey, PolynomialClass,
};
use crate::family::GrammarFamily;
use crate::numeric::xlny;
use crate::prob::multinomial_log;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Exact,
    Approx { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExprProbability {
    Exact {
        probability: f64,
    },
    Approx(ApproxReport),
    /// Both sides approximated with `ε/3` each.
    Rational {
        estimate: f64,
        error_bound: f64,
        numerator: ApproxReport,
        denominator: ApproxReport,
    },
}

impl ExprProbability {
    pub fn value(&self) -> f64 {
        match self {
            ExprProbability::Exact { probability } => *probability,
            ExprProbability::Approx(r) => r.estimate,
            ExprProbability::Rational { estimate, .. } => *estimate,
        }
    }

    pub fn error_bound(&self) -> f64 {
        match self {
            ExprProbability::Exact { .. } => 0.0,
            ExprProbability::Approx(r) => r.error_bound,
            ExprProbability::Rational { error_bound, .. } => *error_bound,
        }
    }
}

/// Probability that `V` derives some word with exponent vector `m`:
/// `(|m|; m) q^(|m|-1) (1-q) Π qv_i^m_i`.
pub fn monomial_probability(params: &PolyParams, m: &MonomialKey) -> Result<f64, ProbError> {
    let n = params.n();
    let mut exps = Vec::with_capacity(m.0.len());
    let mut ln = 0.0;
    for (&i, &e) in &m.0 {
        if !(1..=n).contains(&i) {
            return Err(ProbError::VariableOutOfRange { index: i, n });
        }
        exps.push(e as u64);
        ln += xlny(e as f64, params.qv[i - 1]);
    }
    let degree = m.degree();
    if degree == 0 {
        return Err(ProbError::InvalidParams("monomial of degree 0".into()));
    }
    ln += multinomial_log(&exps) + xlny((degree - 1) as f64, params.q) + (1.0 - params.q).ln();
    Ok(ln.exp())
}

fn monomial_weights(params: &PolyParams, cls: &PolynomialClass) -> Result<Vec<f64>, ProbError> {
    cls.0
        .iter()
        .map(|m| monomial_probability(params, m))
        .collect()
}

/// A polynomial class is a linear class over its monomials, each weighted
/// by [`monomial_probability`].
pub fn prob_polynomial(
    params: &PolyParams,
    cls: &PolynomialClass,
    mode: Mode,
) -> Result<ExprProbability, ProbError> {
    let w = monomial_weights(params, cls)?;
    Ok(match mode {
        Mode::Exact => ExprProbability::Exact {
            probability: exact_weights(params.p, &w)?,
        },
        Mode::Approx { epsilon } => ExprProbability::Approx(approx_weights(params.p, &w, epsilon)?),
    })
}

/// Numerator and denominator are generated independently, so the
/// probability factors.
pub fn prob_rational(
    params: &PolyParams,
    numerator: &PolynomialClass,
    denominator: &PolynomialClass,
    mode: Mode,
) -> Result<ExprProbability, ProbError> {
    match mode {
        Mode::Exact => {
            let a = prob_polynomial(params, numerator, Mode::Exact)?.value();
            let b = prob_polynomial(params, denominator, Mode::Exact)?.value();
            Ok(ExprProbability::Exact { probability: a * b })
        }
        Mode::Approx { epsilon } => {
            let side = epsilon / 3.0;
            let num = approx_weights(params.p, &monomial_weights(params, numerator)?, side)?;
            let den = approx_weights(params.p, &monomial_weights(params, denominator)?, side)?;
            Ok(ExprProbability::Rational {
                estimate: num.estimate * den.estimate,
                error_bound: num.error_bound + den.error_bound,
                numerator: num,
                denominator: den,
            })
        }
    }
}

/// The chain decides each variable in turn, so a class with largest index
/// `M` has probability `p0 Π_(i<M) (p_i if xi in class else q_i) · g(M)`
/// with `g(M) = 1 - p_M - q_M`, or 1 when `M = n`.
pub fn prob_alt_linear(params: &AltLinearParams, cls: &LinearClass) -> Result<f64, ProbError> {
    let n = params.n();
    let Some(&last) = cls.0.last() else {
        return Ok(1.0 - params.p0);
    };
    if let Some(&bad) = cls.0.iter().find(|&&i| !(1..=n).contains(&i)) {
        return Err(ProbError::VariableOutOfRange { index: bad, n });
    }
    let mut v = params.p0;
    for i in 1..last {
        let (p, q) = params.branch[i - 1];
        v *= if cls.0.contains(&i) { p } else { q };
    }
    if last < n {
        let (p, q) = params.branch[last - 1];
        v *= (1.0 - p - q).max(0.0);
    }
    Ok(v)
}

/// Probability of `class` under `family`. Alt-linear classes are always
/// computed exactly.
pub fn expression_probability(
    family: &GrammarFamily,
    class: &ExprClass,
    mode: Mode,
) -> Result<ExprProbability, ClassError> {
    check_class(family, class)?;
    Ok(match (family, class) {
        (GrammarFamily::Linear { params, .. }, ExprClass::Linear(c)) => match mode {
            Mode::Exact => ExprProbability::Exact {
                probability: super::exact_linear(params, c)?,
            },
            Mode::Approx { epsilon } => {
                ExprProbability::Approx(super::approx_linear(params, c, epsilon)?)
            }
        },
        (GrammarFamily::AltLinear { params, .. }, ExprClass::Linear(c)) => ExprProbability::Exact {
            probability: prob_alt_linear(params, c)?,
        },
        (GrammarFamily::Polynomial { params, .. }, ExprClass::Polynomial(c)) => {
            prob_polynomial(params, c, mode)?
        }
        (GrammarFamily::Rational { params, .. }, ExprClass::Rational(r)) => {
            prob_rational(params, &r.numerator, &r.denominator, mode)?
        }
        _ => return Err(ClassError::WrongFamily(family.name())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_probability_by_hand() {
        let params = PolyParams::new(0.5, 0.4, vec![0.5, 0.5]).unwrap();
        // x1 x1 x2 in any of 3 orders: 3 · 0.4^2 · 0.6 · 0.5^3.
        let m = MonomialKey::new([(1, 2), (2, 1)]);
        let v = monomial_probability(&params, &m).unwrap();
        assert!((v - 3.0 * 0.16 * 0.6 * 0.125).abs() < 1e-15);
    }

    #[test]
    fn alt_linear_by_hand() {
        let params = AltLinearParams::new(0.8, vec![(0.3, 0.5), (0.2, 0.2)]).unwrap();
        assert!((prob_alt_linear(&params, &LinearClass::default()).unwrap() - 0.2).abs() < 1e-15);
        let v = prob_alt_linear(&params, &LinearClass::new([1, 3])).unwrap();
        assert!((v - 0.8 * 0.3 * 0.2).abs() < 1e-15);
        let v = prob_alt_linear(&params, &LinearClass::new([2])).unwrap();
        assert!((v - 0.8 * 0.5 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn rational_exact_is_product() {
        let params = PolyParams::new(0.5, 0.3, vec![0.6, 0.4]).unwrap();
        let a = PolynomialClass::new([MonomialKey::new([(1, 1)])]);
        let b = PolynomialClass::new([MonomialKey::new([(2, 2)])]);
        let pa = prob_polynomial(&params, &a, Mode::Exact).unwrap().value();
        let pb = prob_polynomial(&params, &b, Mode::Exact).unwrap().value();
        let r = prob_rational(&params, &a, &b, Mode::Exact).unwrap().value();
        assert_eq!(r, pa * pb);
        assert_eq!(
            prob_rational(&params, &b, &a, Mode::Exact).unwrap().value(),
            r
        );
    }
}
