//! Expression probabilities for the supported grammar families.
//!
//! For the linear family the probability of the class with variables
//! `r1 < ... < rk` is
//!
//! ```text
//! P = Σ_{I ⊆ {1..k}} (-1)^|I| (1 - p) / (1 - p Σ_{j ∉ I} q_rj)
//! ```
//!
//! and equivalently the series
//!
//! ```text
//! P = Σ_{i ≥ k} (1 - p) p^i Σ_{l1 + ... + lk = i, lj ≥ 1} κ(l),
//! κ(l) = (i choose l1, ..., lk) Π q_rj^lj
//! ```
//!
//! whose truncation and pruning give the approximation in [`approx`].

use serde::Serialize;
use thiserror::Error;

pub mod approx;
pub mod exact;
pub mod family_prob;
pub mod series;

pub use approx::{approx_linear, ApproxReport, IterationReport};
pub use exact::exact_linear;
pub use family_prob::{
    expression_probability, monomial_probability, prob_alt_linear, prob_polynomial, prob_rational,
    ExprProbability, Mode,
};
pub use series::{choose_m, multinomial_log, series_linear, SeriesValue};

/// Tolerance on `Σ q = 1`.
pub const PARAM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProbError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("variable index {index} outside 1..={n}")]
    VariableOutOfRange { index: usize, n: usize },
    #[error("class has {k} variables; exact evaluation is limited to 30")]
    TooManyVariables { k: usize },
    #[error("denominator 1 - p·Σq underflows")]
    DenominatorUnderflow,
    #[error("cutoff M = {m} is below the class size k = {k}")]
    CutoffBelowClassSize { m: usize, k: usize },
    #[error("p·Q = {0} is not below 1; the series tail cannot be bounded")]
    TailUnbounded(f64),
    #[error("series needs about {0:e} operations; limit is 1e8")]
    SeriesTooLarge(f64),
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
}

fn check_probability(name: &str, v: f64, open_low: bool, open_high: bool) -> Result<(), ProbError> {
    let low_ok = if open_low { v > 0.0 } else { v >= 0.0 };
    let high_ok = if open_high { v < 1.0 } else { v <= 1.0 };
    if v.is_finite() && low_ok && high_ok {
        Ok(())
    } else {
        Err(ProbError::InvalidParams(format!(
            "{name} = {v} out of range"
        )))
    }
}

fn check_distribution(name: &str, q: &[f64]) -> Result<(), ProbError> {
    if q.is_empty() {
        return Err(ProbError::InvalidParams(format!("{name} is empty")));
    }
    for (i, &v) in q.iter().enumerate() {
        check_probability(&format!("{name}[{}]", i + 1), v, false, false)?;
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > PARAM_TOLERANCE {
        return Err(ProbError::InvalidParams(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// `E -> E '+' 'c' V [p] | 'c' [1-p]`, `V -> 'x_i' [q_i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearParams {
    pub p: f64,
    pub q: Vec<f64>,
}

impl LinearParams {
    pub fn new(p: f64, q: Vec<f64>) -> Result<Self, ProbError> {
        check_probability("p", p, true, true)?;
        check_distribution("q", &q)?;
        Ok(LinearParams { p, q })
    }

    /// `n` variables with equal weight.
    pub fn uniform(p: f64, n: usize) -> Result<Self, ProbError> {
        Self::new(p, vec![1.0 / n as f64; n])
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }
}

/// Linear template with `V -> V F [q] | F [1-q]`, `F -> 'x_i' [q_i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyParams {
    pub p: f64,
    pub q: f64,
    pub qv: Vec<f64>,
}

impl PolyParams {
    pub fn new(p: f64, q: f64, qv: Vec<f64>) -> Result<Self, ProbError> {
        check_probability("p", p, true, true)?;
        check_probability("q", q, false, true)?;
        check_distribution("qv", &qv)?;
        Ok(PolyParams { p, q, qv })
    }

    pub fn n(&self) -> usize {
        self.qv.len()
    }
}

/// `S -> V1 '+' 'c' [p0] | 'c' [1-p0]`,
/// `Vi -> V(i+1) '+' 'c' 'x_i' [p_i] | V(i+1) [q_i] | 'c' 'x_i' [1-p_i-q_i]`,
/// `Vn -> 'c' 'x_n' [1]`; `branch[i-1] = (p_i, q_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AltLinearParams {
    pub p0: f64,
    pub branch: Vec<(f64, f64)>,
}

impl AltLinearParams {
    pub fn new(p0: f64, branch: Vec<(f64, f64)>) -> Result<Self, ProbError> {
        check_probability("p0", p0, true, false)?;
        for (i, &(p, q)) in branch.iter().enumerate() {
            check_probability(&format!("p{}", i + 1), p, false, false)?;
            check_probability(&format!("q{}", i + 1), q, false, false)?;
            if p + q > 1.0 + PARAM_TOLERANCE {
                return Err(ProbError::InvalidParams(format!(
                    "p{0} + q{0} = {1} exceeds 1",
                    i + 1,
                    p + q
                )));
            }
        }
        Ok(AltLinearParams { p0, branch })
    }

    pub fn n(&self) -> usize {
        self.branch.len() + 1
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), ProbError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(ProbError::InvalidEpsilon(epsilon))
    }
}
