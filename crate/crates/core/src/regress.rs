//! Generate-and-test regression: sample strings with generic constants `c`,
//! number the constants, fit them by least squares and rank the results.

use std::collections::HashSet;
use std::io::Read;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::classes::{canonicalize, representative, ClassError, ExprClass};
use crate::derivation::sample;
use crate::family::{classify_family, GrammarFamily};
use crate::numeric::CompensatedSum;
use crate::prob::{expression_probability, Mode};
use crate::Pcfg;

/// Step limit for each sampled derivation in [`run_search`].
pub const SEARCH_MAX_STEPS: u64 = 10_000;

/// Classes with more variables than this get an approximate prior.
pub const EXACT_PRIOR_LIMIT: usize = 12;

const PRIOR_EPSILON: f64 = 1e-6;

/// Eigenvalues below this fraction of the largest diagonal entry of `XᵀX`
/// count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("template: {0}")]
    Template(String),
    #[error("template is not linear in its constants: {0}")]
    NonLinear(String),
    #[error("template uses '{0}', which is not a dataset column")]
    UnknownVariable(String),
    #[error("grammar: {0}")]
    Grammar(String),
    #[error("template value overflows on the dataset: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Class(#[from] ClassError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub variables: Vec<String>,
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl Dataset {
    pub fn new(variables: Vec<String>, rows: Vec<(Vec<f64>, f64)>) -> Result<Self, RegressError> {
        if rows.is_empty() {
            return Err(RegressError::EmptyDataset);
        }
        if let Some(i) = rows.iter().position(|(x, _)| x.len() != variables.len()) {
            return Err(RegressError::Dataset(format!(
                "row {} has {} values, expected {}",
                i + 1,
                rows[i].0.len(),
                variables.len()
            )));
        }
        if rows
            .iter()
            .any(|(x, y)| !y.is_finite() || x.iter().any(|v| !v.is_finite()))
        {
            return Err(RegressError::Dataset("values must be finite".into()));
        }
        Ok(Dataset { variables, rows })
    }

    /// Reads CSV with header `x1,...,xn,y`: comma separated, no quoting.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, RegressError> {
        let mut rdr = csv::ReaderBuilder::new()
            .quoting(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let err = |e: csv::Error| RegressError::Dataset(e.to_string());
        let header: Vec<String> = rdr
            .headers()
            .map_err(err)?
            .iter()
            .map(str::to_owned)
            .collect();
        match header.split_last() {
            Some((last, _)) if last == "y" => {}
            _ => {
                return Err(RegressError::Dataset(
                    "last column must be named 'y'".into(),
                ))
            }
        }
        let variables = header[..header.len() - 1].to_vec();
        if let Some(dup) = variables
            .iter()
            .enumerate()
            .find(|(i, v)| variables[..*i].contains(v))
        {
            return Err(RegressError::Dataset(format!(
                "duplicate column '{}'",
                dup.1
            )));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(err)?;
            let line = record.position().map_or(0, |p| p.line());
            let mut values = Vec::with_capacity(record.len());
            for field in record.iter() {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(RegressError::Dataset(format!(
                            "line {line}: '{field}' is not a finite number"
                        )))
                    }
                }
            }
            let y = values.pop().expect("csv enforces the header width");
            rows.push((values, y));
        }
        Dataset::new(variables, rows)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, RegressError> {
        Self::from_csv(text.as_bytes())
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }
}

/// Replaces the i-th standalone token `c` by `ci`, left to right, and
/// returns the new string with the number of constants.
pub fn postprocess_constants(w: &str) -> (String, usize) {
    let mut m = 0;
    let tokens: Vec<String> = w
        .split_whitespace()
        .map(|t| {
            if t == "c" {
                m += 1;
                format!("c{m}")
            } else {
                t.to_owned()
            }
        })
        .collect();
    if m == 0 {
        (w.to_owned(), 0)
    } else {
        (tokens.join(" "), m)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    /// 0-based constant index.
    constant: Option<usize>,
    factors: Vec<(String, i32)>,
}

/// A sum of products, each with at most one indexed constant `ci`, so the
/// value is linear in the constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    text: String,
    terms: Vec<Term>,
    constants: usize,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, RegressError> {
        if let Some(ch) = text.chars().find(|c| matches!(c, '(' | ')' | '/')) {
            return Err(RegressError::NonLinear(format!("'{ch}' is not supported")));
        }
        let mut terms = Vec::new();
        let mut constants = 0;
        for raw in text.split('+') {
            let raw = raw.trim();
            let mut term = Term {
                constant: None,
                factors: Vec::new(),
            };
            let factors: Vec<&str> = raw
                .split(|c: char| c.is_whitespace() || c == '*')
                .filter(|s| !s.is_empty())
                .collect();
            if factors.is_empty() {
                return Err(RegressError::Template(format!("empty term in '{text}'")));
            }
            for f in factors {
                if let Some(idx) = constant_index(f)? {
                    if term.constant.is_some() {
                        return Err(RegressError::NonLinear(raw.to_owned()));
                    }
                    constants = constants.max(idx + 1);
                    term.constant = Some(idx);
                } else {
                    term.factors.push(factor(f)?);
                }
            }
            terms.push(term);
        }
        Ok(Template {
            text: text.to_owned(),
            terms,
            constants,
        })
    }

    /// Number of constants, the largest index used.
    pub fn constants(&self) -> usize {
        self.constants
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

fn constant_index(token: &str) -> Result<Option<usize>, RegressError> {
    let Some(rest) = token.strip_prefix('c') else {
        return Ok(None);
    };
    if rest.is_empty() {
        return Err(RegressError::Template(
            "bare 'c'; number the constants first".into(),
        ));
    }
    if !rest.bytes().all(|b| b.is_ascii_digit()) {
        return Ok(None);
    }
    match rest.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(Some(i - 1)),
        _ => Err(RegressError::Template(format!("bad constant '{token}'"))),
    }
}

fn factor(token: &str) -> Result<(String, i32), RegressError> {
    let (name, exp) = match token.split_once('^') {
        Some((name, e)) => match e.parse::<i32>() {
            Ok(e) if e >= 1 => (name, e),
            _ => return Err(RegressError::Template(format!("bad exponent in '{token}'"))),
        },
        None => (token, 1),
    };
    if name.is_empty() {
        return Err(RegressError::Template(format!("bad factor '{token}'")));
    }
    Ok((name.to_owned(), exp))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub constants: Vec<f64>,
    pub sse: f64,
}

/// Design matrix (one column per constant) and the constant-free offset.
fn design(t: &Template, data: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>), RegressError> {
    let resolved: Vec<Vec<(usize, i32)>> = t
        .terms
        .iter()
        .map(|term| {
            term.factors
                .iter()
                .map(|(name, e)| {
                    data.column(name)
                        .map(|c| (c, *e))
                        .ok_or_else(|| RegressError::UnknownVariable(name.clone()))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let n = data.rows.len();
    let mut x = DMatrix::zeros(n, t.constants);
    let mut offset = DVector::zeros(n);
    for (r, (xs, _)) in data.rows.iter().enumerate() {
        for (term, factors) in t.terms.iter().zip(&resolved) {
            let v: f64 = factors.iter().map(|&(c, e)| xs[c].powi(e)).product();
            match term.constant {
                Some(j) => x[(r, j)] += v,
                None => offset[r] += v,
            }
        }
    }
    Ok((x, offset))
}

/// Minimum-norm solution of `A β = b` for symmetric positive semidefinite
/// `A`, dropping eigenvalues below the rank tolerance.
fn psd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let scale = a.diagonal().iter().cloned().fold(0.0, f64::max);
    if a.is_empty() {
        return DVector::zeros(0);
    }
    let eig = SymmetricEigen::new(a);
    let mut beta = DVector::zeros(b.len());
    if scale <= 0.0 {
        return beta;
    }
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > RANK_TOLERANCE * scale {
            let v = eig.eigenvectors.column(j);
            beta += v * (v.dot(b) / lambda);
        }
    }
    beta
}

/// Ordinary least squares for the constants of `template`.
pub fn fit_constants(template: &Template, data: &Dataset) -> Result<Fit, RegressError> {
    if data.rows.is_empty() {
        return Err(RegressError::EmptyDataset);
    }
    let (x, offset) = design(template, data)?;
    if x.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite(template.text.clone()));
    }
    let y = DVector::from_iterator(data.rows.len(), data.rows.iter().map(|r| r.1)) - &offset;
    let beta = psd_solve(x.transpose() * &x, &(x.transpose() * &y));
    let residual = y - &x * &beta;
    let sse: CompensatedSum = residual.iter().map(|r| r * r).collect();
    Ok(Fit {
        constants: beta.iter().copied().collect(),
        sse: sse.value(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub template: String,
    pub constants: Vec<f64>,
    pub sse: f64,
    /// Probability of the expression class, when the grammar family has one.
    pub prior: Option<f64>,
    /// Class in expression syntax.
    pub class: Option<String>,
    #[serde(skip)]
    pub expr_class: Option<ExprClass>,
}

fn class_size(class: &ExprClass) -> usize {
    match class {
        ExprClass::Linear(c) => c.k(),
        ExprClass::Polynomial(c) => c.k(),
        ExprClass::Rational(r) => r.numerator.k().max(r.denominator.k()),
    }
}

fn prior(family: &GrammarFamily, class: &ExprClass) -> Result<f64, RegressError> {
    let mode = if class_size(class) <= EXACT_PRIOR_LIMIT {
        Mode::Exact
    } else {
        Mode::Approx {
            epsilon: PRIOR_EPSILON,
        }
    };
    Ok(expression_probability(family, class, mode)?.value())
}

/// Samples `count` strings, fits each distinct one (distinct by expression
/// class when the grammar belongs to a supported family) and ranks them by
/// SSE, then by prior (higher first), then by template.
pub fn run_search(
    g: &Pcfg,
    data: &Dataset,
    count: u64,
    seed: u64,
) -> Result<Vec<Candidate>, RegressError> {
    if data.rows.is_empty() {
        return Err(RegressError::EmptyDataset);
    }
    let family = classify_family(g).ok();
    if let Some(GrammarFamily::Rational { .. }) = family {
        return Err(RegressError::NonLinear(
            "rational templates have constants in the denominator".into(),
        ));
    }
    let report = sample(g, count, SEARCH_MAX_STEPS, seed);
    let mut seen_classes = HashSet::new();
    let mut seen_strings = HashSet::new();
    let mut out = Vec::new();
    for sf in &report.strings {
        let tokens: Vec<&str> = sf.string.split_whitespace().collect();
        let (text, class, prior) = match &family {
            Some(fam) => {
                let class = canonicalize(fam, &tokens)?;
                if !seen_classes.insert(class.clone()) {
                    continue;
                }
                let rep = representative(fam, &class)?.join(" ");
                let p = prior(fam, &class)?;
                (rep, Some(class), Some(p))
            }
            None => {
                if !seen_strings.insert(sf.string.clone()) {
                    continue;
                }
                (sf.string.clone(), None, None)
            }
        };
        let (template_text, _) = postprocess_constants(&text);
        let template = Template::parse(&template_text)?;
        let fit = fit_constants(&template, data)?;
        out.push(Candidate {
            template: template_text,
            constants: fit.constants,
            sse: fit.sse,
            prior,
            class: class.as_ref().map(|c| c.to_string()),
            expr_class: class,
        });
    }
    out.sort_by(|a, b| {
        a.sse
            .total_cmp(&b.sse)
            .then_with(|| match (a.prior, b.prior) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then_with(|| a.template.cmp(&b.template))
    });
    Ok(out)
}
