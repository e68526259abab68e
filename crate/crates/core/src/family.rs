//! Recognition of the grammar shapes that admit expression probabilities.
//!
//! Matching is structural: nonterminal names are irrelevant, rule order is
//! irrelevant, and variable terminals may be named freely. The reserved
//! terminals are `c`, `+`, `(`, `)` and `/`.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::grammar::{NonterminalId, Pcfg, Symbol, SUM_TOLERANCE};
use crate::prob::{AltLinearParams, LinearParams, PolyParams};

pub const RESERVED_TERMINALS: [&str; 5] = ["c", "+", "(", ")", "/"];

/// A supported grammar shape with its parameters.
///
/// `variables[i]` is the terminal name of variable `x_{i+1}`; for the first
/// three families parameter vectors are ordered the same way.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GrammarFamily {
    /// `E -> E '+' 'c' V [p] | 'c' [1-p]`, `V -> 'x1' [q1] | ... | 'xn' [qn]`.
    Linear {
        params: LinearParams,
        variables: Vec<String>,
    },
    /// Linear with `V -> V F [q] | F [1-q]` and variables under `F`.
    Polynomial {
        params: PolyParams,
        variables: Vec<String>,
    },
    /// `S -> '(' E ')' '/' '(' E ')' [1]` over the polynomial rules.
    Rational {
        params: PolyParams,
        variables: Vec<String>,
    },
    /// The chain `S -> V1 '+' 'c' | 'c'`, `Vi -> V(i+1) '+' 'c' 'xi' |
    /// V(i+1) | 'c' 'xi'`, `Vn -> 'c' 'xn'`; variables in chain order.
    AltLinear {
        params: AltLinearParams,
        variables: Vec<String>,
    },
}

impl GrammarFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GrammarFamily::Linear { .. } => "linear",
            GrammarFamily::Polynomial { .. } => "polynomial",
            GrammarFamily::Rational { .. } => "rational",
            GrammarFamily::AltLinear { .. } => "alt_linear",
        }
    }

    pub fn variables(&self) -> &[String] {
        match self {
            GrammarFamily::Linear { variables, .. }
            | GrammarFamily::Polynomial { variables, .. }
            | GrammarFamily::Rational { variables, .. }
            | GrammarFamily::AltLinear { variables, .. } => variables,
        }
    }

    /// 1-based index of a variable terminal.
    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables()
            .iter()
            .position(|v| v == name)
            .map(|i| i + 1)
    }

    pub fn n(&self) -> usize {
        self.variables().len()
    }
}

/// The grammar matches none of the supported shapes.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unsupported grammar: {reason}")]
pub struct Unsupported {
    pub reason: String,
}

fn unsupported<T>(reason: impl Into<String>) -> Result<T, Unsupported> {
    Err(Unsupported {
        reason: reason.into(),
    })
}

/// Right-hand side written with names, for shape comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Item<'a> {
    N(NonterminalId),
    T(&'a str),
}

fn items<'a>(g: &'a Pcfg, rhs: &[Symbol]) -> Vec<Item<'a>> {
    rhs.iter()
        .map(|s| match *s {
            Symbol::Nonterminal(a) => Item::N(a),
            Symbol::Terminal(t) => Item::T(g.terminal_name(t)),
        })
        .collect()
}

fn rules_of(g: &Pcfg, a: NonterminalId) -> Vec<(Vec<Item<'_>>, f64)> {
    g.rules_for(a)
        .iter()
        .map(|&r| (items(g, &g.rule(r).rhs), g.rule(r).probability))
        .collect()
}

fn is_variable(name: &str) -> bool {
    !RESERVED_TERMINALS.contains(&name)
}

fn name(g: &Pcfg, a: NonterminalId) -> &str {
    g.nonterminal_name(a)
}

/// Nonterminals of the grammar must be exactly `used`.
fn check_nonterminals(g: &Pcfg, used: &[NonterminalId]) -> Result<(), Unsupported> {
    let used: HashSet<_> = used.iter().copied().collect();
    if used.len() != g.nonterminals().len() {
        let extra: Vec<&str> = (0..g.nonterminals().len())
            .filter(|a| !used.contains(a))
            .map(|a| name(g, a))
            .collect();
        return unsupported(format!("unexpected nonterminals {}", extra.join(", ")));
    }
    Ok(())
}

/// `E -> E '+' 'c' V [p] | 'c' [1-p]`; returns `(p, V)`.
fn match_sum(g: &Pcfg, e: NonterminalId) -> Result<(f64, NonterminalId), Unsupported> {
    let rules = rules_of(g, e);
    let mut grow = None;
    let mut stop = None;
    for (rhs, p) in &rules {
        match rhs.as_slice() {
            [Item::N(a), Item::T("+"), Item::T("c"), Item::N(v)] if *a == e && *v != e => {
                if grow.replace((*p, *v)).is_some() {
                    return unsupported(format!("{} has two recursive rules", name(g, e)));
                }
            }
            [Item::T("c")] => {
                if stop.replace(*p).is_some() {
                    return unsupported(format!("{} has two rules {0} -> 'c'", name(g, e)));
                }
            }
            _ => {
                return unsupported(format!(
                    "rule for {} is not of the form E -> E '+' 'c' V or E -> 'c'",
                    name(g, e)
                ))
            }
        }
    }
    match (grow, stop) {
        (Some(found), Some(_)) => Ok(found),
        _ => unsupported(format!(
            "{} needs both E -> E '+' 'c' V and E -> 'c'",
            name(g, e)
        )),
    }
}

/// All rules of `v` are single distinct variable terminals.
fn match_variables(g: &Pcfg, v: NonterminalId) -> Result<Vec<(&str, f64)>, Unsupported> {
    let mut out: Vec<(&str, f64)> = Vec::new();
    for (rhs, p) in rules_of(g, v) {
        match rhs.as_slice() {
            [Item::T(x)] if is_variable(x) => {
                if out.iter().any(|(y, _)| y == x) {
                    return unsupported(format!("variable '{x}' appears twice"));
                }
                out.push((x, p));
            }
            _ => {
                return unsupported(format!(
                    "rule for {} is not a single variable terminal",
                    name(g, v)
                ))
            }
        }
    }
    if out.is_empty() {
        return unsupported(format!("{} has no variables", name(g, v)));
    }
    Ok(out)
}

/// Orders variables: numerically when they are exactly `x1..xn`, otherwise
/// lexicographically.
fn order_variables(found: Vec<(&str, f64)>) -> (Vec<String>, Vec<f64>) {
    let n = found.len();
    let expected: BTreeSet<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let names: BTreeSet<String> = found.iter().map(|(x, _)| (*x).to_owned()).collect();
    let mut sorted = found;
    if names == expected {
        sorted.sort_by_key(|(x, _)| x[1..].parse::<usize>().expect("checked above"));
    } else {
        sorted.sort_by(|a, b| a.0.cmp(b.0));
    }
    (
        sorted.iter().map(|(x, _)| (*x).to_owned()).collect(),
        sorted.iter().map(|(_, p)| *p).collect(),
    )
}

/// `V -> V F [q] | F [1-q]`; returns `(q, F)`.
fn match_product(
    g: &Pcfg,
    v: NonterminalId,
    e: NonterminalId,
) -> Result<(f64, NonterminalId), Unsupported> {
    let mut grow = None;
    let mut stop = None;
    for (rhs, p) in rules_of(g, v) {
        match rhs.as_slice() {
            [Item::N(a), Item::N(f)] if *a == v && *f != v && *f != e => {
                if grow.replace((p, *f)).is_some() {
                    return unsupported(format!("{} has two recursive rules", name(g, v)));
                }
            }
            [Item::N(f)] if *f != v && *f != e => {
                if stop.replace((p, *f)).is_some() {
                    return unsupported(format!("{} has two unit rules", name(g, v)));
                }
            }
            _ => return unsupported(format!("rule for {} is not V -> V F or V -> F", name(g, v))),
        }
    }
    match (grow, stop) {
        (Some((q, f1)), Some((_, f2))) if f1 == f2 => Ok((q, f1)),
        (Some(_), Some(_)) => {
            unsupported(format!("{} uses two different factor symbols", name(g, v)))
        }
        _ => unsupported(format!("{} needs both V -> V F and V -> F", name(g, v))),
    }
}

fn linear(g: &Pcfg) -> Result<GrammarFamily, Unsupported> {
    let e = g.start();
    let (p, v) = match_sum(g, e)?;
    check_nonterminals(g, &[e, v])?;
    let (variables, q) = order_variables(match_variables(g, v)?);
    let params = LinearParams::new(p, q).map_err(|err| Unsupported {
        reason: err.to_string(),
    })?;
    Ok(GrammarFamily::Linear { params, variables })
}

fn polynomial_parts(
    g: &Pcfg,
    e: NonterminalId,
) -> Result<(PolyParams, Vec<String>, [NonterminalId; 3]), Unsupported> {
    let (p, v) = match_sum(g, e)?;
    let (q, f) = match_product(g, v, e)?;
    let (variables, qv) = order_variables(match_variables(g, f)?);
    let params = PolyParams::new(p, q, qv).map_err(|err| Unsupported {
        reason: err.to_string(),
    })?;
    Ok((params, variables, [e, v, f]))
}

fn polynomial(g: &Pcfg) -> Result<GrammarFamily, Unsupported> {
    let (params, variables, used) = polynomial_parts(g, g.start())?;
    check_nonterminals(g, &used)?;
    Ok(GrammarFamily::Polynomial { params, variables })
}

fn rational(g: &Pcfg) -> Result<GrammarFamily, Unsupported> {
    let s = g.start();
    let rules = rules_of(g, s);
    let e = match rules.as_slice() {
        [(rhs, p)] => match rhs.as_slice() {
            [Item::T("("), Item::N(e1), Item::T(")"), Item::T("/"), Item::T("("), Item::N(e2), Item::T(")")]
                if e1 == e2 && *e1 != s && (p - 1.0).abs() <= SUM_TOLERANCE =>
            {
                *e1
            }
            _ => return unsupported("start rule is not S -> '(' E ')' '/' '(' E ')' [1]"),
        },
        _ => return unsupported("start symbol must have exactly one rule"),
    };
    let (params, variables, [_, v, f]) = polynomial_parts(g, e)?;
    check_nonterminals(g, &[s, e, v, f])?;
    Ok(GrammarFamily::Rational { params, variables })
}

fn alt_linear(g: &Pcfg) -> Result<GrammarFamily, Unsupported> {
    let s = g.start();
    let mut p0 = None;
    let mut first = None;
    let mut seen_stop = false;
    for (rhs, p) in rules_of(g, s) {
        match rhs.as_slice() {
            [Item::N(v), Item::T("+"), Item::T("c")] if *v != s && first.is_none() => {
                first = Some(*v);
                p0 = Some(p);
            }
            [Item::T("c")] if !seen_stop => seen_stop = true,
            _ => return unsupported("start rules are not S -> V1 '+' 'c' | 'c'"),
        }
    }
    let (Some(p0), Some(mut current)) = (p0, first) else {
        return unsupported("start symbol needs the rule S -> V1 '+' 'c'");
    };

    let mut chain = vec![s];
    let mut branch = Vec::new();
    let mut variables: Vec<String> = Vec::new();
    loop {
        if chain.contains(&current) {
            return unsupported("the V chain loops back");
        }
        chain.push(current);
        let mut next: Option<NonterminalId> = None;
        let mut var: Option<&str> = None;
        let (mut keep, mut skip, mut stop) = (None, None, None);
        for (rhs, p) in rules_of(g, current) {
            let (n, x) = match rhs.as_slice() {
                [Item::N(n), Item::T("+"), Item::T("c"), Item::T(x)]
                    if is_variable(x) && keep.is_none() =>
                {
                    keep = Some(p);
                    (Some(*n), Some(*x))
                }
                [Item::N(n)] if skip.is_none() => {
                    skip = Some(p);
                    (Some(*n), None)
                }
                [Item::T("c"), Item::T(x)] if is_variable(x) && stop.is_none() => {
                    stop = Some(p);
                    (None, Some(*x))
                }
                _ => (None, None),
            };
            let consistent = (n.is_some() || x.is_some())
                && n.is_none_or(|n| *next.get_or_insert(n) == n)
                && x.is_none_or(|x| *var.get_or_insert(x) == x);
            if !consistent {
                return unsupported(format!(
                    "rules for {} do not follow the alternative linear chain",
                    name(g, current)
                ));
            }
        }
        let Some(x) = var else {
            return unsupported(format!("{} introduces no variable", name(g, current)));
        };
        if variables.iter().any(|v| v == x) {
            return unsupported(format!("variable '{x}' appears twice in the chain"));
        }
        variables.push(x.to_owned());
        match next {
            None => {
                if (stop.unwrap_or(0.0) - 1.0).abs() > SUM_TOLERANCE {
                    return unsupported(format!(
                        "last chain rule for {} must have probability 1",
                        name(g, current)
                    ));
                }
                break;
            }
            Some(n) => {
                branch.push((keep.unwrap_or(0.0), skip.unwrap_or(0.0)));
                current = n;
            }
        }
    }
    check_nonterminals(g, &chain)?;
    let params = AltLinearParams::new(p0, branch).map_err(|err| Unsupported {
        reason: err.to_string(),
    })?;
    Ok(GrammarFamily::AltLinear { params, variables })
}

/// Identifies which supported shape `g` has. Anything else is refused:
/// no general algorithm can compute expression probabilities for an
/// arbitrary expression grammar.
pub fn classify_family(g: &Pcfg) -> Result<GrammarFamily, Unsupported> {
    let start_rules = rules_of(g, g.start());
    let shapes: Vec<&[Item]> = start_rules.iter().map(|(r, _)| r.as_slice()).collect();
    let recursive_sum = shapes
        .iter()
        .any(|r| matches!(r, [Item::N(_), Item::T("+"), Item::T("c"), Item::N(_)]));
    if recursive_sum {
        let v = match_sum(g, g.start())?.1;
        let v_is_product = g
            .rules_for(v)
            .iter()
            .any(|&r| g.rule(r).rhs.iter().any(|s| s.as_nonterminal().is_some()));
        return if v_is_product {
            polynomial(g)
        } else {
            linear(g)
        };
    }
    if shapes.iter().any(|r| r.first() == Some(&Item::T("("))) {
        return rational(g);
    }
    if shapes
        .iter()
        .any(|r| matches!(r, [Item::N(_), Item::T("+"), Item::T("c")]))
    {
        return alt_linear(g);
    }
    unsupported(
        "grammar matches none of the linear, polynomial, rational or alternative linear shapes; \
         expression probabilities are not computable for general grammars",
    )
}
