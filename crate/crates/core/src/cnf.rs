//! Probability-preserving Chomsky normal form and the inside (sum-product)
//! CKY parser.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::grammar::{NonterminalId, Pcfg, Rule, Symbol, TerminalId};
use crate::numeric::CompensatedSum;
use crate::transforms::{remove_linear_cycles, TransformError};
use crate::validate::productive;

#[derive(Debug, Error, PartialEq)]
pub enum CnfError {
    #[error("grammar contains null rules")]
    NullRules,
    #[error("start symbol derives no terminal string")]
    NonProductive,
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Where a nonterminal added during conversion came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Introduced {
    /// Stands for a single terminal inside a long rule.
    TerminalWrapper(TerminalId),
    /// Holds the tail of a binarized rule of the given original nonterminal.
    Binarization(NonterminalId),
}

/// A grammar with only `A -> B C` and `A -> 't'` rules.
///
/// Nonterminal and terminal ids below `original_nonterminals` and all
/// terminal ids coincide with those of the source grammar. Rules of
/// nonterminals that cannot derive a string are dropped, so per-lhs sums
/// can fall below one; the distribution over strings is unchanged.
#[derive(Debug, Clone)]
pub struct CnfGrammar {
    pub grammar: Pcfg,
    pub original_nonterminals: usize,
    /// For each nonterminal id `original_nonterminals + i`, its origin.
    pub introduced: Vec<Introduced>,
    lexical: Vec<Vec<(NonterminalId, f64)>>,
    binary: Vec<(NonterminalId, NonterminalId, NonterminalId, f64)>,
}

fn fresh_name(taken: &mut HashSet<String>, base: String) -> String {
    let mut name = base;
    while taken.contains(&name) {
        name.push('_');
    }
    taken.insert(name.clone());
    name
}

/// Converts `g` to CNF without changing the probability of any string.
///
/// Linear cycles are removed first, unit chains are then collapsed by
/// multiplying probabilities along them, terminals inside long rules get
/// wrapper nonterminals, and long rules are binarized with fresh
/// nonterminals whose single rule has probability 1.
pub fn to_cnf(g: &Pcfg) -> Result<CnfGrammar, CnfError> {
    if g.has_null_rules() {
        return Err(CnfError::NullRules);
    }
    let g = remove_linear_cycles(g)?;
    let live = productive(&g);
    if !live[g.start()] {
        return Err(CnfError::NonProductive);
    }
    let n = g.nonterminals().len();
    let keep = |r: &Rule| {
        r.probability > 0.0
            && live[r.lhs]
            && r.rhs
                .iter()
                .all(|s| s.as_nonterminal().is_none_or(|b| live[b]))
    };
    let rules: Vec<&Rule> = g.rules().iter().filter(|r| keep(r)).collect();

    // closure[a][b]: total probability of unit chains a -> ... -> b
    let mut unit_edges = vec![Vec::new(); n];
    for r in &rules {
        if let Some(b) = r.unit_target() {
            unit_edges[r.lhs].push((b, r.probability));
        }
    }
    let mut closure: Vec<Option<Vec<f64>>> = vec![None; n];
    for a in 0..n {
        unit_closure(a, &unit_edges, &mut closure);
    }

    let mut merged: Vec<(NonterminalId, Vec<Symbol>, f64)> = Vec::new();
    let mut index: HashMap<(NonterminalId, Vec<Symbol>), usize> = HashMap::new();
    for (a, reach) in closure.iter().enumerate() {
        let reach = reach.as_ref().expect("filled");
        for r in &rules {
            if r.unit_target().is_some() || reach[r.lhs] == 0.0 {
                continue;
            }
            let p = reach[r.lhs] * r.probability;
            let key = (a, r.rhs.clone());
            match index.get(&key) {
                Some(&i) => merged[i].2 += p,
                None => {
                    index.insert(key, merged.len());
                    merged.push((a, r.rhs.clone(), p));
                }
            }
        }
    }

    let mut names: Vec<String> = g.nonterminals().to_vec();
    let mut taken: HashSet<String> = names.iter().cloned().collect();
    let mut introduced = Vec::new();
    let mut wrappers: HashMap<TerminalId, NonterminalId> = HashMap::new();
    let mut out: Vec<Rule> = Vec::new();
    let mut binarized = 0usize;
    for (lhs, rhs, p) in merged {
        if rhs.len() == 1 {
            out.push(Rule {
                lhs,
                rhs,
                probability: p,
            });
            continue;
        }
        let symbols: Vec<Symbol> = rhs
            .iter()
            .map(|s| match *s {
                Symbol::Nonterminal(_) => *s,
                Symbol::Terminal(t) => {
                    let id = *wrappers.entry(t).or_insert_with(|| {
                        let id = names.len();
                        names.push(fresh_name(&mut taken, format!("T_{t}")));
                        introduced.push(Introduced::TerminalWrapper(t));
                        out.push(Rule {
                            lhs: id,
                            rhs: vec![Symbol::Terminal(t)],
                            probability: 1.0,
                        });
                        id
                    });
                    Symbol::Nonterminal(id)
                }
            })
            .collect();
        let mut head = lhs;
        let mut prob = p;
        let mut rest = &symbols[..];
        while rest.len() > 2 {
            let id = names.len();
            names.push(fresh_name(&mut taken, format!("X_{binarized}")));
            binarized += 1;
            introduced.push(Introduced::Binarization(lhs));
            out.push(Rule {
                lhs: head,
                rhs: vec![rest[0], Symbol::Nonterminal(id)],
                probability: prob,
            });
            head = id;
            prob = 1.0;
            rest = &rest[1..];
        }
        out.push(Rule {
            lhs: head,
            rhs: rest.to_vec(),
            probability: prob,
        });
    }

    let grammar = Pcfg::from_parts(names, g.terminals().to_vec(), g.start(), out);
    Ok(CnfGrammar::index(grammar, n, introduced))
}

fn unit_closure(
    a: NonterminalId,
    edges: &[Vec<(NonterminalId, f64)>],
    memo: &mut [Option<Vec<f64>>],
) {
    // iterative post-order over the acyclic unit graph
    let mut stack = vec![(a, false)];
    while let Some((v, expanded)) = stack.pop() {
        if memo[v].is_some() {
            continue;
        }
        if expanded {
            let mut reach = vec![0.0; memo.len()];
            reach[v] = 1.0;
            for &(b, p) in &edges[v] {
                let inner = memo[b].as_ref().expect("children first");
                for (slot, x) in reach.iter_mut().zip(inner) {
                    *slot += p * x;
                }
            }
            memo[v] = Some(reach);
        } else {
            stack.push((v, true));
            for &(b, _) in &edges[v] {
                if memo[b].is_none() {
                    stack.push((b, false));
                }
            }
        }
    }
}

/// Result of a string-probability query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StringProbability {
    pub probability: f64,
    /// Tokens that are not terminals of the grammar (probability is then 0).
    pub unknown_tokens: Vec<String>,
}

impl CnfGrammar {
    fn index(grammar: Pcfg, original_nonterminals: usize, introduced: Vec<Introduced>) -> Self {
        let mut lexical = vec![Vec::new(); grammar.terminals().len()];
        let mut binary = Vec::new();
        for r in grammar.rules() {
            match r.rhs.as_slice() {
                [Symbol::Terminal(t)] => lexical[*t].push((r.lhs, r.probability)),
                [Symbol::Nonterminal(b), Symbol::Nonterminal(c)] => {
                    binary.push((r.lhs, *b, *c, r.probability))
                }
                _ => unreachable!("conversion emits only CNF rules"),
            }
        }
        CnfGrammar {
            grammar,
            original_nonterminals,
            introduced,
            lexical,
            binary,
        }
    }

    /// Inside probability that the start symbol derives `w`.
    pub fn inside(&self, w: &[TerminalId]) -> f64 {
        let n = w.len();
        if n == 0 {
            return 0.0;
        }
        let m = self.grammar.nonterminals().len();
        // chart[(i, len)] = inside probabilities of span w[i..i+len]
        let cell = |i: usize, len: usize| (len - 1) * n + i;
        let mut chart = vec![0.0f64; n * n * m];
        for (i, &t) in w.iter().enumerate() {
            for &(a, p) in &self.lexical[t] {
                chart[cell(i, 1) * m + a] += p;
            }
        }
        let mut acc = vec![CompensatedSum::new(); m];
        for len in 2..=n {
            for i in 0..=n - len {
                acc.iter_mut().for_each(|s| *s = CompensatedSum::new());
                for k in 1..len {
                    let left = cell(i, k) * m;
                    let right = cell(i + k, len - k) * m;
                    for &(a, b, c, p) in &self.binary {
                        let l = chart[left + b];
                        let r = chart[right + c];
                        if l != 0.0 && r != 0.0 {
                            acc[a].add(p * l * r);
                        }
                    }
                }
                let base = cell(i, len) * m;
                for (a, s) in acc.iter().enumerate() {
                    chart[base + a] = s.value();
                }
            }
        }
        chart[cell(0, n) * m + self.grammar.start()]
    }

    /// Probability of a whitespace-separated token sequence.
    pub fn string_probability(&self, tokens: &[&str]) -> StringProbability {
        let mut ids = Vec::with_capacity(tokens.len());
        let mut unknown = Vec::new();
        for tok in tokens {
            match self.grammar.terminal_id(tok) {
                Some(t) => ids.push(t),
                None => unknown.push((*tok).to_owned()),
            }
        }
        if !unknown.is_empty() {
            return StringProbability {
                probability: 0.0,
                unknown_tokens: unknown,
            };
        }
        StringProbability {
            probability: self.inside(&ids),
            unknown_tokens: unknown,
        }
    }
}

/// Sum of the probabilities of all parse trees of `tokens`.
pub fn string_probability(g: &Pcfg, tokens: &[&str]) -> Result<StringProbability, CnfError> {
    Ok(to_cnf(g)?.string_probability(tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    fn prob(g: &str, w: &str) -> f64 {
        let g = parse_grammar(g).unwrap();
        let tokens: Vec<&str> = w.split_whitespace().collect();
        string_probability(&g, &tokens).unwrap().probability
    }

    #[test]
    fn single_terminal_grammar_unchanged() {
        let g = parse_grammar("S -> 'x' [1]").unwrap();
        let cnf = to_cnf(&g).unwrap();
        assert_eq!(cnf.grammar, g);
        assert!(cnf.introduced.is_empty());
        assert_eq!(cnf.inside(&[0]), 1.0);
    }

    #[test]
    fn ambiguous_string_sums_parses() {
        let p = prob("S -> S S [0.4]\nS -> 'x' [0.6]", "x x x");
        assert!((p - 2.0 * 0.4f64.powi(2) * 0.6f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn unit_chain_collapses() {
        let g = "S -> A B [1]\nA -> 'x' [1]\nB -> C [0.3]\nB -> 'y' [0.7]\nC -> 'y' [1]";
        assert!((prob(g, "x y") - 1.0).abs() < 1e-15);
        assert_eq!(prob(g, "x"), 0.0);
    }

    #[test]
    fn long_rules_with_terminals() {
        let g =
            "start: E\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> 'x1' [0.5]\nV -> 'x2' [0.5]";
        assert!((prob(g, "c") - 0.5).abs() < 1e-15);
        assert!((prob(g, "c + c x1") - 0.125).abs() < 1e-15);
        assert!((prob(g, "c + c x2 + c x1") - 0.0625 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_tokens_flagged() {
        let g = parse_grammar("S -> 'x' [1]").unwrap();
        let r = string_probability(&g, &["x", "y"]).unwrap();
        assert_eq!(r.probability, 0.0);
        assert_eq!(r.unknown_tokens, ["y"]);
    }

    #[test]
    fn cycles_are_summed_in_closed_form() {
        // P_A(b) = 0.5 P_B(b), P_B(b) = 0.6 + 0.4 P_A(b)
        let g = "A -> B [0.5]\nA -> 'a' [0.5]\nB -> A [0.4]\nB -> 'b' [0.6]";
        assert!((prob(g, "b") - 0.375).abs() < 1e-15);
        assert!((prob(g, "a") - 0.625).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let g = parse_grammar("S -> [0.5]\nS -> 'x' [0.5]").unwrap();
        assert_eq!(to_cnf(&g).unwrap_err(), CnfError::NullRules);
        let g = parse_grammar("S -> S 'x' [1]").unwrap();
        assert_eq!(to_cnf(&g).unwrap_err(), CnfError::NonProductive);
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let g = parse_grammar("S -> T_0 'a' 'a' [1]\nT_0 -> 'b' [1]").unwrap();
        let cnf = to_cnf(&g).unwrap();
        let mut names = cnf.grammar.nonterminals().to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), cnf.grammar.nonterminals().len());
        assert!((cnf.string_probability(&["b", "a", "a"]).probability - 1.0).abs() < 1e-15);
    }
}
