//! Linear-cycle removal, null-derivation probabilities and consistency
//! checks.

use serde::Serialize;
use thiserror::Error;

use crate::derivation::{run_generations, GenerationOutcome, SamplerTables};
use crate::grammar::{NonterminalId, Pcfg, Rule, Symbol};
use crate::numeric::CompensatedSum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Upper bound on cycle-removal steps.
pub const MAX_REMOVAL_STEPS: usize = 1_000_000;
/// Upper bound on fixed-point iterations.
pub const MAX_FIXED_POINT_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("grammar contains null rules")]
    NullRules,
    #[error("cycle removal did not finish within {0} steps")]
    StepLimit(usize),
    #[error(
        "fixed-point iteration did not converge after {iterations} iterations (last value {last})"
    )]
    NoConvergence { iterations: usize, last: f64 },
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("unknown nonterminal {0:?}")]
    UnknownNonterminal(String),
}

/// Simple cycles of the unit-rule graph, each as a list of nonterminal names
/// `A1, ..., Am` standing for `A1 → A2 → ... → Am → A1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CycleReport {
    pub cycles: Vec<Vec<String>>,
    pub lengths: Vec<usize>,
}

impl CycleReport {
    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

/// Successors of each nonterminal in the unit-rule graph (edges `A → B`
/// with positive probability), deduplicated and in name order.
fn unit_graph(g: &Pcfg, rank: &[usize]) -> Vec<Vec<NonterminalId>> {
    let mut succ = vec![Vec::new(); g.nonterminals().len()];
    for rule in g.rules() {
        if rule.probability <= 0.0 {
            continue;
        }
        if let Some(b) = rule.unit_target() {
            if !succ[rule.lhs].contains(&b) {
                succ[rule.lhs].push(b);
            }
        }
    }
    for list in &mut succ {
        list.sort_by_key(|&b| rank[b]);
    }
    succ
}

/// Position of each nonterminal in lexicographic name order.
fn name_rank(g: &Pcfg) -> Vec<usize> {
    let mut order: Vec<NonterminalId> = (0..g.nonterminals().len()).collect();
    order.sort_by(|&a, &b| g.nonterminal_name(a).cmp(g.nonterminal_name(b)));
    let mut rank = vec![0; order.len()];
    for (r, &a) in order.iter().enumerate() {
        rank[a] = r;
    }
    rank
}

/// All simple cycles as id sequences, each rotated so that its
/// lexicographically smallest name comes first.
fn simple_cycles(g: &Pcfg) -> Vec<Vec<NonterminalId>> {
    let rank = name_rank(g);
    let succ = unit_graph(g, &rank);
    let mut order: Vec<NonterminalId> = (0..rank.len()).collect();
    order.sort_by_key(|&a| rank[a]);

    let mut cycles = Vec::new();
    let mut on_path = vec![false; rank.len()];
    for &s in &order {
        // DFS restricted to nodes ranked above s; each cycle is found once,
        // from its smallest member.
        let mut path = vec![s];
        let mut cursor = vec![0usize];
        on_path[s] = true;
        while let Some(&v) = path.last() {
            let i = *cursor.last().unwrap();
            if i < succ[v].len() {
                *cursor.last_mut().unwrap() += 1;
                let w = succ[v][i];
                if w == s {
                    cycles.push(path.clone());
                } else if rank[w] > rank[s] && !on_path[w] {
                    on_path[w] = true;
                    path.push(w);
                    cursor.push(0);
                }
            } else {
                on_path[v] = false;
                path.pop();
                cursor.pop();
            }
        }
    }
    cycles
}

/// Reports every simple cycle `A1 → ... → Am → A1` made of unit rules with
/// positive probability; self-loops are cycles of length 1.
pub fn find_linear_cycles(g: &Pcfg) -> CycleReport {
    let cycles = simple_cycles(g);
    CycleReport {
        lengths: cycles.iter().map(Vec::len).collect(),
        cycles: cycles
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .map(|a| g.nonterminal_name(a).to_owned())
                    .collect()
            })
            .collect(),
    }
}

/// A self-loop `A → A` on a nonterminal whose every other rule has
/// probability zero. Such a nonterminal derives nothing and is left alone.
fn is_trapped(rules: &[Rule], a: NonterminalId) -> bool {
    rules
        .iter()
        .filter(|r| r.lhs == a && r.probability > 0.0)
        .all(|r| r.unit_target() == Some(a))
}

/// Removes the self-loop `A → A [p]` and rescales the other rules of `A` by
/// `1 / (1 - p)`.
fn remove_self_loop(rules: &mut Vec<Rule>, a: NonterminalId) {
    let p: f64 = rules
        .iter()
        .filter(|r| r.lhs == a && r.unit_target() == Some(a))
        .map(|r| r.probability)
        .sum();
    rules.retain(|r| !(r.lhs == a && r.unit_target() == Some(a)));
    for r in rules.iter_mut().filter(|r| r.lhs == a) {
        r.probability /= 1.0 - p;
    }
}

/// Removes `Am → A1 [pm]` and adds `Am → α [pm·c]` for every rule
/// `A1 → α [c]`, merging into an existing `Am → α` when present.
fn remove_back_edge(rules: &mut Vec<Rule>, first: NonterminalId, last: NonterminalId) {
    let pm: f64 = rules
        .iter()
        .filter(|r| r.lhs == last && r.unit_target() == Some(first))
        .map(|r| r.probability)
        .sum();
    rules.retain(|r| !(r.lhs == last && r.unit_target() == Some(first)));
    let inherited: Vec<Rule> = rules.iter().filter(|r| r.lhs == first).cloned().collect();
    for rule in inherited {
        let added = pm * rule.probability;
        match rules
            .iter_mut()
            .find(|r| r.lhs == last && r.rhs == rule.rhs)
        {
            Some(existing) => existing.probability += added,
            None => rules.push(Rule {
                lhs: last,
                rhs: rule.rhs,
                probability: added,
            }),
        }
    }
}

/// One elimination step on `cycle` (its first element plays `A1`).
///
/// Exposed so tests can inspect intermediate grammars.
pub fn removal_step(g: &Pcfg, cycle: &[NonterminalId]) -> Pcfg {
    let mut rules = g.rules().to_vec();
    match cycle {
        [] => {}
        [a] => remove_self_loop(&mut rules, *a),
        [first, .., last] => remove_back_edge(&mut rules, *first, *last),
    }
    g.with_rules(rules)
}

/// Cycle that the removal loop treats next: self-loops first, then the
/// longest cycle, ties broken by the lexicographic order of member names.
fn next_cycle(g: &Pcfg) -> Option<Vec<NonterminalId>> {
    let cycles: Vec<Vec<NonterminalId>> = simple_cycles(g)
        .into_iter()
        .filter(|c| !(c.len() == 1 && is_trapped(g.rules(), c[0])))
        .collect();
    let names = |c: &Vec<NonterminalId>| -> Vec<&str> {
        c.iter().map(|&a| g.nonterminal_name(a)).collect()
    };
    if let Some(self_loop) = cycles
        .iter()
        .filter(|c| c.len() == 1)
        .min_by(|a, b| names(a).cmp(&names(b)))
    {
        return Some(self_loop.clone());
    }
    cycles
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| names(b).cmp(&names(a))))
        .cloned()
}

/// Eliminates linear cycles while preserving the distribution over strings.
///
/// Nonterminals whose only rule of positive probability is `A → A` are left
/// as they are; they never derive a string.
pub fn remove_linear_cycles(g: &Pcfg) -> Result<Pcfg, TransformError> {
    if g.has_null_rules() {
        return Err(TransformError::NullRules);
    }
    let mut current = g.clone();
    for _ in 0..MAX_REMOVAL_STEPS {
        match next_cycle(&current) {
            None => return Ok(current),
            Some(cycle) => current = removal_step(&current, &cycle),
        }
    }
    Err(TransformError::StepLimit(MAX_REMOVAL_STEPS))
}

/// Result of a fixed-point iteration over all nonterminals.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `t_A = Σ P(ρ) Π t_B` from `t = 0`, with every terminal
/// contributing `terminal_factor`, until successive iterates differ by at
/// most `tol` in max norm.
pub fn fixed_point(g: &Pcfg, terminal_factor: f64, tol: f64, max_iterations: usize) -> FixedPoint {
    let n = g.nonterminals().len();
    let mut t = vec![0.0; n];
    let mut next = vec![0.0; n];
    for iteration in 1..=max_iterations {
        for (a, slot) in next.iter_mut().enumerate() {
            let mut acc = CompensatedSum::new();
            for &r in g.rules_for(a) {
                let rule = g.rule(r);
                let mut term = rule.probability;
                for s in &rule.rhs {
                    term *= match *s {
                        Symbol::Terminal(_) => terminal_factor,
                        Symbol::Nonterminal(b) => t[b],
                    };
                }
                acc.add(term);
            }
            *slot = acc.value().min(1.0);
        }
        let diff = t
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut t, &mut next);
        if diff <= tol {
            return FixedPoint {
                values: t,
                iterations: iteration,
                converged: true,
            };
        }
    }
    FixedPoint {
        values: t,
        iterations: max_iterations,
        converged: false,
    }
}

/// Probability that `a` derives the empty string: the least nonnegative
/// fixed point of the null-derivation system.
pub fn p_epsilon(g: &Pcfg, a: NonterminalId, tol: f64) -> Result<f64, TransformError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(TransformError::InvalidTolerance);
    }
    let fp = fixed_point(g, 0.0, tol, MAX_FIXED_POINT_ITERATIONS);
    if fp.converged {
        Ok(fp.values[a])
    } else {
        Err(TransformError::NoConvergence {
            iterations: fp.iterations,
            last: fp.values[a],
        })
    }
}

/// Probability that a derivation from each nonterminal terminates.
pub fn termination_probabilities(g: &Pcfg) -> FixedPoint {
    fixed_point(g, 1.0, 1e-15, MAX_FIXED_POINT_ITERATIONS)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyEstimate {
    /// Deterministic termination probability of the start symbol.
    pub fixed_point: f64,
    pub fixed_point_converged: bool,
    /// Fraction of sampled derivations finishing within `max_steps`.
    pub monte_carlo: f64,
    /// 95% confidence halfwidth for `monte_carlo`.
    pub halfwidth: f64,
    pub samples: u64,
    pub terminated: u64,
}

/// Half-width of the 95% Agresti–Coull interval for `successes / n`.
pub fn binomial_halfwidth(successes: u64, n: u64) -> f64 {
    const Z: f64 = 1.959_963_984_540_054;
    let n_adj = n as f64 + Z * Z;
    let p_adj = (successes as f64 + Z * Z / 2.0) / n_adj;
    Z * (p_adj * (1.0 - p_adj) / n_adj).sqrt()
}

/// Monte-Carlo and fixed-point estimates of the probability that a
/// derivation from the start symbol terminates.
pub fn consistency_estimate(
    g: &Pcfg,
    samples: u64,
    max_steps: u64,
    seed: u64,
) -> ConsistencyEstimate {
    let fp = termination_probabilities(g);
    let tables = SamplerTables::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terminated = 0u64;
    for _ in 0..samples {
        if let GenerationOutcome::Terminated(_) =
            run_generations(&tables, max_steps, &mut rng, false)
        {
            terminated += 1;
        }
    }
    ConsistencyEstimate {
        fixed_point: fp.values[g.start()],
        fixed_point_converged: fp.converged,
        monte_carlo: terminated as f64 / samples.max(1) as f64,
        halfwidth: binomial_halfwidth(terminated, samples.max(1)),
        samples,
        terminated,
    }
}
