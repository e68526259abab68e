//! Parse trees and seeded random derivations.
//!
//! The sampler expands a derivation one generation at a time: all
//! nonterminals created by the previous round of rule applications are
//! rewritten together, and for each nonterminal type only the number of
//! times each rule is chosen is drawn (a multinomial). A run is abandoned as
//! soon as the steps already taken plus the fewest steps that could still
//! finish the open nonterminals exceed `max_steps`, which classifies it
//! exactly as a leftmost derivation with the same cutoff would. Only runs
//! that terminate are turned into an actual tree, by handing out the drawn
//! rule choices to the nodes of each generation in random order.
//!
//! Generator: ChaCha8 seeded with `seed_from_u64(seed)`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::grammar::{NonterminalId, Pcfg, RuleId, Symbol, TerminalId};
use crate::validate::min_steps;

/// A node of a parse tree. Terminal leaves carry no rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseTree {
    pub symbol: Symbol,
    pub rule: Option<RuleId>,
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn leaf(t: TerminalId) -> Self {
        ParseTree {
            symbol: Symbol::Terminal(t),
            rule: None,
            children: Vec::new(),
        }
    }

    pub fn node(g: &Pcfg, rule: RuleId, children: Vec<ParseTree>) -> Self {
        ParseTree {
            symbol: Symbol::Nonterminal(g.rule(rule).lhs),
            rule: Some(rule),
            children,
        }
    }

    /// Left-to-right sequence of terminal leaves.
    pub fn terminals(&self) -> Vec<TerminalId> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let Symbol::Terminal(t) = node.symbol {
                out.push(t);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Rule ids of all internal nodes, in preorder.
    pub fn rules(&self) -> Vec<RuleId> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.extend(node.rule);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Checks that every internal node's children match its rule.
    pub fn is_consistent_with(&self, g: &Pcfg) -> bool {
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match (node.symbol, node.rule) {
                (Symbol::Terminal(_), None) if node.children.is_empty() => {}
                (Symbol::Nonterminal(a), Some(r)) if r < g.rules().len() => {
                    let rule = g.rule(r);
                    if rule.lhs != a
                        || rule.rhs.len() != node.children.len()
                        || rule
                            .rhs
                            .iter()
                            .zip(&node.children)
                            .any(|(s, c)| *s != c.symbol)
                    {
                        return false;
                    }
                }
                _ => return false,
            }
            stack.extend(&node.children);
        }
        true
    }
}

/// Product of the probabilities of all rules used in `t`, accumulated in
/// log space.
pub fn tree_probability(g: &Pcfg, t: &ParseTree) -> f64 {
    t.rules()
        .into_iter()
        .map(|r| g.rule(r).probability.ln())
        .sum::<f64>()
        .exp()
}

/// Per-grammar data the sampler needs.
#[derive(Debug, Clone)]
pub(crate) struct SamplerTables {
    start: NonterminalId,
    /// Rules of positive probability for each nonterminal.
    choices: Vec<Vec<(RuleId, f64)>>,
    /// Nonterminal children of each rule, in order.
    children: Vec<Vec<NonterminalId>>,
    rhs: Vec<Vec<Symbol>>,
    min_steps: Vec<Option<u64>>,
}

impl SamplerTables {
    pub(crate) fn new(g: &Pcfg) -> Self {
        let choices = (0..g.nonterminals().len())
            .map(|a| {
                g.rules_for(a)
                    .iter()
                    .map(|&r| (r, g.rule(r).probability))
                    .filter(|&(_, p)| p > 0.0)
                    .collect()
            })
            .collect();
        SamplerTables {
            start: g.start(),
            choices,
            children: g
                .rules()
                .iter()
                .map(|r| r.rhs.iter().filter_map(|s| s.as_nonterminal()).collect())
                .collect(),
            rhs: g.rules().iter().map(|r| r.rhs.clone()).collect(),
            min_steps: min_steps(g),
        }
    }
}

/// Rule choice counts of one nonterminal type within one generation.
#[derive(Debug, Clone)]
pub(crate) struct TypeDraw {
    nonterminal: NonterminalId,
    counts: Vec<(RuleId, u64)>,
}

pub(crate) enum GenerationOutcome {
    /// The run finished; the draws are kept when requested.
    Terminated(Option<Vec<Vec<TypeDraw>>>),
    Exceeded,
}

/// Draws how many of `n` independent choices fall on each rule.
fn draw_counts(choices: &[(RuleId, f64)], n: u64, rng: &mut ChaCha8Rng) -> Vec<(RuleId, u64)> {
    let mut out = Vec::with_capacity(choices.len());
    if n == 1 {
        let total: f64 = choices.iter().map(|c| c.1).sum();
        let mut u = rng.random::<f64>() * total;
        for &(r, p) in choices {
            if u < p {
                out.push((r, 1));
                return out;
            }
            u -= p;
        }
        out.push((choices[choices.len() - 1].0, 1));
        return out;
    }
    let mut remaining = n;
    let mut mass: f64 = choices.iter().map(|c| c.1).sum();
    for (i, &(r, p)) in choices.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let x = if i + 1 == choices.len() {
            remaining
        } else {
            let share = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, share)
                .expect("share is a probability")
                .sample(rng)
        };
        if x > 0 {
            out.push((r, x));
        }
        remaining -= x;
        mass -= p;
    }
    out
}

/// Runs one derivation generation by generation.
pub(crate) fn run_generations(
    tables: &SamplerTables,
    max_steps: u64,
    rng: &mut ChaCha8Rng,
    record: bool,
) -> GenerationOutcome {
    let n = tables.choices.len();
    let mut counts = vec![0u64; n];
    counts[tables.start] = 1;
    let mut active = vec![tables.start];
    let mut steps = 0u64;
    let mut history = Vec::new();
    while !active.is_empty() {
        let mut lower = steps;
        for &a in &active {
            match tables.min_steps[a] {
                Some(m) => lower = lower.saturating_add(counts[a].saturating_mul(m)),
                None => return GenerationOutcome::Exceeded,
            }
        }
        if lower > max_steps {
            return GenerationOutcome::Exceeded;
        }
        let mut next = vec![0u64; n];
        let mut next_active = Vec::new();
        let mut generation = Vec::new();
        for &a in &active {
            let c = counts[a];
            steps += c;
            let drawn = draw_counts(&tables.choices[a], c, rng);
            for &(r, x) in &drawn {
                for &b in &tables.children[r] {
                    if next[b] == 0 {
                        next_active.push(b);
                    }
                    next[b] += x;
                }
            }
            if record {
                generation.push(TypeDraw {
                    nonterminal: a,
                    counts: drawn,
                });
            }
        }
        if record {
            history.push(generation);
        }
        next_active.sort_unstable();
        counts = next;
        active = next_active;
    }
    GenerationOutcome::Terminated(record.then_some(history))
}

/// Turns recorded per-generation counts into a tree and returns its yield.
fn assemble_yield(
    tables: &SamplerTables,
    history: &[Vec<TypeDraw>],
    rng: &mut ChaCha8Rng,
) -> Vec<TerminalId> {
    // node_rule[i]: rule applied at node i; first_child[i]: index of the
    // node for its first nonterminal child. Nodes are numbered generation by
    // generation, left to right, so the nonterminal children of a node are
    // contiguous.
    let mut node_rule: Vec<RuleId> = Vec::new();
    let mut first_child: Vec<usize> = Vec::new();
    let mut level: Vec<NonterminalId> = vec![tables.start];
    let mut level_start = 0usize;
    let mut pools: HashMap<NonterminalId, Vec<RuleId>> = HashMap::new();
    for generation in history {
        pools.clear();
        for draw in generation {
            let mut pool = Vec::new();
            for &(r, x) in &draw.counts {
                pool.extend(std::iter::repeat_n(r, x as usize));
            }
            pool.shuffle(rng);
            pools.insert(draw.nonterminal, pool);
        }
        let next_start = level_start + level.len();
        let mut next_level = Vec::new();
        for &a in &level {
            let r = pools
                .get_mut(&a)
                .and_then(Vec::pop)
                .expect("draw counts match the generation");
            node_rule.push(r);
            first_child.push(next_start + next_level.len());
            next_level.extend(&tables.children[r]);
        }
        level_start = next_start;
        level = next_level;
    }
    debug_assert!(level.is_empty());

    let mut out = Vec::new();
    // (node, position in rhs, next child node)
    let mut stack = vec![(0usize, 0usize, first_child[0])];
    while let Some(top) = stack.last_mut() {
        let (node, pos, child) = *top;
        let rhs = &tables.rhs[node_rule[node]];
        if pos == rhs.len() {
            stack.pop();
            continue;
        }
        top.1 += 1;
        match rhs[pos] {
            Symbol::Terminal(t) => out.push(t),
            Symbol::Nonterminal(_) => {
                top.2 += 1;
                stack.push((child, 0, first_child[child]));
            }
        }
    }
    out
}

/// Seeded source of derived strings.
pub struct Sampler {
    tables: SamplerTables,
    max_steps: u64,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(g: &Pcfg, max_steps: u64, seed: u64) -> Self {
        Sampler {
            tables: SamplerTables::new(g),
            max_steps,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One derivation: its terminal string, or `None` when it needs more
    /// than `max_steps` rule applications.
    pub fn next_string(&mut self) -> Option<Vec<TerminalId>> {
        match run_generations(&self.tables, self.max_steps, &mut self.rng, true) {
            GenerationOutcome::Terminated(history) => Some(assemble_yield(
                &self.tables,
                &history.expect("recorded"),
                &mut self.rng,
            )),
            GenerationOutcome::Exceeded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StringFrequency {
    pub string: String,
    pub count: u64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReport {
    pub samples: u64,
    pub terminated: u64,
    pub max_steps: u64,
    /// Distinct strings, most frequent first, ties in string order.
    pub strings: Vec<StringFrequency>,
}

impl SampleReport {
    /// Keeps only the `n` most frequent strings.
    pub fn truncate(&mut self, n: usize) {
        self.strings.truncate(n);
    }
}

/// Draws `count` derivations and tallies the strings of those that finish
/// within `max_steps` rule applications.
pub fn sample(g: &Pcfg, count: u64, max_steps: u64, seed: u64) -> SampleReport {
    let mut sampler = Sampler::new(g, max_steps, seed);
    let mut tally: HashMap<Vec<TerminalId>, u64> = HashMap::new();
    let mut terminated = 0;
    for _ in 0..count {
        if let Some(w) = sampler.next_string() {
            terminated += 1;
            *tally.entry(w).or_default() += 1;
        }
    }
    let mut strings: Vec<StringFrequency> = tally
        .into_iter()
        .map(|(w, c)| StringFrequency {
            string: g.render(&w),
            count: c,
            frequency: c as f64 / count as f64,
        })
        .collect();
    strings.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.string.cmp(&b.string)));
    SampleReport {
        samples: count,
        terminated,
        max_steps,
        strings,
    }
}
