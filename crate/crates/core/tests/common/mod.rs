//! Reference computations shared by the integration tests and the
//! acceptance harness. Everything here is deliberately naive and written
//! independently of the library algorithms it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use exprprob::{parse_grammar, Pcfg, Symbol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn grammar(text: &str) -> Pcfg {
    parse_grammar(text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

pub fn linear_grammar(p: f64, q: &[f64]) -> Pcfg {
    let mut s = format!(
        "start: E\nE -> E '+' 'c' V [{p:e}]\nE -> 'c' [{:e}]\n",
        1.0 - p
    );
    for (i, qi) in q.iter().enumerate() {
        s += &format!("V -> 'x{}' [{qi:e}]\n", i + 1);
    }
    grammar(&s)
}

pub fn poly_grammar(p: f64, q: f64, qv: &[f64]) -> Pcfg {
    let mut s = format!(
        "start: E\nE -> E '+' 'c' V [{p:e}]\nE -> 'c' [{:e}]\nV -> V F [{q:e}]\nV -> F [{:e}]\n",
        1.0 - p,
        1.0 - q
    );
    for (i, qi) in qv.iter().enumerate() {
        s += &format!("F -> 'x{}' [{qi:e}]\n", i + 1);
    }
    grammar(&s)
}

/// `branch[i-1] = (p_i, q_i)` for `i < n`.
pub fn alt_linear_grammar(p0: f64, branch: &[(f64, f64)]) -> Pcfg {
    let n = branch.len() + 1;
    let mut s = format!(
        "start: S\nS -> V1 '+' 'c' [{p0:e}]\nS -> 'c' [{:e}]\n",
        1.0 - p0
    );
    for (i, &(p, q)) in branch.iter().enumerate() {
        let i = i + 1;
        s += &format!("V{i} -> V{} '+' 'c' 'x{i}' [{p:e}]\n", i + 1);
        s += &format!("V{i} -> V{} [{q:e}]\n", i + 1);
        s += &format!("V{i} -> 'c' 'x{i}' [{:e}]\n", 1.0 - p - q);
    }
    s += &format!("V{n} -> 'c' 'x{n}' [1]\n");
    grammar(&s)
}

/// Variable indices named `xI` in a token string.
pub fn variables_in(tokens: &[String]) -> BTreeSet<usize> {
    tokens
        .iter()
        .filter_map(|t| t.strip_prefix('x').and_then(|r| r.parse().ok()))
        .collect()
}

/// Probability of a linear class by following the set of covered
/// variables draw by draw: after `i` draws the string has `i` variable
/// terms, and the class is hit if all `k` were seen and nothing else.
pub fn linear_class_markov(p: f64, q: &[f64], cls: &[usize]) -> f64 {
    let k = cls.len();
    let w: Vec<f64> = cls.iter().map(|&i| q[i - 1]).collect();
    let full = (1usize << k) - 1;
    let mut state = vec![0.0; 1 << k];
    state[0] = 1.0;
    let mut total = 0.0;
    let mut pi = 1.0;
    for _ in 0..100_000 {
        total += (1.0 - p) * pi * state[full];
        if pi < 1e-30 {
            break;
        }
        let mut next = vec![0.0; 1 << k];
        for (s, &v) in state.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (j, &wj) in w.iter().enumerate() {
                next[s | (1 << j)] += v * wj;
            }
        }
        state = next;
        pi *= p;
    }
    total
}

/// Probability of each exponent vector from `V -> V F [q] | F [1-q]`,
/// `F -> x_i [qv_i]`, by listing every word up to `max_degree`.
pub fn monomial_table(q: f64, qv: &[f64], max_degree: usize) -> Vec<(Vec<u32>, f64)> {
    let n = qv.len();
    let mut out: Vec<(Vec<u32>, f64)> = Vec::new();
    let mut words: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    for d in 1..=max_degree {
        let mut next = Vec::new();
        for (w, pr) in &words {
            for (i, &qi) in qv.iter().enumerate() {
                let mut w2 = w.clone();
                w2.push(i);
                next.push((w2, pr * qi));
            }
        }
        words = next;
        // a word of length d takes d-1 steps of V -> V F and one V -> F
        let shape = q.powi(d as i32 - 1) * (1.0 - q);
        for (w, pr) in &words {
            let mut exps = vec![0u32; n];
            for &i in w {
                exps[i] += 1;
            }
            let pr = pr * shape;
            match out.iter_mut().find(|(e, _)| *e == exps) {
                Some(slot) => slot.1 += pr,
                None => out.push((exps, pr)),
            }
        }
    }
    out
}

/// Every complete derivation of a grammar without recursion, as
/// (terminal tokens, probability).
pub fn finite_language(g: &Pcfg) -> Vec<(Vec<String>, f64)> {
    fn expand(g: &Pcfg, a: usize, depth: usize) -> Vec<(Vec<String>, f64)> {
        assert!(depth < 64, "grammar is recursive");
        let mut out = Vec::new();
        for &rid in g.rules_for(a) {
            let r = g.rule(rid);
            let mut partial: Vec<(Vec<String>, f64)> = vec![(Vec::new(), r.probability)];
            for s in &r.rhs {
                let parts = match *s {
                    Symbol::Terminal(t) => vec![(vec![g.terminal_name(t).to_owned()], 1.0)],
                    Symbol::Nonterminal(b) => expand(g, b, depth + 1),
                };
                let mut next = Vec::new();
                for (w, p) in &partial {
                    for (w2, p2) in &parts {
                        let mut w3 = w.clone();
                        w3.extend(w2.iter().cloned());
                        next.push((w3, p * p2));
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        out
    }
    expand(g, g.start(), 0)
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &c| m[a][col].abs().total_cmp(&m[c][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        let d = m[col][col];
        assert!(d.abs() > 1e-14, "singular system");
        for r in col + 1..n {
            let f = m[r][col] / d;
            if f != 0.0 {
                let (top, bottom) = m.split_at_mut(r);
                for (x, &y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * y;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x
}

/// Inside probability of `tokens` from the start symbol for a grammar
/// without null rules. Chains of unit rules are summed in closed form per
/// span: `x = (I - U)^-1 b`, the geometric series over unit steps.
pub fn inside_oracle(g: &Pcfg, tokens: &[&str]) -> f64 {
    assert!(!g.has_null_rules());
    let n = tokens.len();
    let nt = g.nonterminals().len();
    if n == 0 {
        return 0.0;
    }
    let ids: Vec<Option<usize>> = tokens.iter().map(|t| g.terminal_id(t)).collect();
    // table[i][len-1][A]
    let mut table = vec![vec![vec![0.0; nt]; n]; n];
    let mut unit = vec![vec![0.0; nt]; nt];
    for r in g.rules() {
        if let Some(b) = r.unit_target() {
            unit[r.lhs][b] += r.probability;
        }
    }
    fn ways(
        rhs: &[Symbol],
        ids: &[Option<usize>],
        table: &[Vec<Vec<f64>>],
        start: usize,
        end: usize,
    ) -> f64 {
        let Some((first, rest)) = rhs.split_first() else {
            return if start == end { 1.0 } else { 0.0 };
        };
        let mut total = 0.0;
        let max_end = end - rest.len();
        for mid in start + 1..=max_end {
            let head = match *first {
                Symbol::Terminal(t) => {
                    if mid == start + 1 && ids[start] == Some(t) {
                        1.0
                    } else {
                        0.0
                    }
                }
                Symbol::Nonterminal(b) => table[start][mid - start - 1][b],
            };
            if head != 0.0 {
                total += head * ways(rest, ids, table, mid, end);
            }
        }
        total
    }
    for len in 1..=n {
        for i in 0..=n - len {
            let mut b = vec![0.0; nt];
            for r in g.rules() {
                if r.unit_target().is_some() || r.rhs.len() > len {
                    continue;
                }
                b[r.lhs] += r.probability * ways(&r.rhs, &ids, &table, i, i + len);
            }
            let m: Vec<Vec<f64>> = (0..nt)
                .map(|a| {
                    (0..nt)
                        .map(|c| if a == c { 1.0 } else { 0.0 } - unit[a][c])
                        .collect()
                })
                .collect();
            table[i][len - 1] = solve(m, b);
        }
    }
    table[0][n - 1][g.start()]
}

/// All strings over `alphabet` with length 1..=max_len.
pub fn all_strings(alphabet: &[&'static str], max_len: usize) -> Vec<Vec<&'static str>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<&str>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for &a in alphabet {
                let mut w2 = w.clone();
                w2.push(a);
                next.push(w2);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Random grammar over 'a', 'b' without null rules and with one injected
/// cycle of unit rules of length `cycle_len` through the first nonterminals.
pub fn random_cyclic_grammar(seed: u64, cycle_len: usize) -> Pcfg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["S", "A", "B", "C"];
    let nt = rng.random_range(cycle_len.max(2)..=4);
    let mut text = String::from("start: S\n");
    for (idx, name) in names.iter().enumerate().take(nt) {
        let mut rules: Vec<(String, f64)> = Vec::new();
        let term = if rng.random_bool(0.5) { "'a'" } else { "'b'" };
        rules.push((term.to_owned(), rng.random_range(1.0..2.0)));
        if rng.random_bool(0.5) {
            let other = if term == "'a'" { "'b'" } else { "'a'" };
            rules.push((other.to_owned(), rng.random_range(0.2..1.0)));
        }
        for _ in 0..rng.random_range(1..=2) {
            let len = rng.random_range(2..=3);
            let rhs: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        if rng.random_bool(0.5) { "'a'" } else { "'b'" }.to_owned()
                    } else {
                        names[rng.random_range(0..nt)].to_owned()
                    }
                })
                .collect();
            rules.push((rhs.join(" "), rng.random_range(0.1..0.5)));
        }
        if idx < cycle_len {
            let target = names[(idx + 1) % cycle_len];
            rules.push((target.to_owned(), rng.random_range(0.2..1.0)));
        }
        if rng.random_bool(0.3) {
            // an extra unit rule that keeps the graph acyclic apart from the
            // injected cycle
            if idx + 1 < nt && idx + 1 >= cycle_len {
                rules.push((names[idx + 1].to_owned(), rng.random_range(0.1..0.4)));
            }
        }
        let total: f64 = rules.iter().map(|r| r.1).sum();
        for (rhs, w) in rules {
            text += &format!("{name} -> {rhs} [{:.17e}]\n", w / total);
        }
    }
    grammar(&text)
}

/// Per-lhs probability sums.
pub fn lhs_sums(g: &Pcfg) -> Vec<f64> {
    let mut s = vec![0.0; g.nonterminals().len()];
    for r in g.rules() {
        s[r.lhs] += r.probability;
    }
    s
}

/// Ordinary least squares with two columns by Cramer's rule.
pub fn ols2(cols: [&[f64]; 2], y: &[f64]) -> (f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (a, b) = (cols[0], cols[1]);
    let (aa, ab, bb) = (dot(a, a), dot(a, b), dot(b, b));
    let (ay, by) = (dot(a, y), dot(b, y));
    let det = aa * bb - ab * ab;
    ((ay * bb - ab * by) / det, (aa * by - ab * ay) / det)
}

/// The regression example: rows `(x1, x2, y)` drawn from `y = 2.5 x1 - x2`.
pub const EXAMPLE_ROWS: [(f64, f64, f64); 4] = [
    (1.0, 4.0, -1.5),
    (2.0, 7.0, -2.0),
    (1.0, -8.0, 10.5),
    (6.0, -10.0, 25.0),
];

pub fn example_csv() -> String {
    let mut s = String::from("x1,x2,y\n");
    for (a, b, y) in EXAMPLE_ROWS {
        s += &format!("{a},{b},{y}\n");
    }
    s
}

/// Every parse tree from the start symbol whose yield has at most
/// `max_len` terminals. Needs a grammar without null rules or cycles of
/// unit rules, so the set is finite.
pub fn enumerate_trees(g: &Pcfg, max_len: usize) -> Vec<exprprob::derivation::ParseTree> {
    use exprprob::derivation::ParseTree;
    use std::collections::HashMap;

    fn go(
        g: &Pcfg,
        a: usize,
        budget: usize,
        depth: usize,
        memo: &mut HashMap<(usize, usize), Vec<(ParseTree, usize)>>,
    ) -> Vec<(ParseTree, usize)> {
        assert!(depth < 200, "unit rules form a cycle");
        if let Some(v) = memo.get(&(a, budget)) {
            return v.clone();
        }
        let mut out = Vec::new();
        for &rid in g.rules_for(a) {
            let rhs = &g.rule(rid).rhs;
            if rhs.len() > budget {
                continue;
            }
            // partial expansions: (children, used length)
            let mut partial: Vec<(Vec<ParseTree>, usize)> = vec![(Vec::new(), 0)];
            for (pos, s) in rhs.iter().enumerate() {
                let rest = rhs.len() - pos - 1;
                let mut next = Vec::new();
                for (children, used) in &partial {
                    let room = budget - used - rest;
                    let options: Vec<(ParseTree, usize)> = match *s {
                        Symbol::Terminal(t) => vec![(ParseTree::leaf(t), 1)],
                        Symbol::Nonterminal(b) => go(g, b, room, depth + 1, memo),
                    };
                    for (tree, len) in options {
                        if len <= room {
                            let mut c = children.clone();
                            c.push(tree);
                            next.push((c, used + len));
                        }
                    }
                }
                partial = next;
            }
            for (children, used) in partial {
                out.push((ParseTree::node(g, rid, children), used));
            }
        }
        assert!(out.len() <= 100_000, "too many trees");
        memo.insert((a, budget), out.clone());
        out
    }
    let mut memo = HashMap::new();
    go(g, g.start(), max_len, 0, &mut memo)
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}

/// Product of rule probabilities over a tree, by direct multiplication.
pub fn tree_product(g: &Pcfg, t: &exprprob::derivation::ParseTree) -> f64 {
    let own = t.rule.map_or(1.0, |r| g.rule(r).probability);
    own * t
        .children
        .iter()
        .map(|c| tree_product(g, c))
        .product::<f64>()
}
