use crate::grammar::{Diagnostic, DiagnosticKind, Pcfg, Symbol, ValidationReport, SUM_TOLERANCE};
use crate::numeric::CompensatedSum;
use crate::transforms::find_linear_cycles;

pub(crate) fn validate(g: &Pcfg) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut error = |kind, message: String| report.errors.push(Diagnostic { kind, message });

    for (a, name) in g.nonterminals().iter().enumerate() {
        let rules = g.rules_for(a);
        if rules.is_empty() {
            error(
                DiagnosticKind::NoRules,
                format!("nonterminal {name} has no rules"),
            );
            continue;
        }
        let sum: f64 = rules
            .iter()
            .map(|&r| g.rule(r).probability)
            .collect::<CompensatedSum>()
            .value();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            error(
                DiagnosticKind::ProbabilitySum,
                format!("probabilities for {name} sum to {sum}"),
            );
        }
    }
    for rule in g.rules() {
        if !(0.0..=1.0).contains(&rule.probability) {
            error(
                DiagnosticKind::ProbabilityRange,
                format!(
                    "probability {} outside [0, 1] in rule for {}",
                    rule.probability,
                    g.nonterminal_name(rule.lhs)
                ),
            );
        }
    }
    let mut undeclared = false;
    for rule in g.rules() {
        if !g.symbols_in_range(rule) {
            undeclared = true;
            error(
                DiagnosticKind::UndeclaredSymbol,
                format!(
                    "undeclared symbol in rule for {}",
                    g.nonterminal_name(rule.lhs)
                ),
            );
        }
    }
    if undeclared {
        // the graph checks below index by symbol id
        return report;
    }

    let mut warn = |kind, message: String| report.warnings.push(Diagnostic { kind, message });
    let reachable = reachable(g);
    for (a, name) in g.nonterminals().iter().enumerate() {
        if !reachable[a] {
            warn(
                DiagnosticKind::Unreachable,
                format!("nonterminal {name} is unreachable from the start symbol"),
            );
        }
    }
    let productive = productive(g);
    for (a, name) in g.nonterminals().iter().enumerate() {
        if !productive[a] {
            warn(
                DiagnosticKind::NonProductive,
                format!("nonterminal {name} derives no terminal string"),
            );
        }
    }
    for rule in g.rules().iter().filter(|r| r.is_null()) {
        warn(
            DiagnosticKind::NullRule,
            format!("null rule for {}", g.nonterminal_name(rule.lhs)),
        );
    }
    for cycle in find_linear_cycles(g).cycles {
        let mut path = cycle.clone();
        path.push(cycle[0].clone());
        warn(
            DiagnosticKind::LinearCycle,
            format!("linear cycle {}", path.join("→")),
        );
    }
    report
}

/// Nonterminals reachable from the start symbol through rules of positive
/// probability.
pub(crate) fn reachable(g: &Pcfg) -> Vec<bool> {
    let mut seen = vec![false; g.nonterminals().len()];
    let mut stack = vec![g.start()];
    seen[g.start()] = true;
    while let Some(a) = stack.pop() {
        for &r in g.rules_for(a) {
            let rule = g.rule(r);
            if rule.probability <= 0.0 {
                continue;
            }
            for b in rule.rhs.iter().filter_map(|s| s.as_nonterminal()) {
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    seen
}

/// Nonterminals that derive at least one terminal string with positive
/// probability.
pub(crate) fn productive(g: &Pcfg) -> Vec<bool> {
    let mut productive = vec![false; g.nonterminals().len()];
    let mut changed = true;
    while changed {
        changed = false;
        for rule in g.rules() {
            if productive[rule.lhs] || rule.probability <= 0.0 {
                continue;
            }
            let ok = rule.rhs.iter().all(|s| match *s {
                Symbol::Terminal(_) => true,
                Symbol::Nonterminal(b) => productive[b],
            });
            if ok {
                productive[rule.lhs] = true;
                changed = true;
            }
        }
    }
    productive
}

/// Minimal number of rule applications needed to derive a terminal string
/// from each nonterminal; `None` for non-productive ones.
pub(crate) fn min_steps(g: &Pcfg) -> Vec<Option<u64>> {
    let mut best: Vec<Option<u64>> = vec![None; g.nonterminals().len()];
    let mut changed = true;
    while changed {
        changed = false;
        for rule in g.rules() {
            if rule.probability <= 0.0 {
                continue;
            }
            let mut total: u64 = 1;
            let mut ok = true;
            for s in &rule.rhs {
                if let Symbol::Nonterminal(b) = *s {
                    match best[b] {
                        Some(v) => total = total.saturating_add(v),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if ok && best[rule.lhs].is_none_or(|cur| total < cur) {
                best[rule.lhs] = Some(total);
                changed = true;
            }
        }
    }
    best
}
