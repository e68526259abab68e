mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use exprprob::classes::{
    canonicalize, enumerate_strings, parse_expression, representative, ClassError, ExprClass,
    LinearClass, MonomialKey, PolynomialClass, RationalClass,
};
use exprprob::family::{classify_family, GrammarFamily};
use exprprob::prob::{expression_probability, Mode};
use proptest::prelude::*;

fn linear(n: usize) -> GrammarFamily {
    classify_family(&linear_grammar(0.5, &vec![1.0 / n as f64; n])).unwrap()
}

fn poly(n: usize) -> GrammarFamily {
    classify_family(&poly_grammar(0.5, 0.5, &vec![1.0 / n as f64; n])).unwrap()
}

fn rational(n: usize) -> GrammarFamily {
    let mut text = String::from(
        "start: S\nS -> '(' E ')' '/' '(' E ')' [1]\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> V F [0.5]\nV -> F [0.5]\n",
    );
    for i in 1..=n {
        text += &format!("F -> 'x{i}' [{:e}]\n", 1.0 / n as f64);
    }
    classify_family(&grammar(&text)).unwrap()
}

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn mono(pairs: &[(usize, u32)]) -> MonomialKey {
    MonomialKey::new(pairs.iter().copied())
}

#[test]
fn canonicalize_examples() {
    let fam = linear(2);
    assert_eq!(
        canonicalize(&fam, &toks("c + c x2 + c x1 + c x2")).unwrap(),
        ExprClass::Linear(LinearClass::new([1, 2]))
    );
    assert_eq!(
        canonicalize(&fam, &toks("c")).unwrap(),
        ExprClass::Linear(LinearClass::default())
    );
    let fam = poly(2);
    let a = canonicalize(&fam, &toks("c + c x1 x2 x1")).unwrap();
    let b = canonicalize(&fam, &toks("c + c x2 x1 x1")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a,
        ExprClass::Polynomial(PolynomialClass::new([mono(&[(1, 2), (2, 1)])]))
    );
}

#[test]
fn non_derivable_strings_are_refused() {
    let fam = linear(2);
    for bad in ["c + x1", "c + c x1 x2", "c c", "+ c x1", "c + c x3"] {
        assert!(
            matches!(
                canonicalize(&fam, &toks(bad)),
                Err(ClassError::NotDerivable { .. })
            ),
            "{bad}"
        );
    }
}

#[test]
fn parse_expression_examples() {
    assert_eq!(
        parse_expression(&linear(3), "c").unwrap(),
        ExprClass::Linear(LinearClass::default())
    );
    assert_eq!(
        parse_expression(&linear(3), "c + c*x1 + c*x3").unwrap(),
        ExprClass::Linear(LinearClass::new([1, 3]))
    );
    assert_eq!(
        parse_expression(&poly(2), "c + c*x1^2*x2 + c*x2").unwrap(),
        ExprClass::Polynomial(PolynomialClass::new([
            mono(&[(1, 2), (2, 1)]),
            mono(&[(2, 1)])
        ]))
    );
    assert_eq!(
        parse_expression(&rational(2), "(c + c*x1^2)/(c + c*x2)").unwrap(),
        ExprClass::Rational(RationalClass {
            numerator: PolynomialClass::new([mono(&[(1, 2)])]),
            denominator: PolynomialClass::new([mono(&[(2, 1)])]),
        })
    );
    assert_eq!(
        parse_expression(&rational(1), " ( c+c*x1 ) / ( c ) ").unwrap(),
        ExprClass::Rational(RationalClass {
            numerator: PolynomialClass::new([mono(&[(1, 1)])]),
            denominator: PolynomialClass::default(),
        })
    );
}

#[test]
fn parse_expression_errors() {
    assert!(matches!(
        parse_expression(&linear(2), "c + c*x3"),
        Err(ClassError::VariableOutOfRange { .. })
    ));
    assert!(matches!(
        parse_expression(&poly(2), "c + c*x1^0"),
        Err(ClassError::ZeroExponent { .. })
    ));
    assert!(matches!(
        parse_expression(&linear(2), "c + "),
        Err(ClassError::Syntax { .. })
    ));
    assert!(matches!(
        parse_expression(&linear(2), "c + c*x1^2"),
        Err(ClassError::Syntax { .. })
    ));
}

#[test]
fn enumeration_examples() {
    let fam = classify_family(&linear_grammar(0.5, &[1.0])).unwrap();
    let out = enumerate_strings(&fam, &ExprClass::Linear(LinearClass::new([1])), 3).unwrap();
    let probs: Vec<f64> = out.iter().map(|s| s.1).collect();
    assert_eq!(probs.len(), 3);
    for (got, want) in probs.iter().zip([0.25, 0.125, 0.0625]) {
        assert!((got - want).abs() < 1e-15);
    }

    for fam in [linear(2), poly(2)] {
        let empty = match fam {
            GrammarFamily::Linear { .. } => ExprClass::Linear(LinearClass::default()),
            _ => ExprClass::Polynomial(PolynomialClass::default()),
        };
        assert_eq!(
            enumerate_strings(&fam, &empty, 4).unwrap(),
            vec![("c".to_string(), 0.5)]
        );
    }

    let out =
        enumerate_strings(&linear(2), &ExprClass::Linear(LinearClass::new([1, 2])), 2).unwrap();
    assert_eq!(out.len(), 2);
    for (_, p) in out {
        assert!((p - 0.03125).abs() < 1e-15);
    }
}

#[test]
fn enumeration_guard() {
    let fam = linear(6);
    let cls = ExprClass::Linear(LinearClass::new(1..=6));
    assert!(matches!(
        enumerate_strings(&fam, &cls, 40),
        Err(ClassError::TooManyStrings(_))
    ));
    assert!(matches!(
        enumerate_strings(&fam, &cls, 5),
        Err(ClassError::MaxPlusTooSmall { .. })
    ));
}

/// All derivable strings with at most `max_plus` terms, each term drawn
/// from `terms`.
fn sums(terms: &[Vec<&str>], max_plus: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_plus {
        let mut next = Vec::new();
        for s in &layer {
            for t in 0..terms.len() {
                let mut s2 = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn render(terms: &[Vec<&str>], seq: &[usize]) -> String {
    let mut s = String::from("c");
    for &t in seq {
        s += " + c ";
        s += &terms[t].join(" ");
    }
    s
}

#[test]
fn linear_classes_are_variable_sets() {
    let fam = linear(3);
    let terms = vec![vec!["x1"], vec!["x2"], vec!["x3"]];
    let mut seen: BTreeMap<BTreeSet<usize>, ExprClass> = BTreeMap::new();
    for seq in sums(&terms, 4) {
        let w = render(&terms, &seq);
        let set: BTreeSet<usize> = seq.iter().map(|t| t + 1).collect();
        let cls = canonicalize(&fam, &toks(&w)).unwrap();
        assert_eq!(cls, ExprClass::Linear(LinearClass(set.clone())));
        if let Some(prev) = seen.insert(set, cls.clone()) {
            assert_eq!(prev, cls);
        }
    }
    assert_eq!(seen.len(), 8);
}

#[test]
fn polynomial_classes_are_monomial_sets() {
    let fam = poly(2);
    let terms: Vec<Vec<&str>> = vec![
        vec!["x1"],
        vec!["x2"],
        vec!["x1", "x2"],
        vec!["x2", "x1"],
        vec!["x1", "x1"],
        vec!["x2", "x1", "x2"],
    ];
    let exps = |t: &[&str]| -> Vec<(usize, u32)> {
        let mut m = [0u32; 2];
        for v in t {
            m[if *v == "x1" { 0 } else { 1 }] += 1;
        }
        m.iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| (i + 1, e))
            .collect()
    };
    let mut classes = BTreeSet::new();
    for seq in sums(&terms, 4) {
        let w = render(&terms, &seq);
        let expected: BTreeSet<Vec<(usize, u32)>> = seq.iter().map(|&t| exps(&terms[t])).collect();
        let cls = canonicalize(&fam, &toks(&w)).unwrap();
        let ExprClass::Polynomial(p) = &cls else {
            panic!()
        };
        let got: BTreeSet<Vec<(usize, u32)>> =
            p.0.iter()
                .map(|m| m.0.iter().map(|(&i, &e)| (i, e)).collect())
                .collect();
        assert_eq!(got, expected, "{w}");
        classes.insert(cls);
    }
    // five distinct monomials, at most four per string
    assert_eq!(classes.len(), 1 + 5 + 10 + 10 + 5);
}

#[test]
fn rational_classes_split_at_the_slash() {
    let rat = rational(2);
    let pol = poly(2);
    for (u, v) in [
        ("c + c x1", "c"),
        ("c + c x2 x1 + c x2", "c + c x1 x1"),
        ("c", "c"),
    ] {
        let w = format!("( {u} ) / ( {v} )");
        let ExprClass::Rational(r) = canonicalize(&rat, &toks(&w)).unwrap() else {
            panic!()
        };
        assert_eq!(
            ExprClass::Polynomial(r.numerator),
            canonicalize(&pol, &toks(u)).unwrap()
        );
        assert_eq!(
            ExprClass::Polynomial(r.denominator),
            canonicalize(&pol, &toks(v)).unwrap()
        );
    }
}

#[test]
fn enumeration_grows_towards_the_class_probability() {
    let cases = [
        (linear(2), "c + c*x1 + c*x2"),
        (poly(2), "c + c*x1 + c*x2^2"),
        (rational(1), "(c + c*x1)/(c)"),
    ];
    for (fam, text) in cases {
        let cls = parse_expression(&fam, text).unwrap();
        let exact = expression_probability(&fam, &cls, Mode::Exact)
            .unwrap()
            .value();
        let mut last = 0.0;
        for max_plus in 2..=12 {
            let total: f64 = enumerate_strings(&fam, &cls, max_plus)
                .unwrap()
                .iter()
                .map(|s| s.1)
                .sum();
            assert!(total + 1e-15 >= last, "{text} at {max_plus}");
            assert!(total <= exact + 1e-12, "{text}: {total} > {exact}");
            last = total;
        }
        assert!(exact - last < 0.01, "{text}: {last} vs {exact}");
    }
}

fn arb_poly(n: usize) -> impl Strategy<Value = PolynomialClass> {
    prop::collection::btree_set(prop::collection::btree_map(1..=n, 1u32..4, 1..=n), 0..4)
        .prop_map(|s| PolynomialClass(s.into_iter().map(MonomialKey).collect()))
}

proptest! {
    #[test]
    fn display_parses_back(vars in prop::collection::btree_set(1usize..=5, 0..5), num in arb_poly(3), den in arb_poly(3)) {
        let cases = [
            (linear(5), ExprClass::Linear(LinearClass(vars))),
            (poly(3), ExprClass::Polynomial(num.clone())),
            (rational(3), ExprClass::Rational(RationalClass { numerator: num, denominator: den })),
        ];
        for (fam, cls) in cases {
            prop_assert_eq!(parse_expression(&fam, &cls.to_string()).unwrap(), cls.clone());
            let rep = representative(&fam, &cls).unwrap();
            let refs: Vec<&str> = rep.iter().map(String::as_str).collect();
            prop_assert_eq!(canonicalize(&fam, &refs).unwrap(), cls);
        }
    }

    #[test]
    fn expression_parser_never_panics(text in "[c+*x0-9^()/ ]{0,40}") {
        let _ = parse_expression(&poly(3), &text);
        let _ = parse_expression(&rational(3), &text);
        let _ = parse_expression(&linear(3), &text);
    }
}
