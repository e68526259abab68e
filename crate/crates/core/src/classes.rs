//! Expression classes: sets of strings that describe the same family of
//! functions once every `c` is a free constant.
//!
//! For the linear shapes a class is determined by the set of variables that
//! occur, for the polynomial shape by the set of monomials (exponent
//! vectors), and a rational string `(u)/(v)` by the pair of classes of `u`
//! and `v`. The constant-only class `[c]` is the empty set.
//!
//! Expression syntax: `c`, or `c + c*T + c*T + ...` where a term `T` is `xI`
//! in the linear shapes and `xI^E*xJ^F*...` (distinct indices, exponents at
//! least 1, `^1` optional) in the polynomial shape; rational expressions are
//! `(POLY)/(POLY)`. Whitespace is ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::family::GrammarFamily;
use crate::numeric::CompensatedSum;
use crate::prob::{prob_alt_linear, PolyParams, ProbError};

/// Variable indices (1-based) present in a linear expression.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearClass(pub BTreeSet<usize>);

/// Exponents of a monomial, keyed by 1-based variable index. All exponents
/// are at least 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonomialKey(pub BTreeMap<usize, u32>);

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolynomialClass(pub BTreeSet<MonomialKey>);

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RationalClass {
    pub numerator: PolynomialClass,
    pub denominator: PolynomialClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExprClass {
    Linear(LinearClass),
    Polynomial(PolynomialClass),
    Rational(RationalClass),
}

impl LinearClass {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        LinearClass(indices.into_iter().collect())
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

impl MonomialKey {
    /// Builds a key from `(index, exponent)` pairs; exponents add up for
    /// repeated indices and zero exponents are dropped.
    pub fn new(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (i, e) in pairs {
            if e > 0 {
                *map.entry(i).or_insert(0) += e;
            }
        }
        MonomialKey(map)
    }

    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }
}

impl PolynomialClass {
    pub fn new(monomials: impl IntoIterator<Item = MonomialKey>) -> Self {
        PolynomialClass(monomials.into_iter().collect())
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

impl Serialize for LinearClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for i in &self.0 {
            seq.serialize_element(i)?;
        }
        seq.end()
    }
}

impl Serialize for MonomialKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (i, e) in &self.0 {
            map.serialize_entry(&i.to_string(), e)?;
        }
        map.end()
    }
}

impl Serialize for PolynomialClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for m in &self.0 {
            seq.serialize_element(m)?;
        }
        seq.end()
    }
}

impl Serialize for RationalClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("RationalClass", 2)?;
        st.serialize_field("num", &self.numerator)?;
        st.serialize_field("den", &self.denominator)?;
        st.end()
    }
}

impl Serialize for ExprClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExprClass::Linear(c) => c.serialize(s),
            ExprClass::Polynomial(c) => c.serialize(s),
            ExprClass::Rational(c) => c.serialize(s),
        }
    }
}

fn write_monomial(f: &mut fmt::Formatter<'_>, m: &MonomialKey) -> fmt::Result {
    let mut first = true;
    for (i, e) in &m.0 {
        if !first {
            f.write_str("*")?;
        }
        first = false;
        write!(f, "x{i}")?;
        if *e > 1 {
            write!(f, "^{e}")?;
        }
    }
    Ok(())
}

impl fmt::Display for LinearClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("c")?;
        for i in &self.0 {
            write!(f, " + c*x{i}")?;
        }
        Ok(())
    }
}

impl fmt::Display for PolynomialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("c")?;
        for m in &self.0 {
            f.write_str(" + c*")?;
            write_monomial(f, m)?;
        }
        Ok(())
    }
}

impl fmt::Display for RationalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})/({})", self.numerator, self.denominator)
    }
}

/// Prints the class in expression syntax, which [`parse_expression`] reads
/// back.
impl fmt::Display for ExprClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprClass::Linear(c) => c.fmt(f),
            ExprClass::Polynomial(c) => c.fmt(f),
            ExprClass::Rational(c) => c.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClassError {
    #[error("string is not derivable by the {family} grammar: {detail}")]
    NotDerivable {
        family: &'static str,
        detail: String,
    },
    #[error("expression syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("variable index {index} outside 1..={n}")]
    VariableOutOfRange { index: usize, n: usize },
    #[error("exponent 0 for x{index}")]
    ZeroExponent { index: usize },
    #[error("class does not belong to the {0} family")]
    WrongFamily(&'static str),
    #[error("max_plus {max_plus} is below the class size {k}")]
    MaxPlusTooSmall { max_plus: usize, k: usize },
    #[error("enumeration would produce about {0:e} strings; limit is 1e7")]
    TooManyStrings(f64),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Reads `c ('+' 'c' VAR+)*` from `tokens[*pos..]`, stopping before a
/// token that cannot continue the sum. Each term is returned as its list
/// of variable indices.
fn read_sum(
    family: &GrammarFamily,
    tokens: &[&str],
    pos: &mut usize,
    max_vars: Option<usize>,
) -> Result<Vec<Vec<usize>>, ClassError> {
    let fail = |detail: String| ClassError::NotDerivable {
        family: family.name(),
        detail,
    };
    if tokens.get(*pos) != Some(&"c") {
        return Err(fail(format!("expected 'c' at token {}", *pos + 1)));
    }
    *pos += 1;
    let mut terms = Vec::new();
    while tokens.get(*pos) == Some(&"+") {
        *pos += 1;
        if tokens.get(*pos) != Some(&"c") {
            return Err(fail(format!("expected 'c' at token {}", *pos + 1)));
        }
        *pos += 1;
        let mut vars = Vec::new();
        while let Some(i) = tokens.get(*pos).and_then(|t| family.variable_index(t)) {
            vars.push(i);
            *pos += 1;
        }
        if vars.is_empty() || max_vars.is_some_and(|m| vars.len() > m) {
            return Err(fail(format!("bad term ending at token {}", *pos)));
        }
        terms.push(vars);
    }
    Ok(terms)
}

fn monomial_of(vars: &[usize]) -> MonomialKey {
    MonomialKey::new(vars.iter().map(|&i| (i, 1)))
}

fn polynomial_of(terms: &[Vec<usize>]) -> PolynomialClass {
    PolynomialClass::new(terms.iter().map(|t| monomial_of(t)))
}

/// Class of a derivable string given as terminal tokens.
pub fn canonicalize(family: &GrammarFamily, tokens: &[&str]) -> Result<ExprClass, ClassError> {
    let fail = |detail: String| ClassError::NotDerivable {
        family: family.name(),
        detail,
    };
    let mut pos = 0;
    let class = match family {
        GrammarFamily::Linear { .. } => {
            let terms = read_sum(family, tokens, &mut pos, Some(1))?;
            ExprClass::Linear(LinearClass::new(terms.into_iter().map(|t| t[0])))
        }
        GrammarFamily::Polynomial { .. } => {
            let terms = read_sum(family, tokens, &mut pos, None)?;
            ExprClass::Polynomial(polynomial_of(&terms))
        }
        GrammarFamily::Rational { .. } => {
            let side = |pos: &mut usize| -> Result<PolynomialClass, ClassError> {
                if tokens.get(*pos) != Some(&"(") {
                    return Err(fail(format!("expected '(' at token {}", *pos + 1)));
                }
                *pos += 1;
                let terms = read_sum(family, tokens, pos, None)?;
                if tokens.get(*pos) != Some(&")") {
                    return Err(fail(format!("expected ')' at token {}", *pos + 1)));
                }
                *pos += 1;
                Ok(polynomial_of(&terms))
            };
            let numerator = side(&mut pos)?;
            if tokens.get(pos) != Some(&"/") {
                return Err(fail(format!("expected '/' at token {}", pos + 1)));
            }
            pos += 1;
            let denominator = side(&mut pos)?;
            ExprClass::Rational(RationalClass {
                numerator,
                denominator,
            })
        }
        GrammarFamily::AltLinear { .. } => {
            // c xj + ... + c xi + c with strictly decreasing indices, or c
            let mut indices = Vec::new();
            while tokens.get(pos) == Some(&"c") {
                match tokens.get(pos + 1).and_then(|t| family.variable_index(t)) {
                    Some(i) => {
                        if indices.last().is_some_and(|&prev| prev <= i) {
                            return Err(fail("variable indices must decrease".into()));
                        }
                        indices.push(i);
                        pos += 2;
                        if tokens.get(pos) != Some(&"+") {
                            return Err(fail(format!("expected '+' at token {}", pos + 1)));
                        }
                        pos += 1;
                    }
                    None => break,
                }
            }
            if tokens.get(pos) != Some(&"c") {
                return Err(fail(format!("expected 'c' at token {}", pos + 1)));
            }
            pos += 1;
            ExprClass::Linear(LinearClass::new(indices))
        }
    };
    if pos != tokens.len() {
        return Err(fail(format!("unexpected token {:?}", tokens[pos])));
    }
    Ok(class)
}

/// A canonical member of the class, as terminal tokens of the family's
/// grammar. Variables and monomials appear in increasing order (decreasing
/// for the alternative linear chain, whose strings list them that way).
pub fn representative(
    family: &GrammarFamily,
    class: &ExprClass,
) -> Result<Vec<String>, ClassError> {
    let vars = family.variables();
    let name = |i: usize| vars[i - 1].clone();
    let sum = |terms: Vec<Vec<usize>>| {
        let mut out = vec!["c".to_owned()];
        for t in terms {
            out.push("+".into());
            out.push("c".into());
            out.extend(t.into_iter().map(name));
        }
        out
    };
    let poly_terms = |p: &PolynomialClass| -> Vec<Vec<usize>> {
        p.0.iter()
            .map(|m| {
                m.0.iter()
                    .flat_map(|(&i, &e)| std::iter::repeat_n(i, e as usize))
                    .collect()
            })
            .collect()
    };
    check_class(family, class)?;
    Ok(match (family, class) {
        (GrammarFamily::Linear { .. }, ExprClass::Linear(c)) => {
            sum(c.0.iter().map(|&i| vec![i]).collect())
        }
        (GrammarFamily::AltLinear { .. }, ExprClass::Linear(c)) => {
            let mut out = Vec::new();
            for &i in c.0.iter().rev() {
                out.extend(["c".to_owned(), name(i), "+".to_owned()]);
            }
            out.push("c".into());
            out
        }
        (GrammarFamily::Polynomial { .. }, ExprClass::Polynomial(p)) => sum(poly_terms(p)),
        (GrammarFamily::Rational { .. }, ExprClass::Rational(r)) => {
            let mut out = vec!["(".to_owned()];
            out.extend(sum(poly_terms(&r.numerator)));
            out.extend([")".to_owned(), "/".to_owned(), "(".to_owned()]);
            out.extend(sum(poly_terms(&r.denominator)));
            out.push(")".into());
            out
        }
        _ => unreachable!("check_class matched kinds"),
    })
}

/// The class kind fits the family and every index is in range.
pub fn check_class(family: &GrammarFamily, class: &ExprClass) -> Result<(), ClassError> {
    let n = family.n();
    let check = |i: usize| {
        if (1..=n).contains(&i) {
            Ok(())
        } else {
            Err(ClassError::VariableOutOfRange { index: i, n })
        }
    };
    let check_poly = |p: &PolynomialClass| -> Result<(), ClassError> {
        for m in &p.0 {
            if m.0.is_empty() {
                return Err(ClassError::Syntax {
                    offset: 0,
                    message: "empty monomial".into(),
                });
            }
            for (&i, &e) in &m.0 {
                check(i)?;
                if e == 0 {
                    return Err(ClassError::ZeroExponent { index: i });
                }
            }
        }
        Ok(())
    };
    match (family, class) {
        (GrammarFamily::Linear { .. } | GrammarFamily::AltLinear { .. }, ExprClass::Linear(c)) => {
            c.0.iter().try_for_each(|&i| check(i))
        }
        (GrammarFamily::Polynomial { .. }, ExprClass::Polynomial(p)) => check_poly(p),
        (GrammarFamily::Rational { .. }, ExprClass::Rational(r)) => {
            check_poly(&r.numerator)?;
            check_poly(&r.denominator)
        }
        _ => Err(ClassError::WrongFamily(family.name())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    C,
    Plus,
    Star,
    Caret,
    Open,
    Close,
    Slash,
    Var(usize),
    Num(u64),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ClassError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let number = |i: &mut usize| -> Option<u64> {
        let start = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        text[start..*i].parse().ok()
    };
    while i < bytes.len() {
        let offset = i;
        let tok = match bytes[i] {
            b if b.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            b'c' => Tok::C,
            b'+' => Tok::Plus,
            b'*' => Tok::Star,
            b'^' => Tok::Caret,
            b'(' => Tok::Open,
            b')' => Tok::Close,
            b'/' => Tok::Slash,
            b'x' => {
                i += 1;
                let n = number(&mut i).ok_or(ClassError::Syntax {
                    offset,
                    message: "expected a variable index after 'x'".into(),
                })?;
                out.push((offset, Tok::Var(n as usize)));
                continue;
            }
            b if b.is_ascii_digit() => {
                let n = number(&mut i).ok_or(ClassError::Syntax {
                    offset,
                    message: "number out of range".into(),
                })?;
                out.push((offset, Tok::Num(n)));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ClassError::Syntax {
                    offset,
                    message: format!("unexpected character {ch:?}"),
                });
            }
        };
        out.push((offset, tok));
        i += 1;
    }
    Ok(out)
}

struct ExprParser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
    n: usize,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).map(|t| t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ClassError> {
        Err(ClassError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ClassError> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn var(&mut self) -> Result<usize, ClassError> {
        match self.peek() {
            Some(Tok::Var(i)) => {
                if !(1..=self.n).contains(&i) {
                    return Err(ClassError::VariableOutOfRange {
                        index: i,
                        n: self.n,
                    });
                }
                self.pos += 1;
                Ok(i)
            }
            _ => self.err("expected a variable xI"),
        }
    }

    /// `c ('+' 'c' '*' TERM)*`, each term parsed by `term`.
    fn sum<T>(
        &mut self,
        mut term: impl FnMut(&mut Self) -> Result<T, ClassError>,
    ) -> Result<Vec<T>, ClassError> {
        self.expect(Tok::C, "'c'")?;
        let mut out = Vec::new();
        while self.peek() == Some(Tok::Plus) {
            self.pos += 1;
            self.expect(Tok::C, "'c'")?;
            self.expect(Tok::Star, "'*'")?;
            out.push(term(self)?);
        }
        Ok(out)
    }

    fn monomial(&mut self) -> Result<MonomialKey, ClassError> {
        let mut map = BTreeMap::new();
        loop {
            let i = self.var()?;
            let mut e = 1u32;
            if self.peek() == Some(Tok::Caret) {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Num(v)) => {
                        e = u32::try_from(v).or_else(|_| self.err("exponent too large"))?;
                        self.pos += 1;
                    }
                    _ => return self.err("expected an exponent"),
                }
                if e == 0 {
                    return Err(ClassError::ZeroExponent { index: i });
                }
            }
            if map.insert(i, e).is_some() {
                return self.err(format!("x{i} repeated within one term"));
            }
            if self.peek() == Some(Tok::Star) {
                self.pos += 1;
            } else {
                return Ok(MonomialKey(map));
            }
        }
    }

    fn polynomial(&mut self) -> Result<PolynomialClass, ClassError> {
        Ok(PolynomialClass::new(self.sum(Self::monomial)?))
    }

    fn finish(&self) -> Result<(), ClassError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => self.err("unexpected trailing input"),
        }
    }
}

/// Parses expression syntax into a class of the family's kind.
pub fn parse_expression(family: &GrammarFamily, text: &str) -> Result<ExprClass, ClassError> {
    let toks = lex(text)?;
    let mut p = ExprParser {
        toks: &toks,
        pos: 0,
        end: text.len(),
        n: family.n(),
    };
    let class = match family {
        GrammarFamily::Linear { .. } | GrammarFamily::AltLinear { .. } => {
            ExprClass::Linear(LinearClass::new(p.sum(ExprParser::var)?))
        }
        GrammarFamily::Polynomial { .. } => ExprClass::Polynomial(p.polynomial()?),
        GrammarFamily::Rational { .. } => {
            p.expect(Tok::Open, "'('")?;
            let numerator = p.polynomial()?;
            p.expect(Tok::Close, "')'")?;
            p.expect(Tok::Slash, "'/'")?;
            p.expect(Tok::Open, "'('")?;
            let denominator = p.polynomial()?;
            p.expect(Tok::Close, "')'")?;
            ExprClass::Rational(RationalClass {
                numerator,
                denominator,
            })
        }
    };
    p.finish()?;
    Ok(class)
}

/// Upper limit on the number of strings [`enumerate_strings`] produces.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Number of length-`i` sequences over groups of the given sizes that use
/// every group at least once (inclusion–exclusion over missed groups).
fn covering_sequences(sizes: &[f64], i: usize) -> f64 {
    let k = sizes.len();
    let mut total = CompensatedSum::new();
    for mask in 0u64..(1u64 << k) {
        let missed = mask.count_ones() as i32;
        let s: f64 = (0..k)
            .filter(|j| mask >> j & 1 == 0)
            .map(|j| sizes[j])
            .sum();
        total.add(if missed % 2 == 0 { 1.0 } else { -1.0 } * s.powi(i as i32));
    }
    total.value().max(0.0)
}

/// One sum `c + c T1 + ... + c Ti` whose terms cover all of `groups`; each
/// group lists alternative term words with their probabilities.
fn enumerate_sums(
    p: f64,
    groups: &[Vec<(Vec<usize>, f64)>],
    max_plus: usize,
) -> Vec<(Vec<Vec<usize>>, f64)> {
    let k = groups.len();
    let mut out = Vec::new();
    if k == 0 {
        out.push((Vec::new(), 1.0 - p));
        return out;
    }
    let words: Vec<(usize, &Vec<usize>, f64)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, ws)| ws.iter().map(move |(w, q)| (g, w, *q)))
        .collect();
    // depth-first over sequences, pruning when the remaining length cannot
    // cover the missing groups
    let mut seq: Vec<usize> = Vec::new();
    let mut counts = vec![0usize; k];
    let mut covered = 0usize;
    #[allow(clippy::too_many_arguments)]
    fn rec(
        p: f64,
        words: &[(usize, &Vec<usize>, f64)],
        k: usize,
        max_plus: usize,
        seq: &mut Vec<usize>,
        counts: &mut Vec<usize>,
        covered: &mut usize,
        prob: f64,
        out: &mut Vec<(Vec<Vec<usize>>, f64)>,
    ) {
        if *covered == k {
            out.push((
                seq.iter().map(|&w| words[w].1.clone()).collect(),
                (1.0 - p) * prob,
            ));
        }
        if seq.len() == max_plus || k - *covered > max_plus - seq.len() {
            return;
        }
        for (idx, &(g, _, q)) in words.iter().enumerate() {
            if k - *covered == max_plus - seq.len() && counts[g] > 0 {
                continue;
            }
            seq.push(idx);
            counts[g] += 1;
            if counts[g] == 1 {
                *covered += 1;
            }
            rec(
                p,
                words,
                k,
                max_plus,
                seq,
                counts,
                covered,
                prob * p * q,
                out,
            );
            if counts[g] == 1 {
                *covered -= 1;
            }
            counts[g] -= 1;
            seq.pop();
        }
    }
    rec(
        p,
        &words,
        k,
        max_plus,
        &mut seq,
        &mut counts,
        &mut covered,
        1.0,
        &mut out,
    );
    out
}

/// All distinct orderings of the variables of a monomial, each as a list of
/// indices.
fn monomial_words(m: &MonomialKey) -> Vec<Vec<usize>> {
    let mut letters: Vec<usize> =
        m.0.iter()
            .flat_map(|(&i, &e)| std::iter::repeat_n(i, e as usize))
            .collect();
    let mut out = vec![letters.clone()];
    // next lexicographic permutation
    loop {
        let Some(i) = (1..letters.len())
            .rev()
            .find(|&i| letters[i - 1] < letters[i])
        else {
            return out;
        };
        let j = (i..letters.len())
            .rev()
            .find(|&j| letters[j] > letters[i - 1])
            .unwrap();
        letters.swap(i - 1, j);
        letters[i..].reverse();
        out.push(letters.clone());
    }
}

/// Probability of one word derived from `V` in the polynomial shape.
fn word_probability(params: &PolyParams, word: &[usize]) -> f64 {
    let m = word.len() as i32;
    let mut prob = params.q.powi(m - 1) * (1.0 - params.q);
    for &i in word {
        prob *= params.qv[i - 1];
    }
    prob
}

fn poly_groups(params: &PolyParams, cls: &PolynomialClass) -> Vec<Vec<(Vec<usize>, f64)>> {
    cls.0
        .iter()
        .map(|m| {
            monomial_words(m)
                .into_iter()
                .map(|w| {
                    let q = word_probability(params, &w);
                    (w, q)
                })
                .collect()
        })
        .collect()
}

fn render_sum(family: &GrammarFamily, terms: &[Vec<usize>]) -> String {
    let vars = family.variables();
    let mut s = String::from("c");
    for t in terms {
        s.push_str(" + c");
        for &i in t {
            s.push(' ');
            s.push_str(&vars[i - 1]);
        }
    }
    s
}

fn projected_count(groups: &[Vec<(Vec<usize>, f64)>], max_plus: usize) -> f64 {
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    (groups.len()..=max_plus)
        .map(|i| covering_sequences(&sizes, i))
        .sum::<f64>()
        .max(1.0)
}

/// Every string of the class whose derivation applies the recursive sum
/// rule at most `max_plus` times, with its probability. Meant as a
/// brute-force reference for small cases.
pub fn enumerate_strings(
    family: &GrammarFamily,
    cls: &ExprClass,
    max_plus: usize,
) -> Result<Vec<(String, f64)>, ClassError> {
    check_class(family, cls)?;
    let guard = |count: f64| {
        if count > ENUMERATION_LIMIT {
            Err(ClassError::TooManyStrings(count))
        } else {
            Ok(())
        }
    };
    match (family, cls) {
        (GrammarFamily::Linear { params, .. }, ExprClass::Linear(c)) => {
            if max_plus < c.k() {
                return Err(ClassError::MaxPlusTooSmall { max_plus, k: c.k() });
            }
            let groups: Vec<Vec<(Vec<usize>, f64)>> =
                c.0.iter()
                    .map(|&i| vec![(vec![i], params.q[i - 1])])
                    .collect();
            guard(projected_count(&groups, max_plus))?;
            Ok(enumerate_sums(params.p, &groups, max_plus)
                .into_iter()
                .map(|(terms, prob)| (render_sum(family, &terms), prob))
                .collect())
        }
        (GrammarFamily::Polynomial { params, .. }, ExprClass::Polynomial(c)) => {
            if max_plus < c.k() {
                return Err(ClassError::MaxPlusTooSmall { max_plus, k: c.k() });
            }
            let groups = poly_groups(params, c);
            guard(projected_count(&groups, max_plus))?;
            Ok(enumerate_sums(params.p, &groups, max_plus)
                .into_iter()
                .map(|(terms, prob)| (render_sum(family, &terms), prob))
                .collect())
        }
        (GrammarFamily::Rational { params, .. }, ExprClass::Rational(r)) => {
            let (kn, kd) = (r.numerator.k(), r.denominator.k());
            if max_plus < kn + kd {
                return Err(ClassError::MaxPlusTooSmall {
                    max_plus,
                    k: kn + kd,
                });
            }
            // the two sides share the budget of recursive rule applications
            let num_groups = poly_groups(params, &r.numerator);
            let den_groups = poly_groups(params, &r.denominator);
            guard(
                projected_count(&num_groups, max_plus - kd)
                    * projected_count(&den_groups, max_plus - kn),
            )?;
            let nums = enumerate_sums(params.p, &num_groups, max_plus - kd);
            let dens = enumerate_sums(params.p, &den_groups, max_plus - kn);
            let mut out = Vec::new();
            for (nt, np) in &nums {
                for (dt, dp) in &dens {
                    if nt.len() + dt.len() <= max_plus {
                        out.push((
                            format!(
                                "( {} ) / ( {} )",
                                render_sum(family, nt),
                                render_sum(family, dt)
                            ),
                            np * dp,
                        ));
                    }
                }
            }
            Ok(out)
        }
        (GrammarFamily::AltLinear { params, .. }, ExprClass::Linear(c)) => {
            if max_plus < c.k() {
                return Err(ClassError::MaxPlusTooSmall { max_plus, k: c.k() });
            }
            let tokens = representative(family, cls)?;
            Ok(vec![(tokens.join(" "), prob_alt_linear(params, c)?)])
        }
        _ => Err(ClassError::WrongFamily(family.name())),
    }
}

/// Total number of strings [`enumerate_strings`] would produce for a linear
/// class of size `k` and `max_plus`; exposed for guard checks.
pub fn linear_string_count(k: usize, max_plus: usize) -> f64 {
    let sizes = vec![1.0; k];
    (k..=max_plus).map(|i| covering_sequences(&sizes, i)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{LinearParams, PolyParams};

    fn linear(n: usize) -> GrammarFamily {
        GrammarFamily::Linear {
            params: LinearParams::uniform(0.5, n).unwrap(),
            variables: (1..=n).map(|i| format!("x{i}")).collect(),
        }
    }

    fn poly(n: usize) -> GrammarFamily {
        GrammarFamily::Polynomial {
            params: PolyParams::new(0.5, 0.5, vec![1.0 / n as f64; n]).unwrap(),
            variables: (1..=n).map(|i| format!("x{i}")).collect(),
        }
    }

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn linear_strings_map_to_variable_sets() {
        let fam = linear(2);
        let cls = canonicalize(&fam, &toks("c + c x2 + c x1 + c x2")).unwrap();
        assert_eq!(cls, ExprClass::Linear(LinearClass::new([1, 2])));
        assert_eq!(
            canonicalize(&fam, &toks("c")).unwrap(),
            ExprClass::Linear(LinearClass::default())
        );
        assert!(canonicalize(&fam, &toks("c + x1")).is_err());
        assert!(canonicalize(&fam, &toks("c + c x1 x2")).is_err());
        assert!(canonicalize(&fam, &toks("c + c x3")).is_err());
    }

    #[test]
    fn polynomial_terms_commute() {
        let fam = poly(2);
        let a = canonicalize(&fam, &toks("c + c x1 x2 x1")).unwrap();
        let b = canonicalize(&fam, &toks("c + c x2 x1 x1")).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a,
            ExprClass::Polynomial(PolynomialClass::new([MonomialKey::new([(1, 2), (2, 1)])]))
        );
    }

    #[test]
    fn expression_syntax() {
        assert_eq!(
            parse_expression(&linear(3), " c+c*x1 + c * x3 ").unwrap(),
            ExprClass::Linear(LinearClass::new([1, 3]))
        );
        assert_eq!(
            parse_expression(&poly(2), "c + c*x1^2*x2 + c*x2").unwrap(),
            ExprClass::Polynomial(PolynomialClass::new([
                MonomialKey::new([(1, 2), (2, 1)]),
                MonomialKey::new([(2, 1)]),
            ]))
        );
        assert_eq!(
            parse_expression(&linear(2), "c + c*x3"),
            Err(ClassError::VariableOutOfRange { index: 3, n: 2 })
        );
        assert_eq!(
            parse_expression(&poly(2), "c + c*x1^0"),
            Err(ClassError::ZeroExponent { index: 1 })
        );
        assert!(matches!(
            parse_expression(&poly(2), "c + c*x1*x1"),
            Err(ClassError::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression(&linear(2), "c + c*x1^2"),
            Err(ClassError::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression(&linear(2), "c + x1"),
            Err(ClassError::Syntax { offset: 4, .. })
        ));
    }

    #[test]
    fn display_round_trips() {
        let fam = poly(3);
        let cls = parse_expression(&fam, "c + c*x3 + c*x1^2*x2").unwrap();
        assert_eq!(cls.to_string(), "c + c*x1^2*x2 + c*x3");
        assert_eq!(parse_expression(&fam, &cls.to_string()).unwrap(), cls);
    }

    #[test]
    fn json_shapes() {
        let lin = ExprClass::Linear(LinearClass::new([3, 1]));
        assert_eq!(serde_json::to_string(&lin).unwrap(), "[1,3]");
        let m = PolynomialClass::new([MonomialKey::new([(1, 2), (2, 1)])]);
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"[{"1":2,"2":1}]"#);
        let r = RationalClass {
            numerator: m,
            denominator: PolynomialClass::default(),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"num":[{"1":2,"2":1}],"den":[]}"#
        );
    }

    #[test]
    fn representative_is_canonical_member() {
        let fam = poly(2);
        let cls = parse_expression(&fam, "c + c*x2 + c*x1^2*x2").unwrap();
        let rep = representative(&fam, &cls).unwrap();
        assert_eq!(rep.join(" "), "c + c x1 x1 x2 + c x2");
        let rep_refs: Vec<&str> = rep.iter().map(String::as_str).collect();
        assert_eq!(canonicalize(&fam, &rep_refs).unwrap(), cls);
    }

    #[test]
    fn linear_enumeration() {
        let fam = GrammarFamily::Linear {
            params: LinearParams::new(0.5, vec![1.0]).unwrap(),
            variables: vec!["x1".into()],
        };
        let cls = ExprClass::Linear(LinearClass::new([1]));
        let strings = enumerate_strings(&fam, &cls, 3).unwrap();
        let probs: Vec<f64> = strings.iter().map(|s| s.1).collect();
        assert_eq!(probs, [0.25, 0.125, 0.0625]);
        assert_eq!(strings[1].0, "c + c x1 + c x1");

        let fam = linear(2);
        let cls = ExprClass::Linear(LinearClass::new([1, 2]));
        let strings = enumerate_strings(&fam, &cls, 2).unwrap();
        assert_eq!(strings.len(), 2);
        for (_, p) in strings {
            assert!((p - 0.03125).abs() < 1e-17);
        }
        let empty = enumerate_strings(&fam, &ExprClass::Linear(LinearClass::default()), 4).unwrap();
        assert_eq!(empty, [("c".to_string(), 0.5)]);
    }

    #[test]
    fn enumeration_guard() {
        let fam = linear(2);
        let cls = ExprClass::Linear(LinearClass::new([1, 2]));
        assert!(matches!(
            enumerate_strings(&fam, &cls, 40),
            Err(ClassError::TooManyStrings(_))
        ));
        assert_eq!(linear_string_count(2, 3), 2.0 + 6.0);
    }

    #[test]
    fn monomial_word_orderings() {
        let words = monomial_words(&MonomialKey::new([(1, 2), (2, 1)]));
        assert_eq!(words, vec![vec![1, 1, 2], vec![1, 2, 1], vec![2, 1, 1]]);
    }
}
