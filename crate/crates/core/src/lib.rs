//! Probabilistic context-free grammars for expression generation.
//!
//! Besides the usual grammar machinery (parsing a text format, sampling,
//! inside probabilities over a CNF conversion, linear-cycle removal) the
//! crate computes the probability that a grammar generates an *expression*:
//! the set of all strings that describe the same family of functions once
//! every constant symbol `c` is treated as a free parameter. This is
//! supported for four grammar shapes (see [`family::GrammarFamily`]), exactly
//! by inclusion–exclusion or approximately with a guaranteed error bound.

pub mod classes;
pub mod cnf;
pub mod derivation;
pub mod family;
pub mod grammar;
pub mod numeric;
pub mod prob;
pub mod regress;
pub mod transforms;
mod validate;

pub use grammar::{parse_grammar, Pcfg, Rule, Symbol};
