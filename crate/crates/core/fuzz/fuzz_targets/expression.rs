#![no_main]

use exprprob::classes::parse_expression;
use exprprob::family::{classify_family, GrammarFamily};
use libfuzzer_sys::fuzz_target;

const GRAMMARS: [&str; 4] = [
    "start: E\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> 'x1' [0.5]\nV -> 'x2' [0.5]\n",
    "start: E\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> V F [0.3]\nV -> F [0.7]\nF -> 'x1' [0.5]\nF -> 'x2' [0.5]\n",
    "start: R\nR -> '(' E ')' '/' '(' E ')' [1.0]\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> V F [0.3]\nV -> F [0.7]\nF -> 'x1' [0.5]\nF -> 'x2' [0.5]\n",
    "start: S\nS -> V1 '+' 'c' [0.5]\nS -> 'c' [0.5]\nV1 -> V2 '+' 'c' 'x1' [0.3]\nV1 -> V2 [0.3]\nV1 -> 'c' 'x1' [0.4]\nV2 -> 'c' 'x2' [1.0]\n",
];

fn family(i: u8) -> Option<GrammarFamily> {
    let g = exprprob::parse_grammar(GRAMMARS[i as usize % GRAMMARS.len()]).ok()?;
    classify_family(&g).ok()
}

fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else {
        return;
    };
    let (Some(fam), Ok(text)) = (family(which), std::str::from_utf8(rest)) else {
        return;
    };
    if let Ok(class) = parse_expression(&fam, text) {
        // a parsed class prints back to syntax of the same class
        let again = parse_expression(&fam, &class.to_string()).expect("display parses");
        assert_eq!(again, class);
    }
});
