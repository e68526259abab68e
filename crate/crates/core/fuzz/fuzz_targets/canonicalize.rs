#![no_main]

use exprprob::classes::{canonicalize, representative};
use exprprob::family::{classify_family, GrammarFamily};
use libfuzzer_sys::fuzz_target;

const GRAMMARS: [&str; 3] = [
    "start: E\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> 'x1' [0.5]\nV -> 'x2' [0.5]\n",
    "start: E\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> V F [0.3]\nV -> F [0.7]\nF -> 'x1' [0.5]\nF -> 'x2' [0.5]\n",
    "start: R\nR -> '(' E ')' '/' '(' E ')' [1.0]\nE -> E '+' 'c' V [0.5]\nE -> 'c' [0.5]\nV -> V F [0.3]\nV -> F [0.7]\nF -> 'x1' [0.5]\nF -> 'x2' [0.5]\n",
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
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if let Ok(class) = canonicalize(&fam, &tokens) {
        // the representative string belongs to the class it stands for
        let rep = representative(&fam, &class).expect("class has a representative");
        assert_eq!(
            canonicalize(&fam, &rep.iter().map(|s| s.as_str()).collect::<Vec<_>>()),
            Ok(class)
        );
    }
});
