#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = exprprob::parse_grammar(text) {
        let _ = g.validate();
        // serialization must read back to the same grammar
        let again = exprprob::parse_grammar(&g.serialize()).expect("serialized grammar parses");
        assert_eq!(again.serialize(), g.serialize());
    }
});
