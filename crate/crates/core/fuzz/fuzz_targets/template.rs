#![no_main]

use exprprob::regress::{fit_constants, postprocess_constants, Dataset, Template};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (numbered, _) = postprocess_constants(text);
    let Ok(t) = Template::parse(&numbered) else {
        return;
    };
    let d = Dataset::from_csv_str("x1,x2,y\n1,4,-1.5\n2,7,-2\n1,-8,10.5\n6,-10,25\n").unwrap();
    if let Ok(fit) = fit_constants(&t, &d) {
        assert_eq!(fit.constants.len(), t.constants());
    }
});
