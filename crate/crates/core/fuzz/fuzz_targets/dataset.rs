#![no_main]

use exprprob::regress::{fit_constants, Dataset, Template};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = Dataset::from_csv(data) {
        if let Ok(t) = Template::parse("c1") {
            let _ = fit_constants(&t, &d);
        }
    }
});
