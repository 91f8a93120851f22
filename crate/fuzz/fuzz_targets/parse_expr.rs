#![no_main]

use libfuzzer_sys::fuzz_target;
use paracontact::exprlang::parse_expr;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    if let Ok(e) = parse_expr(text, &vars) {
        // Evaluation may fail on domain errors but must not panic.
        let _ = e.eval(&[0.25, -0.5, 1.5]);
        let _ = e.diff(0).eval_value(&[0.25, -0.5, 1.5]);
    }
});
