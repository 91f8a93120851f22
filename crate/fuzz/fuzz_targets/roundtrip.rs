#![no_main]

use libfuzzer_sys::fuzz_target;
use paracontact::exprlang::{parse_expr, parse_immersion};

// Printing a parsed value and parsing it back is a fixed point.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_immersion(text) {
        let shown = spec.to_text();
        let back = parse_immersion(&shown).expect("printed spec parses");
        assert_eq!(back.to_text(), shown);
    }
    let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    if let Ok(e) = parse_expr(text, &vars) {
        let shown = e.display(&vars).to_string();
        let back = parse_expr(&shown, &vars).expect("printed expression parses");
        assert_eq!(back.display(&vars).to_string(), shown);
    }
});
