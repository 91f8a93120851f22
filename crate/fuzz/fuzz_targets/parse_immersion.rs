#![no_main]

use libfuzzer_sys::fuzz_target;
use paracontact::exprlang::parse_immersion;
use paracontact::paraframe::{geometry_at, FrameOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_immersion(text) {
        let centre: Vec<f64> = spec.domain().iter().map(|iv| iv.center()).collect();
        let _ = geometry_at(&spec, &centre, &FrameOptions::default());
    }
});
