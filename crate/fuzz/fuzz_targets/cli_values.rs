#![no_main]

use libfuzzer_sys::fuzz_target;
use paracontact_cli::run_with_io;

// The first byte picks an option slot; the rest is its value. Only slots
// that never touch the filesystem are used.
const SLOTS: [&[&str]; 6] = [
    &["induce", "--builtin", "example_4_6", "--point"],
    &["family", "--n", "1", "--b", "1,0,1,0;0,1,0,-1", "--v", "1,0,0,0", "--alpha"],
    &["family", "--n", "1", "--v", "1,0,0,0", "--b"],
    &["family", "--n", "1", "--b", "1,0,1,0;0,1,0,-1", "--v", "1,0,0,0", "--domain"],
    &["gauge", "--builtin", "example_4_6", "--phi"],
    &["gauge", "--builtin", "example_4_6", "--z"],
];

fuzz_target!(|data: &[u8]| {
    let Some((&pick, rest)) = data.split_first() else { return };
    let Ok(value) = std::str::from_utf8(rest) else { return };
    let mut argv: Vec<String> = std::iter::once("paracontact")
        .chain(SLOTS[pick as usize % SLOTS.len()].iter().copied())
        .map(String::from)
        .collect();
    argv.push(value.to_string());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with_io(&argv, &mut out, &mut err);
    assert!(matches!(code, 0..=2));
});
