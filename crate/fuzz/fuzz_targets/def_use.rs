#![no_main]

//! Fuzzes the line-oriented def/use scanner over arbitrary text. The scan
//! is total: it must never panic, must be deterministic, and must keep its
//! name lists duplicate-free.

use libfuzzer_sys::fuzz_target;

use j2k_core::defuse::{extract_def_use, string_literals};

fuzz_target!(|data: &[u8]| {
    let Ok(source) = std::str::from_utf8(data) else {
        return;
    };
    let first = extract_def_use(source);
    let second = extract_def_use(source);
    assert_eq!(first, second, "analysis must be deterministic");

    for list in [&first.defs, &first.uses, &first.imports] {
        let mut sorted = list.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), list.len(), "no duplicate names");
    }

    let _ = string_literals(source);
});
