#![no_main]

//! Fuzzes fault-script parsing: accepted scripts always have non-decreasing
//! ticks.

use libfuzzer_sys::fuzz_target;

use j2k_core::sim::faults::FaultScript;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(script) = FaultScript::parse(text) {
        for pair in script.entries.windows(2) {
            assert!(pair[0].tick <= pair[1].tick, "accepted scripts are ordered");
        }
    }
});
