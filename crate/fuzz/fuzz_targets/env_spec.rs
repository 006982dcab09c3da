#![no_main]

//! Fuzzes environment-spec parsing (`j2k.yml`).

use libfuzzer_sys::fuzz_target;

use j2k_core::envspec::EnvironmentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = EnvironmentSpec::parse(text) {
        // Accepted specs serialize and re-parse to the same value.
        let rendered = serde_yaml::to_string(&spec).expect("spec serializes");
        let back = EnvironmentSpec::parse(&rendered).expect("round-trip parses");
        assert_eq!(spec, back);
    }
});
