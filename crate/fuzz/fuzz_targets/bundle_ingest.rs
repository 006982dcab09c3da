#![no_main]

//! Fuzzes the simulator's manifest ingestion: splitting an `all.yaml`
//! stream, extracting typed fields, quantity parsing, and claim binding.
//! Applying an arbitrary bundle may fail, but must never panic, and a
//! successful apply must leave every claim bound.

use libfuzzer_sys::fuzz_target;

use j2k_core::manifests::ManifestBundle;
use j2k_core::sim::faults::FaultScript;
use j2k_core::sim::ClusterState;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(bundle) = ManifestBundle::parse_all_yaml(text) else {
        return;
    };
    let mut state = ClusterState::new("default", 0);
    if state.apply_bundle(&bundle).is_ok() {
        // A tick over an arbitrary-but-accepted bundle must not panic.
        state.advance(3, &FaultScript::empty());
    }
});
