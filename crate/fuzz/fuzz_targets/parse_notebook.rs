#![no_main]

//! Fuzzes the notebook front end: byte-level parsing, marker extraction,
//! and graph construction must never panic, marker extraction must be
//! idempotent, and the resulting graph must stay acyclic and partition the
//! cells.

use libfuzzer_sys::fuzz_target;

use j2k_core::notebook::{extract_markers, parse_notebook};
use j2k_core::stepgraph::{build_step_graph, topological_order};

fuzz_target!(|data: &[u8]| {
    let Ok(notebook) = parse_notebook(data) else {
        return;
    };
    let Ok(once) = extract_markers(notebook) else {
        return;
    };
    let twice = extract_markers(once.clone()).expect("second extraction cannot fail");
    assert_eq!(once, twice, "extract_markers must be idempotent");

    let graph = build_step_graph(&once);
    topological_order(&graph).expect("graphs from notebooks are acyclic");

    let mut cells: Vec<usize> = graph
        .steps
        .iter()
        .flat_map(|s| s.cell_indices.clone())
        .collect();
    cells.sort_unstable();
    let expected: Vec<usize> = (0..once.cells.len()).collect();
    assert_eq!(cells, expected, "steps must partition the code cells");
});
