//! Dataflow oracle equivalence: the production graph builder must agree
//! with an independent brute-force sequential interpretation over randomly
//! generated notebooks (restricted grammar, ground truth recorded at
//! generation time).

use j2k_core::notebook::parse_notebook;
use j2k_core::stepgraph::{build_step_graph, topological_order};
use j2k_testkit::{generate_notebook, oracle_edges, rng, to_ipynb_bytes};

#[test]
fn graph_edges_match_sequential_oracle_on_200_random_notebooks() {
    let mut rng = rng(42);
    for case in 0..200 {
        let generated = generate_notebook(&mut rng, 10);
        // Go through the byte-level parser so the whole front end is
        // under test, not just the in-memory path.
        let raw = to_ipynb_bytes(&generated.notebook);
        let notebook = parse_notebook(&raw).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let graph = build_step_graph(&notebook);
        let expected = oracle_edges(&generated.truth);
        assert_eq!(
            graph.edges,
            expected,
            "case {case}, notebook:\n{}",
            notebook
                .cells
                .iter()
                .map(|c| c.source.as_str())
                .collect::<Vec<_>>()
                .join("\n---\n")
        );
    }
}

#[test]
fn random_notebooks_always_yield_acyclic_partitioned_graphs() {
    let mut rng = rng(7);
    for _ in 0..100 {
        let generated = generate_notebook(&mut rng, 10);
        let graph = build_step_graph(&generated.notebook);

        // Edges only point forward in cell order.
        for edge in &graph.edges {
            let from = graph.step(&edge.from).unwrap().min_cell_index();
            let to = graph.step(&edge.to).unwrap().min_cell_index();
            assert!(from < to, "edge {} -> {} goes backward", edge.from, edge.to);
        }
        topological_order(&graph).expect("graph is acyclic");

        // Steps partition the code cells.
        let mut cells: Vec<usize> = graph
            .steps
            .iter()
            .flat_map(|s| s.cell_indices.clone())
            .collect();
        cells.sort_unstable();
        let expected: Vec<usize> = (0..generated.notebook.cells.len()).collect();
        assert_eq!(cells, expected);

        // Every edge variable is exported by its producer and used by its
        // consumer.
        for edge in &graph.edges {
            assert!(graph.step(&edge.from).unwrap().exports.contains(&edge.var));
            assert!(graph.step(&edge.to).unwrap().uses.contains(&edge.var));
        }
    }
}

#[test]
fn serialized_graphs_are_byte_identical_across_runs() {
    let mut rng1 = rng(99);
    let mut rng2 = rng(99);
    for _ in 0..20 {
        let a = generate_notebook(&mut rng1, 10);
        let b = generate_notebook(&mut rng2, 10);
        let ga = j2k_core::stepgraph::GraphDoc::from_graph(&build_step_graph(&a.notebook));
        let gb = j2k_core::stepgraph::GraphDoc::from_graph(&build_step_graph(&b.notebook));
        assert_eq!(ga.to_json_pretty(), gb.to_json_pretty());
    }
}
