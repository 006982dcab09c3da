//! Step grouping and dependency-graph construction.
//!
//! Cells become steps (singleton by default; a marked cell opens a named
//! step that absorbs following unmarked cells), then edges are wired by
//! sequential notebook semantics: each use resolves to the last preceding
//! cell that defines the name (last writer wins). A use defined only by its
//! own cell is self-satisfied; a use with no definer at all is recorded as
//! unresolved, which is a warning rather than an error.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defuse::{extract_def_use_with, DefUseOptions};
use crate::notebook::{allocate_slug, Notebook};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cycle detected in step graph involving step `{0}` (internal bug)")]
    CycleDetected(String),
}

/// One pipeline step: a contiguous group of cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub id: String,
    pub cell_indices: Vec<usize>,
    pub defs: Vec<String>,
    pub uses: Vec<String>,
    pub imports: Vec<String>,
    /// Defs consumed by a later step.
    pub exports: Vec<String>,
    /// Concatenated cell sources, newline-joined.
    pub script: String,
}

impl Step {
    pub fn min_cell_index(&self) -> usize {
        self.cell_indices.first().copied().unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub var: String,
}

/// A use that no preceding (or same) step defines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedUse {
    pub step: String,
    pub var: String,
    pub cell: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepGraph {
    pub steps: Vec<Step>,
    pub edges: Vec<Edge>,
    pub unresolved: Vec<UnresolvedUse>,
}

impl StepGraph {
    pub fn step(&self, id: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.id == id)
    }

    /// Inbound `(producer, variable)` pairs of a step, in edge order.
    pub fn inputs_of(&self, id: &str) -> Vec<(String, String)> {
        self.edges
            .iter()
            .filter(|e| e.to == id)
            .map(|e| (e.from.clone(), e.var.clone()))
            .collect()
    }

    /// Deduplicated outbound topic names of a step, in edge order.
    pub fn produce_topics_of(&self, id: &str) -> Vec<String> {
        let mut topics = Vec::new();
        for e in self.edges.iter().filter(|e| e.from == id) {
            let topic = format!("{}-to-{}", e.from, e.to);
            if !topics.contains(&topic) {
                topics.push(topic);
            }
        }
        topics
    }

    /// Deduplicated inbound topic names of a step, in edge order.
    pub fn consume_topics_of(&self, id: &str) -> Vec<String> {
        let mut topics = Vec::new();
        for e in self.edges.iter().filter(|e| e.to == id) {
            let topic = format!("{}-to-{}", e.from, e.to);
            if !topics.contains(&topic) {
                topics.push(topic);
            }
        }
        topics
    }
}

/// Builds the step graph with the default analysis options.
pub fn build_step_graph(notebook: &Notebook) -> StepGraph {
    build_step_graph_with(notebook, &DefUseOptions::default())
}

/// Groups cells into steps and wires edges by last-writer-wins resolution.
pub fn build_step_graph_with(notebook: &Notebook, opts: &DefUseOptions) -> StepGraph {
    // Group pass: each group is (marker, cell indices).
    let mut groups: Vec<(Option<String>, Vec<usize>)> = Vec::new();
    let mut in_named_step = false;
    for cell in &notebook.cells {
        match (&cell.marker, in_named_step) {
            (Some(marker), _) => {
                groups.push((Some(marker.clone()), vec![cell.index]));
                in_named_step = true;
            }
            (None, true) => groups
                .last_mut()
                .expect("named step open")
                .1
                .push(cell.index),
            (None, false) => groups.push((None, vec![cell.index])),
        }
    }

    // Assign unique ids. Marker slugs and generated `step-<k>` names share
    // one namespace; collisions get the usual numeric suffixes.
    let mut used = BTreeSet::new();
    let ids: Vec<String> = groups
        .iter()
        .enumerate()
        .map(|(k, (marker, _))| {
            let candidate = marker.clone().unwrap_or_else(|| format!("step-{}", k + 1));
            allocate_slug(&mut used, candidate)
        })
        .collect();

    let cell_sets: Vec<_> = notebook
        .cells
        .iter()
        .map(|c| extract_def_use_with(&c.source, opts))
        .collect();
    let step_of_cell: Vec<usize> = {
        let mut map = vec![0usize; notebook.cells.len()];
        for (g, (_, cells)) in groups.iter().enumerate() {
            for &c in cells {
                map[c] = g;
            }
        }
        map
    };

    // Sequential interpretation at cell granularity.
    let mut last_writer: std::collections::BTreeMap<&str, usize> = Default::default();
    let mut edges: Vec<Edge> = Vec::new();
    let mut unresolved: Vec<UnresolvedUse> = Vec::new();
    for cell in &notebook.cells {
        let set = &cell_sets[cell.index];
        for var in &set.uses {
            match last_writer.get(var.as_str()) {
                Some(&def_cell) => {
                    let from = step_of_cell[def_cell];
                    let to = step_of_cell[cell.index];
                    if from != to {
                        let edge = Edge {
                            from: ids[from].clone(),
                            to: ids[to].clone(),
                            var: var.clone(),
                        };
                        if !edges.contains(&edge) {
                            edges.push(edge);
                        }
                    }
                }
                None => {
                    // A name the cell itself defines (import-then-use and
                    // the like) is self-satisfied, not unresolved.
                    if !set.defs.contains(var)
                        && !unresolved
                            .iter()
                            .any(|u| u.var == *var && u.step == ids[step_of_cell[cell.index]])
                    {
                        unresolved.push(UnresolvedUse {
                            step: ids[step_of_cell[cell.index]].clone(),
                            var: var.clone(),
                            cell: cell.index,
                        });
                    }
                }
            }
        }
        for var in &set.defs {
            last_writer.insert(var, cell.index);
        }
    }

    // Aggregate per step.
    let steps: Vec<Step> = groups
        .iter()
        .zip(&ids)
        .map(|((_, cells), id)| {
            let mut defs = Vec::new();
            let mut uses = Vec::new();
            let mut imports = Vec::new();
            let mut scripts = Vec::new();
            for &c in cells {
                for d in &cell_sets[c].defs {
                    if !defs.contains(d) {
                        defs.push(d.clone());
                    }
                }
                for u in &cell_sets[c].uses {
                    if !uses.contains(u) {
                        uses.push(u.clone());
                    }
                }
                for m in &cell_sets[c].imports {
                    if !imports.contains(m) {
                        imports.push(m.clone());
                    }
                }
                scripts.push(notebook.cells[c].source.as_str());
            }
            let mut script = scripts.join("\n");
            if !script.is_empty() {
                script.push('\n');
            }
            let exports: Vec<String> = defs
                .iter()
                .filter(|d| edges.iter().any(|e| e.from == *id && e.var == **d))
                .cloned()
                .collect();
            Step {
                id: id.clone(),
                cell_indices: cells.clone(),
                defs,
                uses,
                imports,
                exports,
                script,
            }
        })
        .collect();

    StepGraph {
        steps,
        edges,
        unresolved,
    }
}

/// Kahn's algorithm with ties broken by ascending minimum cell index.
pub fn topological_order(graph: &StepGraph) -> Result<Vec<String>, GraphError> {
    let mut indegree: Vec<usize> = vec![0; graph.steps.len()];
    let index_of = |id: &str| graph.steps.iter().position(|s| s.id == id);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); graph.steps.len()];
    let mut seen = BTreeSet::new();
    for edge in &graph.edges {
        let (Some(from), Some(to)) = (index_of(&edge.from), index_of(&edge.to)) else {
            continue;
        };
        // Parallel edges (same pair, different vars) count once.
        if seen.insert((from, to)) {
            adjacency[from].push(to);
            indegree[to] += 1;
        }
    }

    let mut order = Vec::with_capacity(graph.steps.len());
    let mut ready: Vec<usize> = (0..graph.steps.len())
        .filter(|&i| indegree[i] == 0)
        .collect();
    while !ready.is_empty() {
        let pick = ready
            .iter()
            .enumerate()
            .min_by_key(|(_, &i)| graph.steps[i].min_cell_index())
            .map(|(pos, _)| pos)
            .expect("non-empty");
        let node = ready.swap_remove(pick);
        order.push(graph.steps[node].id.clone());
        for &next in &adjacency[node] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                ready.push(next);
            }
        }
    }
    if order.len() != graph.steps.len() {
        let stuck = graph
            .steps
            .iter()
            .find(|s| !order.contains(&s.id))
            .map(|s| s.id.clone())
            .unwrap_or_default();
        return Err(GraphError::CycleDetected(stuck));
    }
    Ok(order)
}

/// JSON document shape emitted by the `graph` subcommand and read back by
/// the simulator for workflow wiring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDoc {
    pub steps: Vec<GraphStep>,
    pub edges: Vec<Edge>,
    pub unresolved: Vec<UnresolvedUse>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphStep {
    pub id: String,
    pub cells: Vec<usize>,
    pub defs: Vec<String>,
    pub uses: Vec<String>,
    pub exports: Vec<String>,
}

impl GraphDoc {
    pub fn from_graph(graph: &StepGraph) -> Self {
        Self {
            steps: graph
                .steps
                .iter()
                .map(|s| GraphStep {
                    id: s.id.clone(),
                    cells: s.cell_indices.clone(),
                    defs: s.defs.clone(),
                    uses: s.uses.clone(),
                    exports: s.exports.clone(),
                })
                .collect(),
            edges: graph.edges.clone(),
            unresolved: graph.unresolved.clone(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph doc serializes")
    }
}

/// Graphviz rendering of the step graph, edges labeled by variable.
pub fn to_dot(graph: &StepGraph) -> String {
    let mut out = String::from("digraph steps {\n");
    for step in &graph.steps {
        out.push_str(&format!("  \"{}\";\n", step.id));
    }
    for edge in &graph.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
            edge.from, edge.to, edge.var
        ));
    }
    out.push_str("}\n");
    out
}
