//! Test-support crate: random notebook/graph generators with
//! construction-time ground truth, plus a brute-force sequential
//! interpretation oracle that is independent of the production graph
//! builder. Used by unit, property, and acceptance tests; never shipped.

use rand::prelude::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use j2k_core::notebook::{Cell, Notebook};
use j2k_core::stepgraph::{Edge, Step, StepGraph};

/// Ground truth def/use for one generated cell, recorded while the cell is
/// generated (not derived from any analyzer).
#[derive(Debug, Clone, Default)]
pub struct CellTruth {
    pub defs: Vec<String>,
    pub uses: Vec<String>,
}

impl CellTruth {
    fn def(&mut self, name: &str) {
        if !self.defs.iter().any(|d| d == name) {
            self.defs.push(name.to_owned());
        }
    }
    fn use_(&mut self, name: &str) {
        if !self.uses.iter().any(|u| u == name) {
            self.uses.push(name.to_owned());
        }
    }
}

/// A generated notebook plus its per-cell ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedNotebook {
    pub notebook: Notebook,
    pub truth: Vec<CellTruth>,
}

const NAMES: &[&str] = &["alpha", "beta", "gamma", "delta", "eps", "zeta"];
const MODULES: &[&str] = &["numpy", "pandas", "scipy", "requests"];

/// Generates a marker-free notebook of at most `max_cells` cells over the
/// restricted statement grammar, recording ground-truth def/use sets.
pub fn generate_notebook(rng: &mut ChaCha8Rng, max_cells: usize) -> GeneratedNotebook {
    let cell_count = rng.random_range(0..=max_cells);
    let mut cells = Vec::new();
    let mut truth = Vec::new();
    for index in 0..cell_count {
        let statements = rng.random_range(1..=3);
        let mut lines = Vec::new();
        let mut t = CellTruth::default();
        for _ in 0..statements {
            gen_statement(rng, &mut lines, &mut t);
        }
        cells.push(Cell {
            index,
            source: lines.join("\n"),
            marker: None,
        });
        truth.push(t);
    }
    GeneratedNotebook {
        notebook: Notebook {
            format_version: "4.5".into(),
            kernel_language: "python".into(),
            cells,
            skipped_count: 0,
        },
        truth,
    }
}

fn pick(rng: &mut ChaCha8Rng, pool: &[&str]) -> String {
    (*pool.choose(rng).expect("non-empty pool")).to_owned()
}

fn gen_statement(rng: &mut ChaCha8Rng, lines: &mut Vec<String>, t: &mut CellTruth) {
    match rng.random_range(0..8) {
        0 => {
            // simple assignment reading up to two names
            let target = pick(rng, NAMES);
            let mut expr = rng.random_range(0..10).to_string();
            for _ in 0..rng.random_range(0..=2) {
                let operand = pick(rng, NAMES);
                expr = format!("{expr} + {operand}");
                t.use_(&operand);
            }
            lines.push(format!("{target} = {expr}"));
            t.def(&target);
        }
        1 => {
            let (a, b) = (pick(rng, NAMES), pick(rng, NAMES));
            let (x, y) = (pick(rng, NAMES), pick(rng, NAMES));
            lines.push(format!("{a}, {b} = {x}, {y}"));
            t.use_(&x);
            t.use_(&y);
            t.def(&a);
            t.def(&b);
        }
        2 => {
            let target = pick(rng, NAMES);
            lines.push(format!("{target} += {}", rng.random_range(1..5)));
            t.use_(&target);
            t.def(&target);
        }
        3 => {
            let module = pick(rng, MODULES);
            let alias = format!("{}_mod", &module[..2]);
            lines.push(format!("import {module} as {alias}"));
            t.def(&alias);
        }
        4 => {
            let target = pick(rng, NAMES);
            let iterable = pick(rng, NAMES);
            let body_target = pick(rng, NAMES);
            lines.push(format!("for {target} in {iterable}:"));
            lines.push(format!("    {body_target} = {target} * 2"));
            t.use_(&iterable);
            t.def(&target);
            t.use_(&target);
            t.def(&body_target);
        }
        5 => {
            let fname = format!("fn_{}", pick(rng, NAMES));
            let global = pick(rng, NAMES);
            lines.push(format!("def {fname}(arg):"));
            lines.push(format!("    return arg + {global}"));
            t.def(&fname);
            t.use_("arg");
            t.use_(&global);
        }
        6 => {
            let read = pick(rng, NAMES);
            lines.push(format!("print({read})"));
            t.use_(&read);
        }
        _ => {
            let target = pick(rng, NAMES);
            let read = pick(rng, NAMES);
            lines.push(format!("with ctx({read}) as {target}:"));
            lines.push("    pass".to_owned());
            t.use_("ctx");
            t.use_(&read);
            t.def(&target);
        }
    }
}

/// Independent oracle: replays cells in order under last-writer-wins
/// semantics over the recorded ground truth and returns the expected edge
/// set between singleton steps named `step-<k>`.
pub fn oracle_edges(truth: &[CellTruth]) -> Vec<Edge> {
    let step_id = |cell: usize| format!("step-{}", cell + 1);
    let mut last_writer: std::collections::BTreeMap<String, usize> = Default::default();
    let mut edges: Vec<Edge> = Vec::new();
    for (cell, t) in truth.iter().enumerate() {
        for var in &t.uses {
            if let Some(&writer) = last_writer.get(var) {
                if writer != cell {
                    let edge = Edge {
                        from: step_id(writer),
                        to: step_id(cell),
                        var: var.clone(),
                    };
                    if !edges.contains(&edge) {
                        edges.push(edge);
                    }
                }
            }
        }
        for var in &t.defs {
            last_writer.insert(var.clone(), cell);
        }
    }
    edges
}

/// Builds a ChaCha generator from a fixed seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generates a random well-formed step graph (forward edges only) for
/// bundle-closure style tests. Variable names are unique per producer.
pub fn generate_graph(rng: &mut ChaCha8Rng, max_steps: usize) -> StepGraph {
    let step_count = rng.random_range(1..=max_steps.max(1));
    let mut steps: Vec<Step> = (0..step_count)
        .map(|i| Step {
            id: format!("step-{}", i + 1),
            cell_indices: vec![i],
            defs: Vec::new(),
            uses: Vec::new(),
            imports: Vec::new(),
            exports: Vec::new(),
            script: format!("v{i} = {i}\n"),
        })
        .collect();
    let mut edges = Vec::new();
    for to in 1..step_count {
        for from in 0..to {
            if rng.random_bool(0.35) {
                let var = format!("v{from}_{to}");
                edges.push(Edge {
                    from: steps[from].id.clone(),
                    to: steps[to].id.clone(),
                    var: var.clone(),
                });
                steps[from].defs.push(var.clone());
                steps[from].exports.push(var.clone());
                steps[to].uses.push(var);
            }
        }
    }
    StepGraph {
        steps,
        edges,
        unresolved: Vec::new(),
    }
}

/// Serializes a generated notebook to `.ipynb` bytes, for tests that go
/// through the byte-level parser.
pub fn to_ipynb_bytes(notebook: &Notebook) -> Vec<u8> {
    let cells: Vec<String> = notebook
        .cells
        .iter()
        .map(|c| {
            format!(
                r#"{{"cell_type": "code", "metadata": {{}}, "source": {}}}"#,
                serde_json_escape(&c.source)
            )
        })
        .collect();
    format!(
        r#"{{"cells": [{}], "metadata": {{}}, "nbformat": 4, "nbformat_minor": 5}}"#,
        cells.join(", ")
    )
    .into_bytes()
}

fn serde_json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
