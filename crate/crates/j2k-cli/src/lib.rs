//! Command implementations for the `j2k` binary: `translate` compiles a
//! notebook into build contexts, manifests, and a graph document;
//! `simulate` replays the emitted bundle in the deterministic cluster
//! simulator; `graph` prints the step graph.
//!
//! Exit codes: 0 success, 1 internal error, 2 unreadable or invalid input,
//! 3 workflow incomplete after the tick budget (`simulate` only).
//! Diagnostics go to standard error as `level: message (cell N)` lines.

#![forbid(unsafe_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use j2k_core::capture::{capture_dependencies, emit_build_context, CaptureError};
use j2k_core::defuse::DefUseOptions;
use j2k_core::envspec::{EnvironmentSpec, StorageMode};
use j2k_core::manifests::{
    bundle, plan_pods, HpaSettings, ManifestBundle, ManifestError, StorageConfig,
};
use j2k_core::notebook::{extract_markers, parse_notebook, Notebook};
use j2k_core::sim::faults::FaultScript;
use j2k_core::sim::{ClusterState, SimError, WorkflowPlan};
use j2k_core::stepgraph::{build_step_graph_with, to_dot, GraphDoc, StepGraph};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INCOMPLETE: u8 = 3;

/// Default storage parameters used when the mode alone is given.
const DEFAULT_NODE_NAME: &str = "node-1";
const DEFAULT_LOCAL_PATH: &str = "/data/j2k";
const DEFAULT_CAPACITY: &str = "5Gi";
const DEFAULT_EFS_HANDLE: &str = "fs-j2k";

/// Resolved invocation parameters shared by the subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub notebook_path: Option<PathBuf>,
    pub env_spec_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub storage_mode: Option<StorageMode>,
    pub namespace: String,
    pub hpa_enabled: bool,
    pub seed: u64,
    pub ticks: u64,
    pub fault_script_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            notebook_path: None,
            env_spec_path: None,
            out_dir: PathBuf::from("out"),
            storage_mode: None,
            namespace: "default".to_owned(),
            hpa_enabled: true,
            seed: 0,
            ticks: 40,
            fault_script_path: None,
        }
    }
}

/// A diagnosed failure carrying its exit code. The message has already been
/// formatted for the `error:` stderr line.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

impl From<ManifestError> for Failure {
    fn from(err: ManifestError) -> Self {
        match err {
            ManifestError::Io(e) => Failure::internal(format!("writing output: {e}")),
            other => Failure::input(other.to_string()),
        }
    }
}

impl From<CaptureError> for Failure {
    fn from(err: CaptureError) -> Self {
        Failure::internal(err.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(err: SimError) -> Self {
        Failure::input(err.to_string())
    }
}

fn read_file(path: &Path, what: &str) -> Result<Vec<u8>, Failure> {
    std::fs::read(path)
        .map_err(|e| Failure::input(format!("cannot read {what} `{}`: {e}", path.display())))
}

fn load_notebook(config: &RunConfig) -> Result<Notebook, Failure> {
    let Some(path) = &config.notebook_path else {
        return Err(Failure::input("no notebook path given (use --notebook)"));
    };
    let raw = read_file(path, "notebook")?;
    let notebook = parse_notebook(&raw).map_err(|e| Failure::input(e.to_string()))?;
    extract_markers(notebook).map_err(|e| Failure::input(e.to_string()))
}

fn load_env_spec(config: &RunConfig) -> Result<EnvironmentSpec, Failure> {
    match &config.env_spec_path {
        Some(path) => {
            let raw = read_file(path, "environment spec")?;
            let text = String::from_utf8(raw)
                .map_err(|_| Failure::input("environment spec is not UTF-8"))?;
            EnvironmentSpec::parse(&text).map_err(|e| Failure::input(e.to_string()))
        }
        None => Ok(EnvironmentSpec::default()),
    }
}

fn storage_config(config: &RunConfig, env_spec: &EnvironmentSpec) -> StorageConfig {
    let mode = config.storage_mode.unwrap_or(env_spec.storage);
    match mode {
        StorageMode::Local => {
            StorageConfig::local(DEFAULT_NODE_NAME, DEFAULT_LOCAL_PATH, DEFAULT_CAPACITY)
        }
        StorageMode::Cloud => StorageConfig::cloud(DEFAULT_EFS_HANDLE, DEFAULT_CAPACITY),
    }
}

fn analysis_options(env_spec: &EnvironmentSpec) -> DefUseOptions {
    DefUseOptions {
        extra_builtins: env_spec.builtin_extra.clone(),
    }
}

fn print_warnings(graph: &StepGraph, env_spec: &EnvironmentSpec) {
    for unresolved in &graph.unresolved {
        eprintln!(
            "warning: unresolved use '{}' (cell {})",
            unresolved.var, unresolved.cell
        );
    }
    for step in &graph.steps {
        let cell = step.cell_indices.first().copied().unwrap_or(0);
        for import in &step.imports {
            if !env_spec.package_map.contains_key(import) {
                eprintln!("warning: no package mapping for import '{import}' (cell {cell})");
            }
        }
    }
}

fn build_graph(config: &RunConfig) -> Result<(StepGraph, EnvironmentSpec), Failure> {
    let env_spec = load_env_spec(config)?;
    let notebook = load_notebook(config)?;
    let graph = build_step_graph_with(&notebook, &analysis_options(&env_spec));
    Ok((graph, env_spec))
}

/// `translate`: notebook -> build contexts + manifests + graph document.
pub fn cmd_translate(config: &RunConfig) -> Result<(), Failure> {
    let (graph, env_spec) = build_graph(config)?;
    print_warnings(&graph, &env_spec);

    let out = &config.out_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::internal(format!("cannot create `{}`: {e}", out.display())))?;

    // Build contexts. Step ids are unique by construction; a collision here
    // is an internal bug.
    let build_dir = out.join("build");
    let mut seen = std::collections::BTreeSet::new();
    for step in &graph.steps {
        if !seen.insert(step.id.clone()) {
            return Err(Failure::internal(format!(
                "duplicate step id `{}`",
                step.id
            )));
        }
        let manifest = capture_dependencies(step, &env_spec);
        let ctx = emit_build_context(step, &graph, &manifest, &env_spec);
        j2k_core::capture::write_build_context(&ctx, &build_dir)?;
    }

    // Manifests.
    let plans = plan_pods(&graph, &env_spec);
    let storage = storage_config(config, &env_spec);
    let hpa = HpaSettings::default();
    let manifest_bundle = bundle(&graph, &plans, &storage, config.hpa_enabled.then_some(&hpa))?;
    manifest_bundle.write_to(&out.join("manifests"))?;

    // Graph document, consumed later by `simulate`.
    let doc = GraphDoc::from_graph(&graph);
    std::fs::write(out.join("graph.json"), doc.to_json_pretty() + "\n")
        .map_err(|e| Failure::internal(format!("writing graph.json: {e}")))?;
    Ok(())
}

/// `graph`: print the step graph as JSON (or dot with `dot = true`).
pub fn cmd_graph(config: &RunConfig, dot: bool) -> Result<(), Failure> {
    let (graph, env_spec) = build_graph(config)?;
    print_warnings(&graph, &env_spec);
    if dot {
        print!("{}", to_dot(&graph));
    } else {
        println!("{}", GraphDoc::from_graph(&graph).to_json_pretty());
    }
    Ok(())
}

/// Outcome summary of a simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimSummary {
    pub steps_completed: usize,
    pub total_steps: usize,
    pub pod_replacements: usize,
    pub liveness_restarts: usize,
    pub hpa_scale_events: usize,
}

impl SimSummary {
    fn of(state: &ClusterState) -> Self {
        use j2k_core::sim::events::EventKind;
        let count = |kind: EventKind| state.events.iter().filter(|e| e.kind == kind).count();
        Self {
            steps_completed: state.steps_completed(),
            total_steps: state.total_steps(),
            pod_replacements: count(EventKind::PodReplaced),
            liveness_restarts: count(EventKind::LivenessRestart),
            hpa_scale_events: count(EventKind::HpaScale),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "steps completed: {}/{}",
            self.steps_completed, self.total_steps
        );
        let _ = writeln!(out, "pod replacements: {}", self.pod_replacements);
        let _ = writeln!(out, "liveness restarts: {}", self.liveness_restarts);
        let _ = writeln!(out, "hpa scale events: {}", self.hpa_scale_events);
        out
    }
}

/// `simulate`: apply the previously emitted bundle and advance the clock
/// under the fault script. Returns the summary; incomplete workflows are a
/// `Failure` with exit code 3.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimSummary, Failure> {
    let out = &config.out_dir;
    let all_yaml_path = out.join("manifests").join("all.yaml");
    let raw = read_file(&all_yaml_path, "manifest bundle")?;
    let text =
        String::from_utf8(raw).map_err(|_| Failure::input("manifest bundle is not UTF-8"))?;
    let manifest_bundle = ManifestBundle::parse_all_yaml(&text).map_err(Failure::input)?;

    let graph_path = out.join("graph.json");
    let graph_raw = read_file(&graph_path, "graph document")?;
    let doc: GraphDoc = serde_json::from_slice(&graph_raw)
        .map_err(|e| Failure::input(format!("malformed graph document: {e}")))?;

    let faults = match &config.fault_script_path {
        Some(path) => {
            let raw = read_file(path, "fault script")?;
            let text =
                String::from_utf8(raw).map_err(|_| Failure::input("fault script is not UTF-8"))?;
            FaultScript::parse(&text).map_err(|e| Failure::input(e.to_string()))?
        }
        None => FaultScript::empty(),
    };

    let mut state = ClusterState::new(&config.namespace, config.seed);
    state.apply_bundle(&manifest_bundle)?;
    state.set_workflow(WorkflowPlan::from_graph_doc(&doc));
    state.advance(config.ticks, &faults);

    std::fs::write(out.join("events.jsonl"), state.events_jsonl())
        .map_err(|e| Failure::internal(format!("writing events.jsonl: {e}")))?;

    let summary = SimSummary::of(&state);
    print!("{}", summary.render());
    if summary.steps_completed == summary.total_steps {
        Ok(summary)
    } else {
        Err(Failure {
            code: EXIT_INCOMPLETE,
            message: format!(
                "workflow incomplete after {} ticks ({}/{} steps)",
                config.ticks, summary.steps_completed, summary.total_steps
            ),
        })
    }
}
