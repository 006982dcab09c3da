//! Dependency capture and container build-context synthesis.
//!
//! Each step gets a dependency manifest (imports mapped to packages through
//! the environment spec, plus detected input files and global env vars) and
//! a self-contained build context: `Dockerfile`, `step.src` (the step
//! script), `manifest.yml`, and a generated `runner.src` wrapper that waits
//! for inbound variables on the shared mount, executes the step, serializes
//! its exports, publishes availability messages, and serves the two probe
//! endpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defuse::string_literals;
use crate::envspec::{EnvVar, EnvironmentSpec};
use crate::stepgraph::{Step, StepGraph};

/// Mount point of the shared volume inside step containers.
pub const SHARED_MOUNT: &str = "/mnt/efs";

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("duplicate step id `{0}`: two steps would write the same build context")]
    DuplicateStepId(String),
    #[error("writing build context: {0}")]
    Io(#[from] std::io::Error),
}

/// Captured dependencies of one step. Field order is alphabetical so the
/// YAML serialization has sorted keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyManifest {
    pub env_vars: Vec<EnvVar>,
    pub input_files: Vec<String>,
    pub packages: Vec<PackageSpec>,
    pub step_id: String,
    pub unmapped_imports: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageSpec {
    pub name: String,
    pub version: String,
}

/// The emitted per-step build context: relative path -> file bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildContext {
    pub step_id: String,
    pub files: BTreeMap<String, Vec<u8>>,
}

/// Maps the step's imports through the environment spec and detects input
/// files. Unmapped imports are listed, not errors.
pub fn capture_dependencies(step: &Step, env_spec: &EnvironmentSpec) -> DependencyManifest {
    let mut packages: Vec<PackageSpec> = Vec::new();
    let mut unmapped = Vec::new();
    for import in &step.imports {
        match env_spec.package_map.get(import) {
            Some(package) => {
                let version = env_spec
                    .pins
                    .get(package)
                    .cloned()
                    .unwrap_or_else(|| "unpinned".to_owned());
                if !packages.iter().any(|p| p.name == *package) {
                    packages.push(PackageSpec {
                        name: package.clone(),
                        version,
                    });
                }
            }
            None => unmapped.push(import.clone()),
        }
    }
    packages.sort_by(|a, b| a.name.cmp(&b.name));

    DependencyManifest {
        env_vars: env_spec.global_env(),
        input_files: detect_input_files(&step.script),
        packages,
        step_id: step.id.clone(),
        unmapped_imports: unmapped,
    }
}

/// Best effort: string literals that end in a dotted extension are treated
/// as input file paths.
fn detect_input_files(script: &str) -> Vec<String> {
    let mut files = Vec::new();
    for lit in string_literals(script) {
        if looks_like_path(&lit) && !files.contains(&lit) {
            files.push(lit);
        }
    }
    files
}

fn looks_like_path(s: &str) -> bool {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return false;
    }
    let Some((stem, ext)) = s.rsplit_once('.') else {
        return false;
    };
    !stem.is_empty()
        && !ext.is_empty()
        && ext.len() <= 8
        && ext.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && ext.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Emits the deterministic four-file build context for one step.
pub fn emit_build_context(
    step: &Step,
    graph: &StepGraph,
    manifest: &DependencyManifest,
    env_spec: &EnvironmentSpec,
) -> BuildContext {
    let mut files = BTreeMap::new();
    files.insert("step.src".to_owned(), step.script.clone().into_bytes());
    files.insert(
        "manifest.yml".to_owned(),
        serde_yaml::to_string(manifest)
            .expect("manifest serializes")
            .into_bytes(),
    );
    files.insert(
        "Dockerfile".to_owned(),
        render_dockerfile(manifest, env_spec).into_bytes(),
    );
    files.insert(
        "runner.src".to_owned(),
        render_runner(step, graph, env_spec).into_bytes(),
    );
    BuildContext {
        step_id: step.id.clone(),
        files,
    }
}

/// Captures dependencies and emits build contexts for every step, checking
/// that no two steps share a context directory.
pub fn emit_build_contexts(
    graph: &StepGraph,
    env_spec: &EnvironmentSpec,
) -> Result<Vec<BuildContext>, CaptureError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut contexts = Vec::new();
    for step in &graph.steps {
        if !seen.insert(step.id.clone()) {
            return Err(CaptureError::DuplicateStepId(step.id.clone()));
        }
        let manifest = capture_dependencies(step, env_spec);
        contexts.push(emit_build_context(step, graph, &manifest, env_spec));
    }
    Ok(contexts)
}

/// Writes a build context under `<out_dir>/<step-id>/`.
pub fn write_build_context(ctx: &BuildContext, out_dir: &Path) -> Result<(), CaptureError> {
    let dir = out_dir.join(&ctx.step_id);
    std::fs::create_dir_all(&dir)?;
    for (rel, bytes) in &ctx.files {
        std::fs::write(dir.join(rel), bytes)?;
    }
    Ok(())
}

fn render_dockerfile(manifest: &DependencyManifest, env_spec: &EnvironmentSpec) -> String {
    let packages = manifest
        .packages
        .iter()
        .map(|p| {
            if p.version == "unpinned" {
                p.name.clone()
            } else {
                format!("{}=={}", p.name, p.version)
            }
        })
        .collect::<Vec<_>>()
        .join(" ");
    // With no packages the install step degenerates to a shell no-op.
    let install = if packages.is_empty() {
        "true".to_owned()
    } else {
        env_spec.install_command.replace("{packages}", &packages)
    };
    format!(
        "FROM {base}\nCOPY manifest.yml step.src runner.src /app/\nWORKDIR /app\nRUN {install}\nEXPOSE 8080\nCMD [\"{runtime}\", \"runner.src\"]\n",
        base = env_spec.base_image,
        runtime = env_spec.runtime,
    )
}

fn python_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Generates the step wrapper. The wrapper polls the shared mount for each
/// inbound variable (the filesystem is also the fallback when no broker is
/// reachable), executes the step script, writes each export to
/// `<mount>/<step>/<var>`, appends one availability message per outbound
/// topic, and serves `/healthz` and `/readiness` on port 8080.
fn render_runner(step: &Step, graph: &StepGraph, env_spec: &EnvironmentSpec) -> String {
    let inputs = graph.inputs_of(&step.id);
    let topics = graph.produce_topics_of(&step.id);

    let mut src = String::new();
    let w = &mut src;
    let _ = writeln!(w, "#!/usr/bin/env python3");
    let _ = writeln!(w, "# generated step runner for {}", step.id);
    let _ = writeln!(w, "import http.server");
    let _ = writeln!(w, "import json");
    let _ = writeln!(w, "import os");
    let _ = writeln!(w, "import socket");
    let _ = writeln!(w, "import threading");
    let _ = writeln!(w, "import time");
    let _ = writeln!(w);
    let _ = writeln!(w, "STEP_ID = {}", python_str(&step.id));
    let _ = writeln!(
        w,
        "MOUNT = os.environ.get(\"J2K_MOUNT\", {})",
        python_str(SHARED_MOUNT)
    );
    let _ = writeln!(
        w,
        "BROKER = os.environ.get(\"KAFKA_BROKER\", {})",
        python_str(&env_spec.broker)
    );
    let input_list = inputs
        .iter()
        .map(|(producer, var)| format!("({}, {})", python_str(producer), python_str(var)))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(w, "INPUTS = [{input_list}]");
    let exports = step
        .exports
        .iter()
        .map(|v| python_str(v))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(w, "EXPORTS = [{exports}]");
    let topic_list = topics
        .iter()
        .map(|t| python_str(t))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(w, "PRODUCE_TOPICS = [{topic_list}]");
    let _ = writeln!(w);
    let _ = writeln!(w, "state = {{\"ready\": False, \"done\": False}}");
    let _ = writeln!(w);
    let _ = writeln!(w, "class Probe(http.server.BaseHTTPRequestHandler):");
    let _ = writeln!(w, "    def do_GET(self):");
    let _ = writeln!(w, "        if self.path == \"/healthz\":");
    let _ = writeln!(w, "            self.respond(200, \"ok\")");
    let _ = writeln!(w, "        elif self.path == \"/readiness\":");
    let _ = writeln!(w, "            if state[\"ready\"]:");
    let _ = writeln!(w, "                self.respond(200, \"ok\")");
    let _ = writeln!(w, "            else:");
    let _ = writeln!(w, "                self.respond(503, \"waiting\")");
    let _ = writeln!(w, "        else:");
    let _ = writeln!(w, "            self.respond(404, \"not found\")");
    let _ = writeln!(w);
    let _ = writeln!(w, "    def respond(self, status, body):");
    let _ = writeln!(w, "        self.send_response(status)");
    let _ = writeln!(w, "        self.end_headers()");
    let _ = writeln!(w, "        self.wfile.write(body.encode())");
    let _ = writeln!(w);
    let _ = writeln!(w, "    def log_message(self, *args):");
    let _ = writeln!(w, "        pass");
    let _ = writeln!(w);
    let _ = writeln!(w, "def serve_probes():");
    let _ = writeln!(
        w,
        "    http.server.HTTPServer((\"0.0.0.0\", 8080), Probe).serve_forever()"
    );
    let _ = writeln!(w);
    let _ = writeln!(w, "def wait_for_input(producer, var):");
    let _ = writeln!(w, "    path = os.path.join(MOUNT, producer, var)");
    let _ = writeln!(w, "    while not os.path.exists(path):");
    let _ = writeln!(w, "        time.sleep(0.5)");
    let _ = writeln!(w, "    with open(path) as fh:");
    let _ = writeln!(w, "        return json.load(fh)");
    let _ = writeln!(w);
    let _ = writeln!(w, "def write_export(var, value):");
    let _ = writeln!(w, "    out_dir = os.path.join(MOUNT, STEP_ID)");
    let _ = writeln!(w, "    os.makedirs(out_dir, exist_ok=True)");
    let _ = writeln!(w, "    with open(os.path.join(out_dir, var), \"w\") as fh:");
    let _ = writeln!(w, "        try:");
    let _ = writeln!(w, "            json.dump(value, fh)");
    let _ = writeln!(w, "        except TypeError:");
    let _ = writeln!(w, "            json.dump(repr(value), fh)");
    let _ = writeln!(w);
    let _ = writeln!(w, "def publish(topic):");
    let _ = writeln!(
        w,
        "    message = json.dumps({{\"step\": STEP_ID, \"topic\": topic}})"
    );
    let _ = writeln!(w, "    try:");
    let _ = writeln!(w, "        host, _, port = BROKER.partition(\":\")");
    let _ = writeln!(
        w,
        "        with socket.create_connection((host, int(port or 9092)), timeout=2) as sock:"
    );
    let _ = writeln!(w, "            sock.sendall((message + \"\\n\").encode())");
    let _ = writeln!(w, "        return");
    let _ = writeln!(w, "    except OSError:");
    let _ = writeln!(
        w,
        "        pass  # no broker reachable; fall back to the shared mount"
    );
    let _ = writeln!(w, "    bus_dir = os.path.join(MOUNT, \".bus\")");
    let _ = writeln!(w, "    os.makedirs(bus_dir, exist_ok=True)");
    let _ = writeln!(
        w,
        "    with open(os.path.join(bus_dir, topic), \"a\") as fh:"
    );
    let _ = writeln!(w, "        fh.write(message + \"\\n\")");
    let _ = writeln!(w);
    let _ = writeln!(w, "def main():");
    let _ = writeln!(
        w,
        "    threading.Thread(target=serve_probes, daemon=True).start()"
    );
    let _ = writeln!(w, "    scope = {{}}");
    for (producer, var) in &inputs {
        let _ = writeln!(
            w,
            "    scope[{var}] = wait_for_input({producer}, {var})",
            var = python_str(var),
            producer = python_str(producer),
        );
    }
    let _ = writeln!(w, "    state[\"ready\"] = True");
    let _ = writeln!(w, "    with open(\"step.src\") as fh:");
    let _ = writeln!(
        w,
        "        exec(compile(fh.read(), \"step.src\", \"exec\"), scope)"
    );
    for var in &step.exports {
        let _ = writeln!(
            w,
            "    write_export({v}, scope.get({v}))",
            v = python_str(var)
        );
    }
    for topic in &topics {
        let _ = writeln!(w, "    publish({})", python_str(topic));
    }
    let _ = writeln!(w, "    state[\"done\"] = True");
    let _ = writeln!(w, "    while True:");
    let _ = writeln!(w, "        time.sleep(60)");
    let _ = writeln!(w);
    let _ = writeln!(w, "if __name__ == \"__main__\":");
    let _ = writeln!(w, "    main()");
    src
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::{parse_notebook, Notebook};
    use crate::stepgraph::build_step_graph;

    fn graph_of(sources: &[&str]) -> StepGraph {
        let cells: Vec<serde_json::Value> = sources
            .iter()
            .map(|s| serde_json::json!({"cell_type": "code", "source": s}))
            .collect();
        let raw = serde_json::to_vec(&serde_json::json!({
            "cells": cells, "nbformat": 4, "nbformat_minor": 5
        }))
        .unwrap();
        build_step_graph(&parse_notebook(&raw).unwrap())
    }

    fn linear3() -> StepGraph {
        graph_of(&["a = 1", "b = a + 1", "print(b)"])
    }

    #[test]
    fn mapped_import_with_pin() {
        let graph = graph_of(&["import pandas as pd\nx = pd.x"]);
        let mut spec = EnvironmentSpec::default();
        spec.package_map.insert("pandas".into(), "pandas".into());
        spec.pins.insert("pandas".into(), "2.1.0".into());
        let manifest = capture_dependencies(&graph.steps[0], &spec);
        assert_eq!(
            manifest.packages,
            vec![PackageSpec {
                name: "pandas".into(),
                version: "2.1.0".into()
            }]
        );
        assert!(manifest.unmapped_imports.is_empty());
    }

    #[test]
    fn no_imports_no_packages_no_warnings() {
        let graph = linear3();
        let manifest = capture_dependencies(&graph.steps[0], &EnvironmentSpec::default());
        assert!(manifest.packages.is_empty());
        assert!(manifest.unmapped_imports.is_empty());
    }

    #[test]
    fn unmapped_import_is_listed() {
        let graph = graph_of(&["import numpy\nimport mylocalmod\nz = numpy.x + mylocalmod.y"]);
        let mut spec = EnvironmentSpec::default();
        spec.package_map.insert("numpy".into(), "numpy".into());
        let manifest = capture_dependencies(&graph.steps[0], &spec);
        assert_eq!(manifest.packages.len(), 1);
        assert_eq!(manifest.packages[0].name, "numpy");
        assert_eq!(manifest.packages[0].version, "unpinned");
        assert_eq!(manifest.unmapped_imports, vec!["mylocalmod".to_string()]);
    }

    #[test]
    fn input_files_detected_from_string_literals() {
        let graph = graph_of(&["df = load('data/train.csv')\nname = \"not a path\"\nver = 'v1.2'"]);
        let manifest = capture_dependencies(&graph.steps[0], &EnvironmentSpec::default());
        assert_eq!(manifest.input_files, vec!["data/train.csv".to_string()]);
    }

    #[test]
    fn manifest_yaml_round_trips() {
        let graph = graph_of(&["import numpy\nx = numpy.zeros('m.npy')"]);
        let mut spec = EnvironmentSpec::default();
        spec.package_map.insert("numpy".into(), "numpy".into());
        spec.env.insert("DATA_ROOT".into(), "/mnt/efs".into());
        let manifest = capture_dependencies(&graph.steps[0], &spec);
        let text = serde_yaml::to_string(&manifest).unwrap();
        let back: DependencyManifest = serde_yaml::from_str(&text).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn build_context_contains_the_four_files() {
        let graph = linear3();
        let spec = EnvironmentSpec::default();
        let manifest = capture_dependencies(&graph.steps[1], &spec);
        let ctx = emit_build_context(&graph.steps[1], &graph, &manifest, &spec);
        let names: Vec<_> = ctx.files.keys().cloned().collect();
        assert_eq!(
            names,
            ["Dockerfile", "manifest.yml", "runner.src", "step.src"]
        );
    }

    #[test]
    fn step_src_equals_step_script_exactly() {
        let graph = linear3();
        let spec = EnvironmentSpec::default();
        let manifest = capture_dependencies(&graph.steps[1], &spec);
        let ctx = emit_build_context(&graph.steps[1], &graph, &manifest, &spec);
        assert_eq!(ctx.files["step.src"], graph.steps[1].script.as_bytes());
    }

    #[test]
    fn dockerfile_matches_template() {
        let graph = linear3();
        let spec = EnvironmentSpec::default();
        let manifest = capture_dependencies(&graph.steps[0], &spec);
        let ctx = emit_build_context(&graph.steps[0], &graph, &manifest, &spec);
        let text = String::from_utf8(ctx.files["Dockerfile"].clone()).unwrap();
        assert_eq!(
            text,
            "FROM python:3.11-slim\nCOPY manifest.yml step.src runner.src /app/\nWORKDIR /app\nRUN true\nEXPOSE 8080\nCMD [\"python3\", \"runner.src\"]\n"
        );
    }

    #[test]
    fn dockerfile_install_command_expands_packages() {
        let graph = graph_of(&["import pandas as pd\nimport numpy\ny = pd.c(numpy.z)"]);
        let mut spec = EnvironmentSpec::default();
        spec.package_map.insert("pandas".into(), "pandas".into());
        spec.package_map.insert("numpy".into(), "numpy".into());
        spec.pins.insert("pandas".into(), "2.1.0".into());
        let manifest = capture_dependencies(&graph.steps[0], &spec);
        let ctx = emit_build_context(&graph.steps[0], &graph, &manifest, &spec);
        let text = String::from_utf8(ctx.files["Dockerfile"].clone()).unwrap();
        assert!(
            text.contains("RUN pip install --no-cache-dir numpy pandas==2.1.0\n"),
            "{text}"
        );
    }

    #[test]
    fn runner_for_middle_step_waits_and_publishes() {
        let graph = linear3();
        let spec = EnvironmentSpec::default();
        let manifest = capture_dependencies(&graph.steps[1], &spec);
        let ctx = emit_build_context(&graph.steps[1], &graph, &manifest, &spec);
        let runner = String::from_utf8(ctx.files["runner.src"].clone()).unwrap();
        assert!(runner.contains("INPUTS = [(\"step-1\", \"a\")]"));
        assert!(runner.contains("EXPORTS = [\"b\"]"));
        assert!(runner.contains("PRODUCE_TOPICS = [\"step-2-to-step-3\"]"));
        assert!(runner.contains("scope[\"a\"] = wait_for_input(\"step-1\", \"a\")"));
        assert!(runner.contains("write_export(\"b\", scope.get(\"b\"))"));
        assert!(runner.contains("publish(\"step-2-to-step-3\")"));
        assert!(runner.contains("/healthz"));
        assert!(runner.contains("/readiness"));
    }

    #[test]
    fn runner_for_isolated_step_has_no_waits_or_publishes() {
        let graph = graph_of(&["x = 1"]);
        let spec = EnvironmentSpec::default();
        let manifest = capture_dependencies(&graph.steps[0], &spec);
        let ctx = emit_build_context(&graph.steps[0], &graph, &manifest, &spec);
        let runner = String::from_utf8(ctx.files["runner.src"].clone()).unwrap();
        assert!(runner.contains("INPUTS = []"));
        assert!(runner.contains("PRODUCE_TOPICS = []"));
        assert!(!runner.contains("wait_for_input(\""));
        assert!(!runner.contains("    publish(\""));
        assert!(runner.contains("/healthz"));
        assert!(runner.contains("/readiness"));
    }

    #[test]
    fn exports_serialized_exactly_once_inputs_waited_exactly_once() {
        let graph = graph_of(&["a = 1\nb = 2", "c = a + b\nd = a - b", "print(c)\nprint(d)"]);
        let spec = EnvironmentSpec::default();
        let contexts = emit_build_contexts(&graph, &spec).unwrap();
        let runner = String::from_utf8(contexts[1].files["runner.src"].clone()).unwrap();
        for var in &graph.steps[1].exports {
            let needle = format!("write_export(\"{var}\",");
            assert_eq!(runner.matches(&needle).count(), 1, "{var}");
        }
        for (producer, var) in graph.inputs_of("step-2") {
            let needle = format!("wait_for_input(\"{producer}\", \"{var}\")");
            assert_eq!(runner.matches(&needle).count(), 1);
        }
    }

    #[test]
    fn emit_is_deterministic() {
        let graph = linear3();
        let spec = EnvironmentSpec::default();
        let a = emit_build_contexts(&graph, &spec).unwrap();
        let b = emit_build_contexts(&graph, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_step_ids_are_rejected() {
        let mut graph = linear3();
        graph.steps[1].id = "step-1".into(); // force what slugging prevents
        let err = emit_build_contexts(&graph, &EnvironmentSpec::default()).unwrap_err();
        assert!(matches!(err, CaptureError::DuplicateStepId(id) if id == "step-1"));
    }

    #[test]
    fn write_build_context_creates_layout() {
        let graph = linear3();
        let spec = EnvironmentSpec::default();
        let contexts = emit_build_contexts(&graph, &spec).unwrap();
        let dir = std::env::temp_dir().join(format!("j2k-capture-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        write_build_context(&contexts[0], &dir).unwrap();
        for file in ["Dockerfile", "step.src", "manifest.yml", "runner.src"] {
            assert!(dir.join("step-1").join(file).is_file(), "{file}");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_notebook_emits_nothing() {
        let nb = Notebook {
            format_version: "4.5".into(),
            kernel_language: "python".into(),
            cells: vec![],
            skipped_count: 0,
        };
        let graph = build_step_graph(&nb);
        assert!(emit_build_contexts(&graph, &EnvironmentSpec::default())
            .unwrap()
            .is_empty());
    }
}
