//! Black-box tests of the `j2k` binary: exit codes, diagnostics, output
//! layout, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn j2k() -> Command {
    Command::new(env!("CARGO_BIN_EXE_j2k"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../j2k-core/fixtures")
        .join(name)
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn translate_linear3(out: &Path) -> Output {
    j2k()
        .args(["translate", "--notebook"])
        .arg(fixture("linear3.ipynb"))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn translate_linear3_succeeds_with_fifteen_documents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = translate_linear3(&out);
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let manifest_files: Vec<_> = std::fs::read_dir(out.join("manifests"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "all.yaml")
        .collect();
    assert_eq!(manifest_files.len(), 15);
    assert!(out.join("graph.json").is_file());
    for step in ["step-1", "step-2", "step-3"] {
        for file in ["Dockerfile", "step.src", "manifest.yml", "runner.src"] {
            assert!(
                out.join("build").join(step).join(file).is_file(),
                "{step}/{file}"
            );
        }
    }
}

#[test]
fn missing_notebook_is_exit_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let output = j2k()
        .args([
            "translate",
            "--notebook",
            "/no/such/notebook.ipynb",
            "--out",
        ])
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("/no/such/notebook.ipynb"));
}

#[test]
fn unresolved_use_warns_but_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let nb = tmp.path().join("nb.ipynb");
    write(
        &nb,
        r#"{"cells": [{"cell_type": "code", "source": "y = mystery + 1"}],
            "nbformat": 4, "nbformat_minor": 5}"#,
    );
    let output = j2k()
        .args(["translate", "--notebook"])
        .arg(&nb)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("warning:"), "{stderr}");
    assert!(stderr.contains("mystery"), "{stderr}");
    assert!(stderr.contains("(cell 0)"), "{stderr}");
}

#[test]
fn unmapped_import_warns_with_import_name() {
    let tmp = tempfile::tempdir().unwrap();
    let nb = tmp.path().join("nb.ipynb");
    write(
        &nb,
        r#"{"cells": [{"cell_type": "code", "source": "import mylocalmod\nprint(mylocalmod)"}],
            "nbformat": 4, "nbformat_minor": 5}"#,
    );
    let output = j2k()
        .args(["translate", "--notebook"])
        .arg(&nb)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(stderr_of(&output).contains("mylocalmod"));
}

#[test]
fn graph_prints_strictly_parseable_json() {
    let output = j2k()
        .args(["graph", "--notebook"])
        .arg(fixture("linear3.ipynb"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(value["steps"].as_array().unwrap().len(), 3);
    assert_eq!(value["edges"].as_array().unwrap().len(), 2);
}

#[test]
fn graph_of_empty_notebook_is_empty_arrays() {
    let tmp = tempfile::tempdir().unwrap();
    let nb = tmp.path().join("empty.ipynb");
    write(&nb, r#"{"cells": [], "nbformat": 4, "nbformat_minor": 5}"#);
    let output = j2k()
        .args(["graph", "--notebook"])
        .arg(&nb)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(value["steps"].as_array().unwrap().len(), 0);
    assert_eq!(value["edges"].as_array().unwrap().len(), 0);
}

#[test]
fn graph_of_malformed_notebook_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let nb = tmp.path().join("bad.ipynb");
    write(&nb, "{}");
    let output = j2k()
        .args(["graph", "--notebook"])
        .arg(&nb)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn graph_dot_output_is_graphviz() {
    let output = j2k()
        .args(["graph", "--dot", "--notebook"])
        .arg(fixture("linear3.ipynb"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = stdout_of(&output);
    assert!(text.starts_with("digraph steps {"));
    assert!(text.contains("\"step-1\" -> \"step-2\" [label=\"a\"];"));
}

#[test]
fn simulate_completes_linear3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(translate_linear3(&out).status.code(), Some(0));
    let output = j2k()
        .args(["simulate", "--ticks", "40", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(stdout_of(&output).contains("steps completed: 3/3"));
    assert!(out.join("events.jsonl").is_file());
}

#[test]
fn simulate_zero_ticks_is_exit_3_with_zero_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(translate_linear3(&out).status.code(), Some(0));
    let output = j2k()
        .args(["simulate", "--ticks", "0", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(stdout_of(&output).contains("steps completed: 0/3"));
}

#[test]
fn simulate_under_constant_pod_killing_is_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(translate_linear3(&out).status.code(), Some(0));
    let mut script = String::new();
    for tick in 1..=40 {
        for dep in [
            "step-1-deployment",
            "step-2-deployment",
            "step-3-deployment",
        ] {
            script.push_str(&format!(
                "- {{tick: {tick}, action: KillPod, deployment: {dep}, count: 9}}\n"
            ));
        }
    }
    let faults = tmp.path().join("faults.yml");
    write(&faults, &script);
    let output = j2k()
        .args(["simulate", "--ticks", "40", "--out"])
        .arg(&out)
        .arg("--faults")
        .arg(&faults)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn simulate_without_translate_output_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let output = j2k()
        .args(["simulate", "--out"])
        .arg(tmp.path().join("missing"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_fault_script_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(translate_linear3(&out).status.code(), Some(0));
    let faults = tmp.path().join("faults.yml");
    write(&faults, "- {tick: 1, action: Nonsense}\n");
    let output = j2k()
        .args(["simulate", "--out"])
        .arg(&out)
        .arg("--faults")
        .arg(&faults)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn no_hpa_flag_drops_the_autoscalers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = j2k()
        .args(["translate", "--no-hpa", "--notebook"])
        .arg(fixture("linear3.ipynb"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let manifest_files: Vec<_> = std::fs::read_dir(out.join("manifests"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "all.yaml")
        .collect();
    assert_eq!(manifest_files.len(), 12);
}

#[test]
fn j2k_out_env_var_overrides_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let flag_dir = tmp.path().join("flag-out");
    let env_dir = tmp.path().join("env-out");
    let output = j2k()
        .args(["translate", "--notebook"])
        .arg(fixture("linear3.ipynb"))
        .arg("--out")
        .arg(&flag_dir)
        .env("J2K_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(env_dir.join("graph.json").is_file());
    assert!(!flag_dir.exists());
}

#[test]
fn storage_cloud_flag_renders_csi_volumes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = j2k()
        .args(["translate", "--storage", "cloud", "--notebook"])
        .arg(fixture("linear3.ipynb"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let all = std::fs::read_to_string(out.join("manifests/all.yaml")).unwrap();
    assert!(all.contains("efs.csi.aws.com"));
    assert!(all.contains("ReadWriteMany"));
}

#[test]
fn env_spec_pins_flow_into_build_context() {
    let tmp = tempfile::tempdir().unwrap();
    let nb = tmp.path().join("nb.ipynb");
    write(
        &nb,
        r#"{"cells": [{"cell_type": "code", "source": "import pandas as pd\ndf = pd.read_csv('in.csv')"}],
            "nbformat": 4, "nbformat_minor": 5}"#,
    );
    let spec = tmp.path().join("j2k.yml");
    write(
        &spec,
        "package_map:\n  pandas: pandas\npins:\n  pandas: \"2.1.0\"\nbroker: kafka:9092\n",
    );
    let out = tmp.path().join("out");
    let output = j2k()
        .args(["translate", "--notebook"])
        .arg(&nb)
        .arg("--env-spec")
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let manifest = std::fs::read_to_string(out.join("build/step-1/manifest.yml")).unwrap();
    assert!(manifest.contains("name: pandas"));
    assert!(manifest.contains("version: 2.1.0"));
    assert!(manifest.contains("in.csv"));
    let deployment =
        std::fs::read_to_string(out.join("manifests/09-deployment-step-1-deployment.yaml"));
    // Single-step notebook: deployment is document 03 (pv, pvc, svc, deploy, hpa).
    let deployment = deployment.unwrap_or_else(|_| {
        std::fs::read_to_string(out.join("manifests/03-deployment-step-1-deployment.yaml")).unwrap()
    });
    assert!(deployment.contains("value: \"kafka:9092\""));
}
