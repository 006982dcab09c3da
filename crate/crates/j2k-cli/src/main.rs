use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use j2k_cli::{cmd_graph, cmd_simulate, cmd_translate, Failure, RunConfig};
use j2k_core::envspec::StorageMode;

/// Translate a Jupyter notebook into a containerized Kubernetes pipeline
/// and simulate it under fault injection.
#[derive(Parser)]
#[command(name = "j2k", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile the notebook: build contexts, manifests, and graph.json.
    Translate(TranslateArgs),
    /// Apply the emitted manifests in the simulator and run the workflow.
    Simulate(SimulateArgs),
    /// Print the step graph as JSON (or Graphviz dot).
    Graph(GraphArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StorageArg {
    Local,
    Cloud,
}

impl From<StorageArg> for StorageMode {
    fn from(arg: StorageArg) -> Self {
        match arg {
            StorageArg::Local => StorageMode::Local,
            StorageArg::Cloud => StorageMode::Cloud,
        }
    }
}

#[derive(Args)]
struct TranslateArgs {
    /// Notebook file (.ipynb) to translate.
    #[arg(long)]
    notebook: PathBuf,
    /// Environment spec (j2k.yml); defaults apply when omitted.
    #[arg(long)]
    env_spec: Option<PathBuf>,
    /// Output directory; the J2K_OUT environment variable overrides this.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Storage mode for the PV/PVC pair; defaults to the env spec value.
    #[arg(long, value_enum)]
    storage: Option<StorageArg>,
    /// Namespace used for cluster-ip derivation in the simulator.
    #[arg(long, default_value = "default")]
    namespace: String,
    /// Emit a HorizontalPodAutoscaler per step (default).
    #[arg(long, overrides_with = "no_hpa")]
    hpa: bool,
    /// Do not emit autoscalers.
    #[arg(long)]
    no_hpa: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory holding manifests/ and graph.json from `translate`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Ticks to advance the cluster clock.
    #[arg(long, default_value_t = 40)]
    ticks: u64,
    /// Fault script (YAML) to inject while advancing.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Simulation seed, recorded in the cluster state.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Namespace used for cluster-ip derivation.
    #[arg(long, default_value = "default")]
    namespace: String,
}

#[derive(Args)]
struct GraphArgs {
    /// Notebook file (.ipynb) to analyze.
    #[arg(long)]
    notebook: PathBuf,
    /// Environment spec (j2k.yml); defaults apply when omitted.
    #[arg(long)]
    env_spec: Option<PathBuf>,
    /// Print Graphviz dot text instead of JSON.
    #[arg(long)]
    dot: bool,
}

fn out_dir(cli_value: PathBuf) -> PathBuf {
    match std::env::var_os("J2K_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cli_value,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Failure> = match cli.command {
        Command::Translate(args) => {
            let config = RunConfig {
                notebook_path: Some(args.notebook),
                env_spec_path: args.env_spec,
                out_dir: out_dir(args.out),
                storage_mode: args.storage.map(StorageMode::from),
                namespace: args.namespace,
                hpa_enabled: !args.no_hpa,
                ..RunConfig::default()
            };
            cmd_translate(&config)
        }
        Command::Simulate(args) => {
            let config = RunConfig {
                out_dir: out_dir(args.out),
                ticks: args.ticks,
                fault_script_path: args.faults,
                seed: args.seed,
                namespace: args.namespace,
                ..RunConfig::default()
            };
            cmd_simulate(&config).map(|_| ())
        }
        Command::Graph(args) => {
            let config = RunConfig {
                notebook_path: Some(args.notebook),
                env_spec_path: args.env_spec,
                ..RunConfig::default()
            };
            cmd_graph(&config, args.dot)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
