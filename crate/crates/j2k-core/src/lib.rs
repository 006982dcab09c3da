//! Core library for `j2k`: turns a Jupyter notebook into a DAG of
//! containerized pipeline steps, renders the Kubernetes manifests for them,
//! and simulates the resulting cluster deterministically under fault
//! injection.
//!
//! The pipeline is: [`notebook`] parses the `.ipynb` file and extracts step
//! markers, [`defuse`] computes per-cell definition/use sets, [`stepgraph`]
//! groups cells into steps and wires the DAG, [`capture`] synthesizes a
//! dependency manifest and container build context per step, [`manifests`]
//! renders the Deployment/Service/PV/PVC/HPA YAML bundle, and [`sim`] applies
//! that bundle to an in-memory cluster and executes the workflow tick by
//! tick.

#![forbid(unsafe_code)]

pub mod capture;
pub mod defuse;
pub mod envspec;
pub mod manifests;
pub mod notebook;
pub mod sim;
pub mod stepgraph;

pub use envspec::{EnvVar, EnvironmentSpec, StorageMode};
pub use notebook::{Cell, Notebook, NotebookError};
pub use stepgraph::{Step, StepGraph};
