//! Deterministic discrete-event cluster simulator.
//!
//! The simulator applies a rendered manifest bundle (parsing the same YAML
//! the translator emits), then advances in integer ticks. Each tick runs a
//! fixed phase order: fault injection, replica reconciliation, pod phase
//! progression, probes, rolling updates, autoscaling (every 5 ticks), and
//! workflow execution. All collections are ordered maps and there is no
//! stochastic behavior, so identical inputs produce byte-identical event
//! logs.
//!
//! Replicas of a step are hot standbys: exactly one elected pod (lowest
//! uid) executes the step, outputs are written to the shared volume exactly
//! once, and the bus carries availability messages only.

pub mod events;
pub mod faults;
mod ingest;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::manifests::ManifestBundle;
use crate::stepgraph::{GraphDoc, StepGraph};
use events::{EventKind, SimEvent};
use faults::{FaultAction, FaultScript};
use ingest::{ParsedDoc, PvcIn};

/// Mount prefix used for workflow artifacts on the shared volume.
pub const MOUNT_PREFIX: &str = "/mnt/efs";
/// Consecutive liveness failures before a pod is restarted.
pub const LIVENESS_RESTART_THRESHOLD: u32 = 3;
/// Ticks a step spends in the Executing state.
pub const EXECUTION_LATENCY_TICKS: u32 = 2;
/// Autoscaler evaluation period in ticks.
pub const HPA_PERIOD_TICKS: u64 = 5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no persistent volume satisfies claim `{0}`")]
    UnboundClaim(String),
    #[error("duplicate object name `{0}`")]
    DuplicateName(String),
    #[error("service `{0}` not found")]
    ServiceNotFound(String),
    #[error("no service owns cluster ip `{0}`")]
    UnknownIp(String),
    #[error("service `{0}` has no backing pods")]
    NoBackend(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodPhase {
    Pending,
    Running,
    Failed,
    Succeeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepProgress {
    NotStarted,
    WaitingInputs,
    Executing(u32),
    Done,
}

#[derive(Debug, Clone)]
pub struct PodRuntime {
    pub uid: u64,
    pub owner_deployment: String,
    pub template_hash: String,
    pub phase: PodPhase,
    pub ready: bool,
    pub live: bool,
    pub consecutive_liveness_failures: u32,
    pub cpu_utilization_percent: u32,
    pub step_progress: StepProgress,
    created_tick: u64,
    liveness_fail_until: u64,
}

impl PodRuntime {
    pub fn name(&self) -> String {
        format!("pod-{}", self.uid)
    }
}

#[derive(Debug, Clone)]
pub struct DeploymentState {
    pub desired_replicas: u32,
    pub template_hash: String,
    pub max_surge: u32,
    pub max_unavailable: u32,
    pub updating: bool,
    pub step_id: String,
    pub app_label: String,
    pub image: String,
    pub tag: String,
    pub claim_name: String,
    pub cpu_level: u32,
}

#[derive(Debug, Clone)]
pub struct ServiceState {
    pub selector_app: String,
    pub cluster_ip: String,
    pub port: u16,
    pub target_port: u16,
}

#[derive(Debug, Clone)]
pub struct HpaState {
    pub target_deployment: String,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub cpu_target_percent: u32,
    pub last_scale_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusMessage {
    pub from_step: String,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Workflow wiring the manifests alone cannot carry: per step, the inbound
/// `(producer, variable)` pairs, the exported variables, and the outbound
/// topics.
#[derive(Debug, Clone, Default)]
pub struct WorkflowPlan {
    pub steps: Vec<WorkflowStep>,
}

#[derive(Debug, Clone)]
pub struct WorkflowStep {
    pub step_id: String,
    pub inputs: Vec<(String, String)>,
    pub exports: Vec<String>,
    pub produce_topics: Vec<String>,
}

impl WorkflowPlan {
    pub fn from_graph(graph: &StepGraph) -> Self {
        Self {
            steps: graph
                .steps
                .iter()
                .map(|s| WorkflowStep {
                    step_id: s.id.clone(),
                    inputs: graph.inputs_of(&s.id),
                    exports: s.exports.clone(),
                    produce_topics: graph.produce_topics_of(&s.id),
                })
                .collect(),
        }
    }

    /// Rebuilds the plan from the emitted `graph.json` document.
    pub fn from_graph_doc(doc: &GraphDoc) -> Self {
        let steps = doc
            .steps
            .iter()
            .map(|s| {
                let inputs: Vec<(String, String)> = doc
                    .edges
                    .iter()
                    .filter(|e| e.to == s.id)
                    .map(|e| (e.from.clone(), e.var.clone()))
                    .collect();
                let mut produce_topics = Vec::new();
                for e in doc.edges.iter().filter(|e| e.from == s.id) {
                    let topic = format!("{}-to-{}", e.from, e.to);
                    if !produce_topics.contains(&topic) {
                        produce_topics.push(topic);
                    }
                }
                WorkflowStep {
                    step_id: s.id.clone(),
                    inputs,
                    exports: s.exports.clone(),
                    produce_topics,
                }
            })
            .collect();
        Self { steps }
    }
}

/// 32-bit FNV-1a.
pub fn fnv1a32(data: &[u8]) -> u32 {
    let mut hash: u32 = 2166136261;
    for &b in data {
        hash ^= b as u32;
        hash = hash.wrapping_mul(16777619);
    }
    hash
}

/// Deterministic cluster IP for `(namespace, service)`: `10.96.X.Y` with
/// `X.Y` the FNV-1a hash reduced mod 65536, remapped to avoid `10.96.0.0`.
pub fn cluster_ip_for(namespace: &str, service: &str) -> String {
    let mut h = (fnv1a32(format!("{namespace}/{service}").as_bytes()) % 65536) as u16;
    if h == 0 {
        h = 1;
    }
    format!("10.96.{}.{}", h >> 8, h & 0xff)
}

#[derive(Debug, Clone)]
struct PvRecord {
    capacity_bytes: u128,
    access_modes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pub namespace: String,
    pub clock: u64,
    pub deployments: BTreeMap<String, DeploymentState>,
    pub pods: BTreeMap<u64, PodRuntime>,
    pub services: BTreeMap<String, ServiceState>,
    /// PVC name -> PV name.
    pub bindings: BTreeMap<String, String>,
    pub hpas: BTreeMap<String, HpaState>,
    pub bus: BTreeMap<String, Vec<BusMessage>>,
    /// Shared-volume content: absolute path -> bytes.
    pub volume: BTreeMap<String, Vec<u8>>,
    pub events: Vec<SimEvent>,
    pub rng_seed: u64,

    pvs: BTreeMap<String, PvRecord>,
    workflow: Vec<WorkflowStep>,
    step_done: BTreeMap<String, bool>,
    volume_write_counts: BTreeMap<String, u32>,
    next_uid: u64,
    faults_cursor: usize,
}

impl ClusterState {
    pub fn new(namespace: &str, rng_seed: u64) -> Self {
        Self {
            namespace: namespace.to_owned(),
            clock: 0,
            deployments: BTreeMap::new(),
            pods: BTreeMap::new(),
            services: BTreeMap::new(),
            bindings: BTreeMap::new(),
            hpas: BTreeMap::new(),
            bus: BTreeMap::new(),
            volume: BTreeMap::new(),
            events: Vec::new(),
            rng_seed,
            pvs: BTreeMap::new(),
            workflow: Vec::new(),
            step_done: BTreeMap::new(),
            volume_write_counts: BTreeMap::new(),
            next_uid: 1,
            faults_cursor: 0,
        }
    }

    /// Registers every object in the bundle and binds claims to volumes
    /// (smallest sufficient volume first, ties by name). Creates no pods;
    /// reconciliation does that on the first tick.
    pub fn apply_bundle(&mut self, bundle: &ManifestBundle) -> Result<(), SimError> {
        let mut pvcs: Vec<PvcIn> = Vec::new();
        for doc in &bundle.documents {
            match ingest::parse_doc(doc)? {
                ParsedDoc::Deployment(d) => {
                    if self.deployments.contains_key(&d.name) {
                        return Err(SimError::DuplicateName(d.name));
                    }
                    let template_hash = template_hash(&d.image, &d.tag);
                    self.deployments.insert(
                        d.name.clone(),
                        DeploymentState {
                            desired_replicas: d.replicas,
                            template_hash,
                            max_surge: d.max_surge,
                            max_unavailable: d.max_unavailable,
                            updating: false,
                            step_id: d.step_id,
                            app_label: d.app_label,
                            image: d.image,
                            tag: d.tag,
                            claim_name: d.claim_name,
                            cpu_level: 50,
                        },
                    );
                }
                ParsedDoc::Service(s) => {
                    if self.services.contains_key(&s.name) {
                        return Err(SimError::DuplicateName(s.name));
                    }
                    let cluster_ip = self.allocate_cluster_ip(&s.name);
                    self.services.insert(
                        s.name.clone(),
                        ServiceState {
                            selector_app: s.selector_app,
                            cluster_ip,
                            port: s.port,
                            target_port: s.target_port,
                        },
                    );
                }
                ParsedDoc::Pv(pv) => {
                    if self.pvs.contains_key(&pv.name) {
                        return Err(SimError::DuplicateName(pv.name));
                    }
                    self.pvs.insert(
                        pv.name.clone(),
                        PvRecord {
                            capacity_bytes: pv.capacity_bytes,
                            access_modes: pv.access_modes,
                        },
                    );
                }
                ParsedDoc::Pvc(pvc) => {
                    if self.bindings.contains_key(&pvc.name)
                        || pvcs.iter().any(|p| p.name == pvc.name)
                    {
                        return Err(SimError::DuplicateName(pvc.name));
                    }
                    pvcs.push(pvc);
                }
                ParsedDoc::Hpa(h) => {
                    if self.hpas.contains_key(&h.name) {
                        return Err(SimError::DuplicateName(h.name));
                    }
                    self.hpas.insert(
                        h.name.clone(),
                        HpaState {
                            target_deployment: h.target_deployment,
                            min_replicas: h.min_replicas,
                            max_replicas: h.max_replicas,
                            cpu_target_percent: h.cpu_target_percent,
                            last_scale_tick: 0,
                        },
                    );
                }
            }
        }
        self.bind_claims(&pvcs)
    }

    fn allocate_cluster_ip(&self, service: &str) -> String {
        let mut h = (fnv1a32(format!("{}/{}", self.namespace, service).as_bytes()) % 65536) as u16;
        if h == 0 {
            h = 1;
        }
        let used: std::collections::BTreeSet<&str> = self
            .services
            .values()
            .map(|s| s.cluster_ip.as_str())
            .collect();
        loop {
            let ip = format!("10.96.{}.{}", h >> 8, h & 0xff);
            if !used.contains(ip.as_str()) {
                return ip;
            }
            h = h.wrapping_add(1);
            if h == 0 {
                h = 1;
            }
        }
    }

    fn bind_claims(&mut self, pvcs: &[PvcIn]) -> Result<(), SimError> {
        for pvc in pvcs {
            let bound: std::collections::BTreeSet<&String> = self.bindings.values().collect();
            let mut candidates: Vec<(&String, &PvRecord)> = self
                .pvs
                .iter()
                .filter(|(name, pv)| {
                    !bound.contains(name)
                        && pv.capacity_bytes >= pvc.request_bytes
                        && pvc.access_modes.iter().all(|m| pv.access_modes.contains(m))
                })
                .collect();
            candidates.sort_by(|a, b| {
                a.1.capacity_bytes
                    .cmp(&b.1.capacity_bytes)
                    .then(a.0.cmp(b.0))
            });
            let Some((pv_name, _)) = candidates.first() else {
                return Err(SimError::UnboundClaim(pvc.name.clone()));
            };
            self.bindings.insert(pvc.name.clone(), (*pv_name).clone());
        }
        Ok(())
    }

    /// Installs the workflow wiring derived from the step graph.
    pub fn set_workflow(&mut self, plan: WorkflowPlan) {
        self.step_done = plan
            .steps
            .iter()
            .map(|s| (s.step_id.clone(), false))
            .collect();
        self.workflow = plan.steps;
    }

    /// Advances the simulation. The same script must be passed on every
    /// call; entries are consumed once, in order.
    pub fn advance(&mut self, ticks: u64, faults: &FaultScript) {
        for _ in 0..ticks {
            self.clock += 1;
            self.inject_faults(faults);
            self.reconcile();
            self.progress_phases();
            self.run_probes();
            self.run_rolling_updates();
            self.run_hpa();
            self.run_workflow();
        }
    }

    fn push_event(
        &mut self,
        kind: EventKind,
        deployment: Option<&str>,
        pod: Option<u64>,
        detail: String,
    ) {
        let seq = self.events.len() as u64;
        self.events.push(SimEvent {
            tick: self.clock,
            seq,
            kind,
            deployment: deployment.map(str::to_owned),
            pod: pod.map(|uid| format!("pod-{uid}")),
            detail,
        });
    }

    fn owned_pods(&self, deployment: &str) -> Vec<u64> {
        self.pods
            .values()
            .filter(|p| p.owner_deployment == deployment)
            .map(|p| p.uid)
            .collect()
    }

    fn alive_pods(&self, deployment: &str) -> Vec<u64> {
        self.pods
            .values()
            .filter(|p| p.owner_deployment == deployment && p.phase != PodPhase::Failed)
            .map(|p| p.uid)
            .collect()
    }

    fn create_pod(&mut self, deployment: &str, hash: &str, detail: &str) -> u64 {
        let uid = self.next_uid;
        self.next_uid += 1;
        let cpu = self
            .deployments
            .get(deployment)
            .map(|d| d.cpu_level)
            .unwrap_or(50);
        self.pods.insert(
            uid,
            PodRuntime {
                uid,
                owner_deployment: deployment.to_owned(),
                template_hash: hash.to_owned(),
                phase: PodPhase::Pending,
                ready: false,
                live: true,
                consecutive_liveness_failures: 0,
                cpu_utilization_percent: cpu,
                step_progress: StepProgress::NotStarted,
                created_tick: self.clock,
                liveness_fail_until: 0,
            },
        );
        self.push_event(
            EventKind::PodCreated,
            Some(deployment),
            Some(uid),
            detail.to_owned(),
        );
        uid
    }

    fn inject_faults(&mut self, faults: &FaultScript) {
        while self.faults_cursor < faults.entries.len()
            && faults.entries[self.faults_cursor].tick <= self.clock
        {
            let entry = faults.entries[self.faults_cursor].clone();
            self.faults_cursor += 1;
            match entry.action {
                FaultAction::KillPod { deployment, count } => {
                    let victims: Vec<u64> = self
                        .alive_pods(&deployment)
                        .into_iter()
                        .take(count as usize)
                        .collect();
                    for uid in victims {
                        let pod = self.pods.get_mut(&uid).expect("victim exists");
                        pod.phase = PodPhase::Failed;
                        pod.ready = false;
                        pod.live = false;
                        self.push_event(
                            EventKind::PodKilled,
                            Some(&deployment),
                            Some(uid),
                            "fault injection".to_owned(),
                        );
                    }
                }
                FaultAction::FailLiveness {
                    deployment,
                    pod_ordinal,
                    duration_ticks,
                } => {
                    let pods = self.alive_pods(&deployment);
                    if let Some(&uid) = pods.get(pod_ordinal as usize) {
                        let until = self.clock + duration_ticks;
                        self.pods
                            .get_mut(&uid)
                            .expect("pod exists")
                            .liveness_fail_until = until;
                    }
                }
                FaultAction::SetCpu {
                    deployment,
                    percent,
                } => {
                    if let Some(dep) = self.deployments.get_mut(&deployment) {
                        dep.cpu_level = percent;
                    }
                    for pod in self
                        .pods
                        .values_mut()
                        .filter(|p| p.owner_deployment == deployment)
                    {
                        pod.cpu_utilization_percent = percent;
                    }
                }
                FaultAction::TriggerRollingUpdate {
                    deployment,
                    new_tag,
                } => {
                    let Some(dep) = self.deployments.get_mut(&deployment) else {
                        continue;
                    };
                    let new_hash = template_hash(&dep.image, &new_tag);
                    if new_hash != dep.template_hash {
                        dep.tag = new_tag.clone();
                        dep.template_hash = new_hash;
                        dep.updating = true;
                        self.push_event(
                            EventKind::RollingUpdateStarted,
                            Some(&deployment),
                            None,
                            format!("new tag {new_tag}"),
                        );
                    }
                }
            }
        }
    }

    /// ReplicaSet semantics: failed pods are replaced and the non-failed
    /// pod count tracks `desired_replicas`.
    fn reconcile(&mut self) {
        let names: Vec<String> = self.deployments.keys().cloned().collect();
        for name in names {
            let failed: Vec<u64> = self
                .owned_pods(&name)
                .into_iter()
                .filter(|uid| self.pods[uid].phase == PodPhase::Failed)
                .collect();
            for uid in failed {
                self.pods.remove(&uid);
                self.push_event(
                    EventKind::PodReplaced,
                    Some(&name),
                    Some(uid),
                    "failed pod removed; replacement follows".to_owned(),
                );
            }
            let dep = self.deployments[&name].clone();
            let alive = self.alive_pods(&name);
            if (alive.len() as u32) < dep.desired_replicas {
                for _ in 0..(dep.desired_replicas - alive.len() as u32) {
                    self.create_pod(&name, &dep.template_hash, "reconcile");
                }
            } else if (alive.len() as u32) > dep.desired_replicas && !dep.updating {
                let excess = alive.len() as u32 - dep.desired_replicas;
                // Newest pods go first on scale-down.
                for &uid in alive.iter().rev().take(excess as usize) {
                    self.pods.remove(&uid);
                    self.push_event(
                        EventKind::PodRemoved,
                        Some(&name),
                        Some(uid),
                        "scale down".to_owned(),
                    );
                }
            }
        }
    }

    fn progress_phases(&mut self) {
        let clock = self.clock;
        let mut started: Vec<(u64, String)> = Vec::new();
        for pod in self.pods.values_mut() {
            if pod.phase == PodPhase::Pending && clock > pod.created_tick {
                pod.phase = PodPhase::Running;
                started.push((pod.uid, pod.owner_deployment.clone()));
            }
        }
        for (uid, deployment) in started {
            self.push_event(
                EventKind::PodRunning,
                Some(&deployment),
                Some(uid),
                String::new(),
            );
        }
    }

    fn inputs_available(&self, step_id: &str) -> bool {
        match self.workflow.iter().find(|s| s.step_id == step_id) {
            Some(step) => step
                .inputs
                .iter()
                .all(|(producer, var)| self.volume.contains_key(&artifact_path(producer, var))),
            // Steps outside the workflow have no inputs to wait for.
            None => true,
        }
    }

    fn run_probes(&mut self) {
        let clock = self.clock;
        let uids: Vec<u64> = self.pods.keys().cloned().collect();
        for uid in uids {
            let pod = &self.pods[&uid];
            if pod.phase != PodPhase::Running {
                continue;
            }
            let deployment = pod.owner_deployment.clone();
            let failing = clock < self.pods[&uid].liveness_fail_until;
            if failing {
                let pod = self.pods.get_mut(&uid).expect("pod exists");
                pod.live = false;
                pod.consecutive_liveness_failures += 1;
                let failures = pod.consecutive_liveness_failures;
                self.push_event(
                    EventKind::LivenessProbeFailed,
                    Some(&deployment),
                    Some(uid),
                    format!("{failures} consecutive"),
                );
                if failures >= LIVENESS_RESTART_THRESHOLD {
                    let pod = self.pods.get_mut(&uid).expect("pod exists");
                    pod.phase = PodPhase::Pending;
                    pod.consecutive_liveness_failures = 0;
                    pod.ready = false;
                    pod.live = true;
                    pod.created_tick = clock;
                    pod.step_progress = StepProgress::NotStarted;
                    self.push_event(
                        EventKind::LivenessRestart,
                        Some(&deployment),
                        Some(uid),
                        "liveness failure threshold reached".to_owned(),
                    );
                    continue;
                }
            } else {
                let pod = self.pods.get_mut(&uid).expect("pod exists");
                pod.live = true;
                pod.consecutive_liveness_failures = 0;
            }

            let step_id = self.deployments[&deployment].step_id.clone();
            let inputs_ok = self.inputs_available(&step_id);
            let pod = self.pods.get_mut(&uid).expect("pod exists");
            pod.ready = pod.phase == PodPhase::Running && inputs_ok;
            if !matches!(
                pod.step_progress,
                StepProgress::Executing(_) | StepProgress::Done
            ) {
                pod.step_progress = if inputs_ok {
                    StepProgress::NotStarted
                } else {
                    StepProgress::WaitingInputs
                };
            }
        }
    }

    /// Old-hash pods are replaced new-first under the constraints
    /// `desired - ready <= max_unavailable` and
    /// `total <= desired + max_surge`.
    fn run_rolling_updates(&mut self) {
        let names: Vec<String> = self.deployments.keys().cloned().collect();
        for name in names {
            let dep = self.deployments[&name].clone();
            if !dep.updating {
                continue;
            }
            let desired = dep.desired_replicas as i64;

            let alive = self.alive_pods(&name);
            let mut total = alive.len() as i64;
            let mut new_count = alive
                .iter()
                .filter(|uid| self.pods[uid].template_hash == dep.template_hash)
                .count() as i64;
            while new_count < desired && total < desired + dep.max_surge as i64 {
                self.create_pod(&name, &dep.template_hash, "rolling update surge");
                new_count += 1;
                total += 1;
            }

            let old: Vec<u64> = self
                .alive_pods(&name)
                .into_iter()
                .filter(|uid| self.pods[uid].template_hash != dep.template_hash)
                .collect();
            let mut ready_count = self
                .owned_pods(&name)
                .iter()
                .filter(|uid| self.pods[uid].ready)
                .count() as i64;
            for uid in old {
                let was_ready = self.pods[&uid].ready;
                let allowed = if was_ready {
                    desired - (ready_count - 1) <= dep.max_unavailable as i64
                } else {
                    true // removing an unready pod cannot grow the deficit
                };
                if !allowed {
                    continue;
                }
                self.pods.remove(&uid);
                if was_ready {
                    ready_count -= 1;
                }
                self.push_event(
                    EventKind::PodRemoved,
                    Some(&name),
                    Some(uid),
                    "rolling update".to_owned(),
                );
            }

            let alive = self.alive_pods(&name);
            let old_left = alive
                .iter()
                .any(|uid| self.pods[uid].template_hash != dep.template_hash);
            if !old_left && alive.len() as i64 >= desired {
                self.deployments
                    .get_mut(&name)
                    .expect("deployment exists")
                    .updating = false;
                self.push_event(
                    EventKind::RollingUpdateComplete,
                    Some(&name),
                    None,
                    format!("all pods on tag {}", dep.tag),
                );
            }
        }
    }

    /// Every 5 ticks: `desired := clamp(ceil(desired * cpu / target), min,
    /// max)` moving at most one replica per evaluation.
    fn run_hpa(&mut self) {
        if !self.clock.is_multiple_of(HPA_PERIOD_TICKS) {
            return;
        }
        let names: Vec<String> = self.hpas.keys().cloned().collect();
        for name in names {
            let hpa = self.hpas[&name].clone();
            let Some(dep) = self.deployments.get(&hpa.target_deployment) else {
                continue;
            };
            let desired = dep.desired_replicas;
            let cpu = dep.cpu_level;
            let raw = (desired as u64 * cpu as u64).div_ceil(hpa.cpu_target_percent as u64) as u32;
            let clamped = raw.clamp(hpa.min_replicas, hpa.max_replicas);
            let next = match clamped.cmp(&desired) {
                std::cmp::Ordering::Greater => desired + 1,
                std::cmp::Ordering::Less => desired - 1,
                std::cmp::Ordering::Equal => desired,
            };
            if next != desired {
                let target = hpa.target_deployment.clone();
                self.deployments
                    .get_mut(&target)
                    .expect("deployment exists")
                    .desired_replicas = next;
                self.hpas
                    .get_mut(&name)
                    .expect("hpa exists")
                    .last_scale_tick = self.clock;
                self.push_event(
                    EventKind::HpaScale,
                    Some(&target),
                    None,
                    format!("{desired} -> {next}"),
                );
            }
        }
    }

    fn run_workflow(&mut self) {
        let names: Vec<String> = self.deployments.keys().cloned().collect();
        for name in names {
            let step_id = self.deployments[&name].step_id.clone();
            let Some(wstep) = self.workflow.iter().find(|s| s.step_id == step_id).cloned() else {
                continue;
            };
            if self.step_done.get(&step_id).copied().unwrap_or(false) {
                continue;
            }
            if !self.inputs_available(&step_id) {
                continue;
            }
            // Outputs already on the volume mean a previous executor
            // finished; observe and skip.
            if !wstep.exports.is_empty()
                && wstep
                    .exports
                    .iter()
                    .all(|v| self.volume.contains_key(&artifact_path(&step_id, v)))
            {
                self.step_done.insert(step_id.clone(), true);
                continue;
            }

            let executor = self.owned_pods(&name).into_iter().find(|uid| {
                self.pods[uid].phase == PodPhase::Running
                    && matches!(self.pods[uid].step_progress, StepProgress::Executing(_))
            });
            match executor {
                Some(uid) => {
                    let StepProgress::Executing(remaining) = self.pods[&uid].step_progress else {
                        unreachable!("filtered to executing pods");
                    };
                    if remaining > 1 {
                        self.pods.get_mut(&uid).expect("pod exists").step_progress =
                            StepProgress::Executing(remaining - 1);
                    } else {
                        self.complete_step(&name, uid, &wstep);
                    }
                }
                None => {
                    // Elect the lowest-uid ready pod.
                    let candidate = self.owned_pods(&name).into_iter().find(|uid| {
                        self.pods[uid].phase == PodPhase::Running && self.pods[uid].ready
                    });
                    if let Some(uid) = candidate {
                        self.pods.get_mut(&uid).expect("pod exists").step_progress =
                            StepProgress::Executing(EXECUTION_LATENCY_TICKS);
                        self.push_event(
                            EventKind::StepStarted,
                            Some(&name),
                            Some(uid),
                            step_id.clone(),
                        );
                    }
                }
            }
        }
    }

    fn complete_step(&mut self, deployment: &str, uid: u64, wstep: &WorkflowStep) {
        let tick = self.clock;
        for var in &wstep.exports {
            let path = artifact_path(&wstep.step_id, var);
            if !self.volume.contains_key(&path) {
                let payload = format!("{{\"producer\":\"{}\",\"var\":\"{}\"}}", wstep.step_id, var);
                self.volume.insert(path.clone(), payload.into_bytes());
                *self.volume_write_counts.entry(path).or_insert(0) += 1;
            }
        }
        for topic in &wstep.produce_topics {
            self.bus.entry(topic.clone()).or_default().push(BusMessage {
                from_step: wstep.step_id.clone(),
                tick,
            });
        }
        self.pods.get_mut(&uid).expect("pod exists").step_progress = StepProgress::Done;
        self.step_done.insert(wstep.step_id.clone(), true);
        self.push_event(
            EventKind::StepCompleted,
            Some(deployment),
            Some(uid),
            wstep.step_id.clone(),
        );
    }

    /// Cluster IP lookup for a service in a namespace.
    pub fn get_cluster_ip(&self, service_name: &str, namespace: &str) -> Result<String, SimError> {
        if namespace != self.namespace {
            return Err(SimError::ServiceNotFound(format!(
                "{namespace}/{service_name}"
            )));
        }
        self.services
            .get(service_name)
            .map(|s| s.cluster_ip.clone())
            .ok_or_else(|| SimError::ServiceNotFound(format!("{namespace}/{service_name}")))
    }

    /// HTTP-style call against a service's cluster IP. Probe paths return
    /// 200 when at least one backing pod is ready, 503 when pods exist but
    /// none is ready; any other path is 404.
    pub fn call_service(&self, ip: &str, path: &str) -> Result<HttpResponse, SimError> {
        let (name, service) = self
            .services
            .iter()
            .find(|(_, s)| s.cluster_ip == ip)
            .ok_or_else(|| SimError::UnknownIp(ip.to_owned()))?;
        let deployment = self
            .deployments
            .iter()
            .find(|(_, d)| d.app_label == service.selector_app)
            .map(|(n, _)| n.clone());
        let pods: Vec<&PodRuntime> = deployment
            .as_deref()
            .map(|d| {
                self.pods
                    .values()
                    .filter(|p| p.owner_deployment == d)
                    .collect()
            })
            .unwrap_or_default();
        if pods.is_empty() {
            return Err(SimError::NoBackend(name.clone()));
        }
        if path != "/healthz" && path != "/readiness" {
            return Ok(HttpResponse {
                status: 404,
                body: "not found".to_owned(),
            });
        }
        if pods.iter().any(|p| p.ready) {
            Ok(HttpResponse {
                status: 200,
                body: "ok".to_owned(),
            })
        } else {
            Ok(HttpResponse {
                status: 503,
                body: "unavailable".to_owned(),
            })
        }
    }

    pub fn events_jsonl(&self) -> String {
        events::to_jsonl(&self.events)
    }

    pub fn total_steps(&self) -> usize {
        self.workflow.len()
    }

    pub fn steps_completed(&self) -> usize {
        self.step_done.values().filter(|done| **done).count()
    }

    pub fn all_steps_completed(&self) -> bool {
        self.steps_completed() == self.total_steps()
    }

    /// Number of times each artifact path was written; used to check the
    /// exactly-once output property.
    pub fn volume_write_counts(&self) -> &BTreeMap<String, u32> {
        &self.volume_write_counts
    }
}

fn template_hash(image: &str, tag: &str) -> String {
    format!("{:08x}", fnv1a32(format!("{image}:{tag}").as_bytes()))
}

/// Artifact location for one exported variable.
pub fn artifact_path(step_id: &str, var: &str) -> String {
    format!("{MOUNT_PREFIX}/{step_id}/{var}")
}
