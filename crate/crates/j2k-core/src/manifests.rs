//! Kubernetes manifest planning and rendering: one Deployment, Service, and
//! PV/PVC per step, plus an optional HorizontalPodAutoscaler.
//!
//! YAML is emitted by hand with two-space indents, block style, and keys in
//! template order, so the Deployment can be compared field-for-field against
//! the fixed template (replicas 3, RollingUpdate 1/1, probe paths, resource
//! quantities, and the `{pod_name}-efs-pvc` claim reference).

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::envspec::{EnvVar, EnvironmentSpec, StorageMode};
use crate::stepgraph::StepGraph;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("invalid name `{0}`: must be a DNS label (lowercase alphanumeric and dashes, at most 63 chars)")]
    InvalidName(String),
    #[error("missing storage field: {0}")]
    MissingField(&'static str),
    #[error("invalid autoscaler bounds: {0}")]
    InvalidBounds(String),
    #[error("writing manifests: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodRole {
    Producer,
    Consumer,
    Both,
    Isolated,
}

/// Deployment parameters for one step's pod.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodPlan {
    pub pod_name: String,
    pub image_name: String,
    pub tag: String,
    pub role: PodRole,
    pub produce_topics: Vec<String>,
    pub consume_topics: Vec<String>,
    pub env: Vec<EnvVar>,
    pub broker: String,
}

/// Storage parameters shared by every step's PV/PVC pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageConfig {
    pub mode: StorageMode,
    pub node_name: String,
    pub capacity: String,
    pub local_path: String,
    pub efs_handle: String,
}

impl StorageConfig {
    pub fn local(node_name: &str, local_path: &str, capacity: &str) -> Self {
        Self {
            mode: StorageMode::Local,
            node_name: node_name.into(),
            capacity: capacity.into(),
            local_path: local_path.into(),
            efs_handle: String::new(),
        }
    }

    pub fn cloud(efs_handle: &str, capacity: &str) -> Self {
        Self {
            mode: StorageMode::Cloud,
            node_name: String::new(),
            capacity: capacity.into(),
            local_path: String::new(),
            efs_handle: efs_handle.into(),
        }
    }
}

/// Autoscaler parameters; defaults keep the 3-replica floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HpaSettings {
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub cpu_target_percent: u32,
}

impl Default for HpaSettings {
    fn default() -> Self {
        Self {
            min_replicas: 3,
            max_replicas: 10,
            cpu_target_percent: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestDoc {
    pub kind: String,
    pub name: String,
    pub yaml_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestBundle {
    pub documents: Vec<ManifestDoc>,
}

/// Plans one pod per step: role from edge degrees, one topic per
/// producer/consumer pair, and the `J2K_*` env wiring followed by the
/// spec-file globals.
pub fn plan_pods(graph: &StepGraph, env_spec: &EnvironmentSpec) -> Vec<PodPlan> {
    graph
        .steps
        .iter()
        .map(|step| {
            let produce = graph.produce_topics_of(&step.id);
            let consume = graph.consume_topics_of(&step.id);
            let role = match (!produce.is_empty(), !consume.is_empty()) {
                (true, false) => PodRole::Producer,
                (false, true) => PodRole::Consumer,
                (true, true) => PodRole::Both,
                (false, false) => PodRole::Isolated,
            };
            let mut env = vec![
                EnvVar::new("J2K_STEP_ID", step.id.clone()),
                EnvVar::new("J2K_PRODUCE_TOPICS", produce.join(",")),
                EnvVar::new("J2K_CONSUME_TOPICS", consume.join(",")),
            ];
            env.extend(env_spec.global_env());
            PodPlan {
                pod_name: step.id.clone(),
                image_name: format!("j2k-{}", step.id),
                tag: env_spec.tag.clone(),
                role,
                produce_topics: produce,
                consume_topics: consume,
                env,
                broker: env_spec.broker.clone(),
            }
        })
        .collect()
}

fn is_dns_label(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 63
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
        && !name.starts_with('-')
        && !name.ends_with('-')
}

fn check_name(name: &str) -> Result<(), ManifestError> {
    if is_dns_label(name) {
        Ok(())
    } else {
        Err(ManifestError::InvalidName(name.to_owned()))
    }
}

fn yaml_quote(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
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

/// Renders the Deployment for one pod plan, following the fixed template:
/// 3 replicas, RollingUpdate with maxUnavailable/maxSurge 1, `KAFKA_BROKER`
/// first in the env list, 1 CPU / 1Gi limits and 500m / 500Mi requests,
/// HTTP probes on 8080, and the shared volume claim.
pub fn render_deployment(plan: &PodPlan) -> Result<String, ManifestError> {
    check_name(&plan.pod_name)?;
    check_name(&format!("{}-deployment", plan.pod_name))?;

    let mut env_lines = String::new();
    for var in &plan.env {
        let _ = writeln!(env_lines, "        - name: {}", var.name);
        let _ = writeln!(env_lines, "          value: {}", yaml_quote(&var.value));
    }

    Ok(format!(
        "\
apiVersion: apps/v1
kind: Deployment
metadata:
  name: {pod}-deployment
spec:
  replicas: 3
  strategy:
    type: RollingUpdate
    rollingUpdate:
      maxUnavailable: 1
      maxSurge: 1
  selector:
    matchLabels:
      app: {pod}
  template:
    metadata:
      labels:
        app: {pod}
    spec:
      containers:
      - name: {pod}-container
        image: {image}:{tag}
        env:
        - name: KAFKA_BROKER
          value: {broker}
{env_lines}        resources:
          limits:
            cpu: \"1\"
            memory: \"1Gi\"
          requests:
            cpu: \"500m\"
            memory: \"500Mi\"
        livenessProbe:
          httpGet:
            path: /healthz
            port: 8080
        readinessProbe:
          httpGet:
            path: /readiness
            port: 8080
        volumeMounts:
        - name: efs-volume
          mountPath: /mnt/efs
      volumes:
      - name: efs-volume
        persistentVolumeClaim:
          claimName: {pod}-efs-pvc
",
        pod = plan.pod_name,
        image = plan.image_name,
        tag = plan.tag,
        broker = yaml_quote(&plan.broker),
        env_lines = env_lines,
    ))
}

/// ClusterIP Service exposing port 80 onto the pod's probe/runner port.
pub fn render_service(plan: &PodPlan) -> Result<String, ManifestError> {
    check_name(&plan.pod_name)?;
    check_name(&format!("{}-svc", plan.pod_name))?;
    Ok(format!(
        "\
apiVersion: v1
kind: Service
metadata:
  name: {pod}-svc
spec:
  type: ClusterIP
  selector:
    app: {pod}
  ports:
  - port: 80
    targetPort: 8080
",
        pod = plan.pod_name
    ))
}

/// PV + PVC pair. Local mode pins the volume to a node through required
/// node affinity; cloud mode renders the EFS CSI shape with ReadWriteMany.
pub fn render_storage(
    plan: &PodPlan,
    storage: &StorageConfig,
) -> Result<Vec<String>, ManifestError> {
    check_name(&plan.pod_name)?;
    check_name(&format!("{}-efs-pvc", plan.pod_name))?;
    let pv_name = format!("{}-efs-pv", plan.pod_name);
    let pvc_name = format!("{}-efs-pvc", plan.pod_name);
    if storage.capacity.is_empty() {
        return Err(ManifestError::MissingField("capacity"));
    }

    let (pv, access_mode, class) = match storage.mode {
        StorageMode::Local => {
            if storage.node_name.is_empty() {
                return Err(ManifestError::MissingField("node_name"));
            }
            if storage.local_path.is_empty() {
                return Err(ManifestError::MissingField("local_path"));
            }
            let pv = format!(
                "\
apiVersion: v1
kind: PersistentVolume
metadata:
  name: {pv_name}
spec:
  capacity:
    storage: {capacity}
  accessModes:
  - ReadWriteOnce
  persistentVolumeReclaimPolicy: Retain
  storageClassName: j2k-local
  local:
    path: {path}
  nodeAffinity:
    required:
      nodeSelectorTerms:
      - matchExpressions:
        - key: kubernetes.io/hostname
          operator: In
          values:
          - {node}
",
                capacity = storage.capacity,
                path = storage.local_path,
                node = storage.node_name,
            );
            (pv, "ReadWriteOnce", "j2k-local")
        }
        StorageMode::Cloud => {
            if storage.efs_handle.is_empty() {
                return Err(ManifestError::MissingField("efs_handle"));
            }
            let pv = format!(
                "\
apiVersion: v1
kind: PersistentVolume
metadata:
  name: {pv_name}
spec:
  capacity:
    storage: {capacity}
  accessModes:
  - ReadWriteMany
  persistentVolumeReclaimPolicy: Retain
  storageClassName: j2k-efs
  csi:
    driver: efs.csi.aws.com
    volumeHandle: {handle}
",
                capacity = storage.capacity,
                handle = storage.efs_handle,
            );
            (pv, "ReadWriteMany", "j2k-efs")
        }
    };

    let pvc = format!(
        "\
apiVersion: v1
kind: PersistentVolumeClaim
metadata:
  name: {pvc_name}
spec:
  accessModes:
  - {access_mode}
  storageClassName: {class}
  resources:
    requests:
      storage: {capacity}
",
        capacity = storage.capacity,
    );
    Ok(vec![pv, pvc])
}

/// HorizontalPodAutoscaler targeting the step's Deployment.
pub fn render_hpa(
    plan: &PodPlan,
    min_replicas: u32,
    max_replicas: u32,
    cpu_target_percent: u32,
) -> Result<String, ManifestError> {
    check_name(&plan.pod_name)?;
    if min_replicas < 1 || min_replicas > max_replicas {
        return Err(ManifestError::InvalidBounds(format!(
            "need 1 <= min <= max, got min={min_replicas} max={max_replicas}"
        )));
    }
    if !(1..=100).contains(&cpu_target_percent) {
        return Err(ManifestError::InvalidBounds(format!(
            "cpu target must be in 1..=100, got {cpu_target_percent}"
        )));
    }
    Ok(format!(
        "\
apiVersion: autoscaling/v2
kind: HorizontalPodAutoscaler
metadata:
  name: {pod}-hpa
spec:
  scaleTargetRef:
    apiVersion: apps/v1
    kind: Deployment
    name: {pod}-deployment
  minReplicas: {min_replicas}
  maxReplicas: {max_replicas}
  metrics:
  - type: Resource
    resource:
      name: cpu
      target:
        type: Utilization
        averageUtilization: {cpu_target_percent}
",
        pod = plan.pod_name,
    ))
}

/// Renders the full document set, grouped by kind (PVs, PVCs, Services,
/// Deployments, HPAs) and ordered by step id within each group.
pub fn bundle(
    graph: &StepGraph,
    plans: &[PodPlan],
    storage: &StorageConfig,
    hpa: Option<&HpaSettings>,
) -> Result<ManifestBundle, ManifestError> {
    debug_assert_eq!(graph.steps.len(), plans.len(), "one plan per step");
    let mut sorted: Vec<&PodPlan> = plans.iter().collect();
    sorted.sort_by(|a, b| a.pod_name.cmp(&b.pod_name));

    let mut pvs = Vec::new();
    let mut pvcs = Vec::new();
    let mut services = Vec::new();
    let mut deployments = Vec::new();
    let mut hpas = Vec::new();
    for plan in &sorted {
        let storage_docs = render_storage(plan, storage)?;
        pvs.push(ManifestDoc {
            kind: "PersistentVolume".into(),
            name: format!("{}-efs-pv", plan.pod_name),
            yaml_text: storage_docs[0].clone(),
        });
        pvcs.push(ManifestDoc {
            kind: "PersistentVolumeClaim".into(),
            name: format!("{}-efs-pvc", plan.pod_name),
            yaml_text: storage_docs[1].clone(),
        });
        services.push(ManifestDoc {
            kind: "Service".into(),
            name: format!("{}-svc", plan.pod_name),
            yaml_text: render_service(plan)?,
        });
        deployments.push(ManifestDoc {
            kind: "Deployment".into(),
            name: format!("{}-deployment", plan.pod_name),
            yaml_text: render_deployment(plan)?,
        });
        if let Some(settings) = hpa {
            hpas.push(ManifestDoc {
                kind: "HorizontalPodAutoscaler".into(),
                name: format!("{}-hpa", plan.pod_name),
                yaml_text: render_hpa(
                    plan,
                    settings.min_replicas,
                    settings.max_replicas,
                    settings.cpu_target_percent,
                )?,
            });
        }
    }

    let mut documents = Vec::new();
    documents.extend(pvs);
    documents.extend(pvcs);
    documents.extend(services);
    documents.extend(deployments);
    documents.extend(hpas);
    Ok(ManifestBundle { documents })
}

impl ManifestBundle {
    /// All documents joined by `---` separator lines.
    pub fn to_all_yaml(&self) -> String {
        let mut out = String::new();
        for (i, doc) in self.documents.iter().enumerate() {
            if i > 0 {
                out.push_str("---\n");
            }
            out.push_str(&doc.yaml_text);
        }
        out
    }

    /// Splits an `all.yaml` back into kind/name-tagged documents.
    pub fn parse_all_yaml(text: &str) -> Result<Self, String> {
        let mut documents = Vec::new();
        for chunk in split_yaml_documents(text) {
            if chunk.trim().is_empty() {
                continue;
            }
            let value: serde_yaml::Value =
                serde_yaml::from_str(&chunk).map_err(|e| format!("invalid YAML document: {e}"))?;
            let kind = value
                .get("kind")
                .and_then(|v| v.as_str())
                .ok_or("document missing `kind`")?
                .to_owned();
            let name = value
                .get("metadata")
                .and_then(|m| m.get("name"))
                .and_then(|v| v.as_str())
                .ok_or("document missing `metadata.name`")?
                .to_owned();
            documents.push(ManifestDoc {
                kind,
                name,
                yaml_text: chunk,
            });
        }
        Ok(Self { documents })
    }

    /// Writes `NN-<kind>-<name>.yaml` per document plus `all.yaml`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ManifestError> {
        std::fs::create_dir_all(dir)?;
        let width = self.documents.len().to_string().len().max(2);
        for (i, doc) in self.documents.iter().enumerate() {
            let file = format!(
                "{:0width$}-{}-{}.yaml",
                i,
                doc.kind.to_lowercase(),
                doc.name
            );
            std::fs::write(dir.join(file), &doc.yaml_text)?;
        }
        std::fs::write(dir.join("all.yaml"), self.to_all_yaml())?;
        Ok(())
    }
}

fn split_yaml_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim_end() == "---" {
            docs.push(std::mem::take(&mut current));
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    docs.push(current);
    docs
}
