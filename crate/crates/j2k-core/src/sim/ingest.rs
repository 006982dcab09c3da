//! Extraction of simulator-relevant fields from rendered manifest YAML.
//! The simulator consumes the same documents the translator emits, so the
//! bundle file format is the interface, not the in-memory structures.

use serde_yaml::Value;

use crate::manifests::ManifestDoc;
use crate::sim::SimError;

#[derive(Debug, Clone)]
pub(crate) struct DeploymentIn {
    pub name: String,
    pub replicas: u32,
    pub max_unavailable: u32,
    pub max_surge: u32,
    pub app_label: String,
    pub image: String,
    pub tag: String,
    pub claim_name: String,
    pub step_id: String,
}

#[derive(Debug, Clone)]
pub(crate) struct ServiceIn {
    pub name: String,
    pub selector_app: String,
    pub port: u16,
    pub target_port: u16,
}

#[derive(Debug, Clone)]
pub(crate) struct PvIn {
    pub name: String,
    pub capacity_bytes: u128,
    pub access_modes: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct PvcIn {
    pub name: String,
    pub request_bytes: u128,
    pub access_modes: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct HpaIn {
    pub name: String,
    pub target_deployment: String,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub cpu_target_percent: u32,
}

#[derive(Debug, Clone)]
pub(crate) enum ParsedDoc {
    Deployment(DeploymentIn),
    Service(ServiceIn),
    Pv(PvIn),
    Pvc(PvcIn),
    Hpa(HpaIn),
}

fn malformed(doc: &ManifestDoc, what: &str) -> SimError {
    SimError::MalformedManifest(format!("{} `{}`: {what}", doc.kind, doc.name))
}

fn str_at<'a>(value: &'a Value, path: &[&str]) -> Option<&'a str> {
    let mut v = value;
    for key in path {
        v = v.get(key)?;
    }
    v.as_str()
}

fn u64_at(value: &Value, path: &[&str]) -> Option<u64> {
    let mut v = value;
    for key in path {
        v = v.get(key)?;
    }
    v.as_u64()
}

pub(crate) fn parse_doc(doc: &ManifestDoc) -> Result<ParsedDoc, SimError> {
    let value: Value = serde_yaml::from_str(&doc.yaml_text)
        .map_err(|e| SimError::MalformedManifest(format!("{} `{}`: {e}", doc.kind, doc.name)))?;
    match doc.kind.as_str() {
        "Deployment" => parse_deployment(doc, &value).map(ParsedDoc::Deployment),
        "Service" => parse_service(doc, &value).map(ParsedDoc::Service),
        "PersistentVolume" => parse_pv(doc, &value).map(ParsedDoc::Pv),
        "PersistentVolumeClaim" => parse_pvc(doc, &value).map(ParsedDoc::Pvc),
        "HorizontalPodAutoscaler" => parse_hpa(doc, &value).map(ParsedDoc::Hpa),
        other => Err(SimError::MalformedManifest(format!(
            "unsupported document kind `{other}`"
        ))),
    }
}

fn parse_deployment(doc: &ManifestDoc, v: &Value) -> Result<DeploymentIn, SimError> {
    let name = str_at(v, &["metadata", "name"])
        .ok_or_else(|| malformed(doc, "missing metadata.name"))?
        .to_owned();
    let replicas = u64_at(v, &["spec", "replicas"])
        .ok_or_else(|| malformed(doc, "missing spec.replicas"))? as u32;
    let max_unavailable =
        u64_at(v, &["spec", "strategy", "rollingUpdate", "maxUnavailable"]).unwrap_or(1) as u32;
    let max_surge =
        u64_at(v, &["spec", "strategy", "rollingUpdate", "maxSurge"]).unwrap_or(1) as u32;
    let app_label = str_at(v, &["spec", "selector", "matchLabels", "app"])
        .ok_or_else(|| malformed(doc, "missing selector app label"))?
        .to_owned();

    let containers = v
        .get("spec")
        .and_then(|s| s.get("template"))
        .and_then(|t| t.get("spec"))
        .and_then(|s| s.get("containers"))
        .and_then(Value::as_sequence)
        .ok_or_else(|| malformed(doc, "missing containers"))?;
    let container = containers
        .first()
        .ok_or_else(|| malformed(doc, "empty containers list"))?;
    let image_ref =
        str_at(container, &["image"]).ok_or_else(|| malformed(doc, "missing container image"))?;
    let (image, tag) = image_ref
        .rsplit_once(':')
        .map(|(i, t)| (i.to_owned(), t.to_owned()))
        .unwrap_or_else(|| (image_ref.to_owned(), "latest".to_owned()));

    let mut step_id = None;
    if let Some(env) = container.get("env").and_then(Value::as_sequence) {
        for var in env {
            if str_at(var, &["name"]) == Some("J2K_STEP_ID") {
                step_id = str_at(var, &["value"]).map(str::to_owned);
            }
        }
    }
    let step_id =
        step_id.unwrap_or_else(|| name.strip_suffix("-deployment").unwrap_or(&name).to_owned());

    let volumes = v
        .get("spec")
        .and_then(|s| s.get("template"))
        .and_then(|t| t.get("spec"))
        .and_then(|s| s.get("volumes"))
        .and_then(Value::as_sequence);
    let claim_name = volumes
        .and_then(|vols| {
            vols.iter()
                .find_map(|vol| str_at(vol, &["persistentVolumeClaim", "claimName"]))
        })
        .ok_or_else(|| malformed(doc, "missing persistentVolumeClaim.claimName"))?
        .to_owned();

    Ok(DeploymentIn {
        name,
        replicas,
        max_unavailable,
        max_surge,
        app_label,
        image,
        tag,
        claim_name,
        step_id,
    })
}

fn parse_service(doc: &ManifestDoc, v: &Value) -> Result<ServiceIn, SimError> {
    let name = str_at(v, &["metadata", "name"])
        .ok_or_else(|| malformed(doc, "missing metadata.name"))?
        .to_owned();
    let selector_app = str_at(v, &["spec", "selector", "app"])
        .ok_or_else(|| malformed(doc, "missing spec.selector.app"))?
        .to_owned();
    let ports = v
        .get("spec")
        .and_then(|s| s.get("ports"))
        .and_then(Value::as_sequence)
        .ok_or_else(|| malformed(doc, "missing spec.ports"))?;
    let first = ports.first().ok_or_else(|| malformed(doc, "empty ports"))?;
    let port = u64_at(first, &["port"]).ok_or_else(|| malformed(doc, "missing port"))? as u16;
    let target_port = u64_at(first, &["targetPort"]).unwrap_or(port as u64) as u16;
    Ok(ServiceIn {
        name,
        selector_app,
        port,
        target_port,
    })
}

fn parse_pv(doc: &ManifestDoc, v: &Value) -> Result<PvIn, SimError> {
    let name = str_at(v, &["metadata", "name"])
        .ok_or_else(|| malformed(doc, "missing metadata.name"))?
        .to_owned();
    let capacity = str_at(v, &["spec", "capacity", "storage"])
        .ok_or_else(|| malformed(doc, "missing spec.capacity.storage"))?;
    let capacity_bytes =
        parse_quantity(capacity).ok_or_else(|| malformed(doc, "unparseable capacity quantity"))?;
    let access_modes = access_modes(v).ok_or_else(|| malformed(doc, "missing accessModes"))?;
    Ok(PvIn {
        name,
        capacity_bytes,
        access_modes,
    })
}

fn parse_pvc(doc: &ManifestDoc, v: &Value) -> Result<PvcIn, SimError> {
    let name = str_at(v, &["metadata", "name"])
        .ok_or_else(|| malformed(doc, "missing metadata.name"))?
        .to_owned();
    let request = str_at(v, &["spec", "resources", "requests", "storage"])
        .ok_or_else(|| malformed(doc, "missing resources.requests.storage"))?;
    let request_bytes =
        parse_quantity(request).ok_or_else(|| malformed(doc, "unparseable request quantity"))?;
    let access_modes = access_modes(v).ok_or_else(|| malformed(doc, "missing accessModes"))?;
    Ok(PvcIn {
        name,
        request_bytes,
        access_modes,
    })
}

fn access_modes(v: &Value) -> Option<Vec<String>> {
    let modes = v
        .get("spec")?
        .get("accessModes")?
        .as_sequence()?
        .iter()
        .filter_map(Value::as_str)
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if modes.is_empty() {
        None
    } else {
        Some(modes)
    }
}

fn parse_hpa(doc: &ManifestDoc, v: &Value) -> Result<HpaIn, SimError> {
    let name = str_at(v, &["metadata", "name"])
        .ok_or_else(|| malformed(doc, "missing metadata.name"))?
        .to_owned();
    let target_deployment = str_at(v, &["spec", "scaleTargetRef", "name"])
        .ok_or_else(|| malformed(doc, "missing scaleTargetRef.name"))?
        .to_owned();
    let min_replicas = u64_at(v, &["spec", "minReplicas"])
        .ok_or_else(|| malformed(doc, "missing minReplicas"))? as u32;
    let max_replicas = u64_at(v, &["spec", "maxReplicas"])
        .ok_or_else(|| malformed(doc, "missing maxReplicas"))? as u32;
    let metrics = v
        .get("spec")
        .and_then(|s| s.get("metrics"))
        .and_then(Value::as_sequence)
        .ok_or_else(|| malformed(doc, "missing metrics"))?;
    let cpu_target_percent = metrics
        .first()
        .and_then(|m| u64_at(m, &["resource", "target", "averageUtilization"]))
        .ok_or_else(|| malformed(doc, "missing averageUtilization"))?
        as u32;
    Ok(HpaIn {
        name,
        target_deployment,
        min_replicas,
        max_replicas,
        cpu_target_percent,
    })
}

/// Parses a Kubernetes storage quantity: a non-negative integer with an
/// optional binary (`Ki`..`Pi`) or decimal (`k`..`P`) suffix.
pub(crate) fn parse_quantity(text: &str) -> Option<u128> {
    let text = text.trim();
    let digits_end = text
        .char_indices()
        .take_while(|(_, c)| c.is_ascii_digit())
        .map(|(i, c)| i + c.len_utf8())
        .last()?;
    let number: u128 = text[..digits_end].parse().ok()?;
    let multiplier: u128 = match &text[digits_end..] {
        "" => 1,
        "Ki" => 1 << 10,
        "Mi" => 1 << 20,
        "Gi" => 1 << 30,
        "Ti" => 1 << 40,
        "Pi" => 1 << 50,
        "k" => 1_000,
        "M" => 1_000_000,
        "G" => 1_000_000_000,
        "T" => 1_000_000_000_000,
        "P" => 1_000_000_000_000_000,
        _ => return None,
    };
    number.checked_mul(multiplier)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantity_parsing() {
        assert_eq!(parse_quantity("5Gi"), Some(5 * (1 << 30)));
        assert_eq!(parse_quantity("500Mi"), Some(500 * (1 << 20)));
        assert_eq!(parse_quantity("1"), Some(1));
        assert_eq!(parse_quantity("2k"), Some(2000));
        assert_eq!(parse_quantity("1.5Gi"), None);
        assert_eq!(parse_quantity("Gi"), None);
        assert_eq!(parse_quantity("-1"), None);
        assert_eq!(parse_quantity("5Xx"), None);
    }
}
