//! Scenario configuration: one JSON document with `inventory`, `namespaces`,
//! `workload`, `policy`, `faults`, `storage`, and `horizon_seconds` sections.
//!
//! Validation returns every finding as a [`Diagnostic`]; resolution turns a
//! clean scenario into the concrete inputs the engine runs (cluster,
//! namespace table, materialized trace, storage objects).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Cluster, InventoryDoc, LocationStatus};
use crate::diagnostics::{DiagCode, Diagnostic};
use crate::scheduler::{PolicyConfig, QueueOrdering};
use crate::storage::StorageObject;
use crate::workload::{
    generate_workload, validate_pod, GeneratorParams, Namespace, NamespaceTable, PodSpec,
    WorkloadTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    Outage,
    Recovery,
}

/// A timed location status change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub time: u64,
    pub location: String,
    pub kind: FaultKind,
}

fn default_replication() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageObjectSpec {
    pub id: String,
    pub region: String,
    #[serde(default)]
    pub replication_factor: Option<u32>,
}

/// Storage section: either an explicit object list or a synthesized count
/// per region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageSection {
    #[serde(default = "default_replication")]
    pub replication_factor: u32,
    #[serde(default)]
    pub objects: Option<Vec<StorageObjectSpec>>,
    #[serde(default)]
    pub objects_per_region: Option<u32>,
}

/// Generator config: params plus the seed making the trace reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSection {
    pub seed: u64,
    #[serde(flatten)]
    pub params: GeneratorParams,
}

/// Workload: exactly one of an inline trace, a trace file path (relative to
/// the scenario file), or generator params.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSection {
    #[serde(default)]
    pub trace: Option<Vec<PodSpec>>,
    #[serde(default)]
    pub trace_file: Option<String>,
    #[serde(default)]
    pub generator: Option<GeneratorSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub inventory: InventoryDoc,
    #[serde(default)]
    pub namespaces: Vec<Namespace>,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub storage: Option<StorageSection>,
    #[serde(default)]
    pub horizon_seconds: u64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {} problem(s), first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Invalid(Vec<Diagnostic>),
    #[error("bad policy override: {0}")]
    BadOverride(String),
}

/// Everything the engine needs, fully materialized.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub name: String,
    pub cluster: Cluster,
    pub namespaces: NamespaceTable,
    pub trace: WorkloadTrace,
    pub policy: PolicyConfig,
    pub faults: Vec<FaultSpec>,
    pub objects: Vec<StorageObject>,
    pub horizon_seconds: u64,
    /// Generator seed in effect, when the workload was generated.
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(json).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let raw = std::fs::read_to_string(path)?;
        let mut scenario = Self::from_json(&raw)?;
        scenario.base_dir = path.parent().map(|p| p.to_path_buf());
        if scenario.name.is_none() {
            scenario.name =
                path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(scenario)
    }

    /// Full structural validation. Empty result means the scenario is clean.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = self.inventory.validate();

        let mut ns_ids = std::collections::BTreeSet::new();
        for ns in &self.namespaces {
            if !ns_ids.insert(ns.id.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::DupId,
                        "namespaces",
                        format!("duplicate namespace id \"{}\"", ns.id),
                    )
                    .with_token(&ns.id),
                );
            }
            if !(ns.share_weight.is_finite() && ns.share_weight > 0.0) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::BadValue,
                        format!("namespaces[{}].share_weight", ns.id),
                        format!("share_weight must be positive, got {}", ns.share_weight),
                    )
                    .with_token(&ns.id),
                );
            }
            for grant in &ns.grants {
                if !self.inventory.gpu_models.iter().any(|m| &m.id == grant) {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::UnknownModel,
                            format!("namespaces[{}].grants", ns.id),
                            format!("grant references unknown gpu model \"{grant}\""),
                        )
                        .with_token(grant),
                    );
                }
            }
        }

        if self.policy.ordering == QueueOrdering::FairShare
            && self.policy.fair_share_halflife_seconds == 0
        {
            diags.push(Diagnostic::new(
                DiagCode::BadPolicy,
                "policy.fair_share_halflife_seconds",
                "fair-share ordering requires a positive halflife",
            ));
        }

        if self.horizon_seconds == 0 {
            diags.push(Diagnostic::new(
                DiagCode::BadValue,
                "horizon_seconds",
                "horizon must be > 0",
            ));
        }

        let provided = [
            self.workload.trace.is_some(),
            self.workload.trace_file.is_some(),
            self.workload.generator.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if provided != 1 {
            diags.push(Diagnostic::new(
                DiagCode::BadWorkload,
                "workload",
                "exactly one of trace, trace_file, or generator is required",
            ));
        }
        if let Some(generator) = &self.workload.generator {
            let params = self.generator_params(generator);
            diags.extend(params.validate());
        }

        if let Some(storage) = &self.storage {
            if storage.objects.is_some() && storage.objects_per_region.is_some() {
                diags.push(Diagnostic::new(
                    DiagCode::BadStorage,
                    "storage",
                    "objects and objects_per_region are mutually exclusive",
                ));
            }
            if storage.replication_factor == 0 {
                diags.push(Diagnostic::new(
                    DiagCode::BadStorage,
                    "storage.replication_factor",
                    "replication factor must be >= 1",
                ));
            }
            let mut object_ids = std::collections::BTreeSet::new();
            for obj in storage.objects.iter().flatten() {
                if !object_ids.insert(obj.id.as_str()) {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::DupId,
                            "storage.objects",
                            format!("duplicate object id \"{}\"", obj.id),
                        )
                        .with_token(&obj.id),
                    );
                }
                if !self.inventory.regions.iter().any(|r| r.id == obj.region) {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::UnknownRegion,
                            format!("storage.objects[{}].region", obj.id),
                            format!("object \"{}\" references unknown region \"{}\"", obj.id, obj.region),
                        )
                        .with_token(&obj.region),
                    );
                }
                if obj.replication_factor == Some(0) {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::BadStorage,
                            format!("storage.objects[{}].replication_factor", obj.id),
                            "replication factor must be >= 1",
                        )
                        .with_token(&obj.id),
                    );
                }
            }
            // Every region that will hold objects needs an up location at start.
            let needs_regions: Vec<&str> = match (&storage.objects, storage.objects_per_region) {
                (Some(objects), _) => objects.iter().map(|o| o.region.as_str()).collect(),
                (None, Some(count)) if count > 0 => {
                    self.inventory.regions.iter().map(|r| r.id.as_str()).collect()
                }
                _ => Vec::new(),
            };
            for region in needs_regions {
                let has_up = self
                    .inventory
                    .locations
                    .iter()
                    .any(|l| l.region == region && l.status == LocationStatus::Up);
                if self.inventory.regions.iter().any(|r| r.id == region) && !has_up {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::BadStorage,
                            "storage",
                            format!("region \"{region}\" holds objects but has no up location"),
                        )
                        .with_token(region),
                    );
                }
            }
        }

        for fault in &self.faults {
            if !self.inventory.locations.iter().any(|l| l.id == fault.location) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::BadFault,
                        "faults",
                        format!("fault references unknown location \"{}\"", fault.location),
                    )
                    .with_token(&fault.location),
                );
            }
        }

        // Trace-level checks need a valid cluster and namespaces; skip them
        // when the sections above already failed.
        if diags.is_empty() {
            let cluster = match Cluster::from_inventory(&self.inventory) {
                Ok(c) => c,
                Err(_) => return diags,
            };
            let namespaces = self.namespace_table();
            match self.materialize_trace(None) {
                Ok(trace) => {
                    diags.extend(trace.validate());
                    for pod in &trace.pods {
                        if let Err(rejection) = validate_pod(pod, &cluster, &namespaces) {
                            diags.push(
                                Diagnostic::new(
                                    rejection.diag_code(),
                                    format!("workload.trace[{}]", pod.id),
                                    format!("pod \"{}\": {rejection}", pod.id),
                                )
                                .with_token(&pod.id),
                            );
                        }
                    }
                }
                Err(ScenarioError::Invalid(inner)) => diags.extend(inner),
                Err(e) => diags.push(Diagnostic::new(
                    DiagCode::BadWorkload,
                    "workload",
                    e.to_string(),
                )),
            }
        }
        diags
    }

    pub fn namespace_table(&self) -> NamespaceTable {
        self.namespaces.iter().map(|ns| (ns.id.clone(), ns.clone())).collect()
    }

    /// Generator params with an empty namespace list defaulted to every
    /// scenario namespace.
    fn generator_params(&self, section: &GeneratorSection) -> GeneratorParams {
        let mut params = section.params.clone();
        if params.namespaces.is_empty() {
            params.namespaces = self.namespaces.iter().map(|ns| ns.id.clone()).collect();
        }
        params
    }

    /// Produce the concrete trace: inline pods, a trace file, or a generator
    /// run with `seed_override` taking precedence over the configured seed.
    fn materialize_trace(&self, seed_override: Option<u64>) -> Result<WorkloadTrace, ScenarioError> {
        if let Some(pods) = &self.workload.trace {
            return Ok(WorkloadTrace { pods: pods.clone(), seed: None });
        }
        if let Some(rel) = &self.workload.trace_file {
            let path = match &self.base_dir {
                Some(base) => base.join(rel),
                None => PathBuf::from(rel),
            };
            let raw = std::fs::read_to_string(&path)?;
            let trace = WorkloadTrace::from_json(&raw).map_err(|e| {
                ScenarioError::Invalid(vec![Diagnostic::new(
                    DiagCode::Parse,
                    "workload.trace_file",
                    e.to_string(),
                )])
            })?;
            return Ok(trace);
        }
        if let Some(generator) = &self.workload.generator {
            let params = self.generator_params(generator);
            let seed = seed_override.unwrap_or(generator.seed);
            let trace = generate_workload(&params, seed)
                .map_err(|e| match e {
                    crate::workload::WorkloadError::InvalidParams(d) => ScenarioError::Invalid(d),
                    other => ScenarioError::Invalid(vec![Diagnostic::new(
                        DiagCode::BadWorkload,
                        "workload.generator",
                        other.to_string(),
                    )]),
                })?;
            return Ok(trace);
        }
        Err(ScenarioError::Invalid(vec![Diagnostic::new(
            DiagCode::BadWorkload,
            "workload",
            "exactly one of trace, trace_file, or generator is required",
        )]))
    }

    fn storage_objects(&self) -> Vec<StorageObject> {
        let Some(storage) = &self.storage else {
            return Vec::new();
        };
        let mut objects = Vec::new();
        if let Some(specs) = &storage.objects {
            for spec in specs {
                objects.push(StorageObject {
                    id: spec.id.clone(),
                    region: spec.region.clone(),
                    replication_factor: spec
                        .replication_factor
                        .unwrap_or(storage.replication_factor),
                });
            }
        } else if let Some(count) = storage.objects_per_region {
            for region in &self.inventory.regions {
                for i in 0..count {
                    objects.push(StorageObject {
                        id: format!("obj-{}-{i:04}", region.id),
                        region: region.id.clone(),
                        replication_factor: storage.replication_factor,
                    });
                }
            }
        }
        objects.sort_by(|a, b| a.id.cmp(&b.id));
        objects
    }

    /// Validate and materialize. Fails with the full diagnostic list if the
    /// scenario is not clean.
    pub fn resolve(
        &self,
        seed_override: Option<u64>,
        overrides: &PolicyOverrides,
    ) -> Result<ResolvedScenario, ScenarioError> {
        let diags = self.validate();
        if !diags.is_empty() {
            return Err(ScenarioError::Invalid(diags));
        }
        let cluster = Cluster::from_inventory(&self.inventory)
            .map_err(|e| ScenarioError::Invalid(vec![Diagnostic::new(DiagCode::BadValue, "inventory", e.to_string())]))?;
        let trace = self.materialize_trace(seed_override)?;
        let policy = overrides.apply(&self.policy);
        if policy.ordering == QueueOrdering::FairShare && policy.fair_share_halflife_seconds == 0 {
            return Err(ScenarioError::BadOverride(
                "fair-share ordering requires a positive halflife".into(),
            ));
        }
        Ok(ResolvedScenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            cluster,
            namespaces: self.namespace_table(),
            seed: trace.seed,
            trace,
            policy,
            faults: self.faults.clone(),
            objects: self.storage_objects(),
            horizon_seconds: self.horizon_seconds,
        })
    }
}

/// Policy fields a CLI override or compare variant may pin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyOverrides {
    pub ordering: Option<QueueOrdering>,
    pub quotas: Option<bool>,
    pub reservations: Option<bool>,
    pub backfill: Option<bool>,
    pub halflife_seconds: Option<u64>,
}

impl PolicyOverrides {
    pub fn apply(&self, base: &PolicyConfig) -> PolicyConfig {
        PolicyConfig {
            ordering: self.ordering.unwrap_or(base.ordering),
            quotas_enabled: self.quotas.unwrap_or(base.quotas_enabled),
            reservations_enabled: self.reservations.unwrap_or(base.reservations_enabled),
            backfill_enabled: self.backfill.unwrap_or(base.backfill_enabled),
            fair_share_halflife_seconds: self
                .halflife_seconds
                .unwrap_or(base.fair_share_halflife_seconds),
        }
    }
}

fn parse_bool(value: &str) -> Result<bool, ScenarioError> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(ScenarioError::BadOverride(format!(
            "expected true/false/on/off, got \"{other}\""
        ))),
    }
}

/// Parse `--policy KEY=VAL` pairs. Keys: ordering, quotas, reservations,
/// backfill, halflife.
pub fn parse_policy_overrides(pairs: &[String]) -> Result<PolicyOverrides, ScenarioError> {
    let mut overrides = PolicyOverrides::default();
    for pair in pairs {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            ScenarioError::BadOverride(format!("expected KEY=VAL, got \"{pair}\""))
        })?;
        match key {
            "ordering" => {
                overrides.ordering = Some(match value {
                    "fifo" => QueueOrdering::Fifo,
                    "fair-share" | "fairshare" => QueueOrdering::FairShare,
                    other => {
                        return Err(ScenarioError::BadOverride(format!(
                            "unknown ordering \"{other}\""
                        )))
                    }
                });
            }
            "quotas" => overrides.quotas = Some(parse_bool(value)?),
            "reservations" => overrides.reservations = Some(parse_bool(value)?),
            "backfill" => overrides.backfill = Some(parse_bool(value)?),
            "halflife" => {
                overrides.halflife_seconds = Some(value.parse().map_err(|_| {
                    ScenarioError::BadOverride(format!("halflife must be seconds, got \"{value}\""))
                })?);
            }
            other => {
                return Err(ScenarioError::BadOverride(format!("unknown policy key \"{other}\"")))
            }
        }
    }
    Ok(overrides)
}

/// Parse a compare variant like `fifo`, `fifo+backfill+reservations`, or
/// `fairshare+backfill`. A variant pins the whole policy: ordering from the
/// first token kind seen, features on only when listed.
pub fn parse_variant(variant: &str) -> Result<PolicyOverrides, ScenarioError> {
    let mut overrides = PolicyOverrides {
        ordering: Some(QueueOrdering::Fifo),
        quotas: Some(false),
        reservations: Some(false),
        backfill: Some(false),
        halflife_seconds: None,
    };
    for token in variant.split('+') {
        match token {
            "fifo" => overrides.ordering = Some(QueueOrdering::Fifo),
            "fairshare" | "fair-share" => overrides.ordering = Some(QueueOrdering::FairShare),
            "quotas" | "quota" => overrides.quotas = Some(true),
            "reservations" | "reservation" => overrides.reservations = Some(true),
            "backfill" => overrides.backfill = Some(true),
            other => {
                return Err(ScenarioError::BadOverride(format!(
                    "unknown variant token \"{other}\" in \"{variant}\""
                )))
            }
        }
    }
    Ok(overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_scenario_json() -> String {
        r#"{
            "name": "tiny",
            "inventory": {
                "regions": [{"id": "west"}],
                "locations": [{"id": "w1", "region": "west"}, {"id": "w2", "region": "west"}],
                "gpu_models": [{"id": "a100", "reserved": true}],
                "nodes": [
                    {"id": "n1", "location": "w1", "cpu_capacity": 8000,
                     "mem_capacity": 8589934592, "gpus": [["a100", 2]],
                     "lifecycle": "os-managed"},
                    {"id": "n2", "location": "w2", "cpu_capacity": 8000,
                     "mem_capacity": 8589934592, "gpus": [["a100", 2]],
                     "lifecycle": "os-managed"}
                ]
            },
            "namespaces": [
                {"id": "lab", "grants": ["a100"]},
                {"id": "edu"}
            ],
            "workload": {
                "generator": {
                    "seed": 1,
                    "pod_count": 20,
                    "arrival_rate_per_sec": 0.01,
                    "duration_min_seconds": 300,
                    "duration_max_seconds": 1800,
                    "opportunistic_fraction": 0.4,
                    "cpu_millicores_range": [100, 2000],
                    "mem_bytes_range": [1048576, 1073741824],
                    "gpu_count_weights": [[0, 0.5], [1, 0.3], [2, 0.2]]
                }
            },
            "storage": {"replication_factor": 2, "objects_per_region": 5},
            "faults": [{"time": 1000, "location": "w1", "kind": "outage"},
                       {"time": 2000, "location": "w1", "kind": "recovery"}],
            "horizon_seconds": 7200
        }"#
        .to_string()
    }

    #[test]
    fn tiny_scenario_validates_clean() {
        let scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        let diags = scenario.validate();
        assert!(diags.is_empty(), "unexpected diagnostics: {diags:?}");
    }

    #[test]
    fn resolve_materializes_generator_trace() {
        let scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        let resolved = scenario.resolve(None, &PolicyOverrides::default()).unwrap();
        assert_eq!(resolved.trace.pods.len(), 20);
        assert_eq!(resolved.seed, Some(1));
        assert_eq!(resolved.objects.len(), 5);
        // Seed override changes the trace.
        let other = scenario.resolve(Some(99), &PolicyOverrides::default()).unwrap();
        assert_eq!(other.seed, Some(99));
        assert_ne!(other.trace.pods, resolved.trace.pods);
    }

    #[test]
    fn workload_needs_exactly_one_source() {
        let mut scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        scenario.workload.trace = Some(vec![]);
        let diags = scenario.validate();
        assert!(diags.iter().any(|d| d.code == DiagCode::BadWorkload));
    }

    #[test]
    fn trace_pod_with_unknown_namespace_is_flagged() {
        let mut scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        scenario.workload.generator = None;
        scenario.workload.trace = Some(vec![PodSpec {
            id: "p1".into(),
            namespace: "ghost".into(),
            cpu_millicores: 100,
            mem_bytes: 100,
            gpu_count: 0,
            acceptable_models: vec![],
            region_affinity: None,
            priority: crate::workload::Priority::Guaranteed,
            duration_seconds: 60,
            arrival_seconds: 0,
        }]);
        let diags = scenario.validate();
        assert!(diags.iter().any(|d| d.code == DiagCode::UnknownNamespace));
    }

    #[test]
    fn fairshare_without_halflife_is_rejected() {
        let mut scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        scenario.policy.ordering = QueueOrdering::FairShare;
        scenario.policy.fair_share_halflife_seconds = 0;
        let diags = scenario.validate();
        assert!(diags.iter().any(|d| d.code == DiagCode::BadPolicy));
    }

    #[test]
    fn storage_objects_and_count_are_exclusive() {
        let mut scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        scenario.storage.as_mut().unwrap().objects = Some(vec![]);
        let diags = scenario.validate();
        assert!(diags.iter().any(|d| d.code == DiagCode::BadStorage));
    }

    #[test]
    fn fault_on_unknown_location_is_flagged() {
        let mut scenario = Scenario::from_json(&tiny_scenario_json()).unwrap();
        scenario.faults.push(FaultSpec { time: 5, location: "nowhere".into(), kind: FaultKind::Outage });
        let diags = scenario.validate();
        assert!(diags.iter().any(|d| d.code == DiagCode::BadFault));
    }

    #[test]
    fn policy_override_parsing() {
        let overrides = parse_policy_overrides(&[
            "ordering=fair-share".to_string(),
            "backfill=on".to_string(),
            "halflife=1800".to_string(),
        ])
        .unwrap();
        assert_eq!(overrides.ordering, Some(QueueOrdering::FairShare));
        assert_eq!(overrides.backfill, Some(true));
        assert_eq!(overrides.halflife_seconds, Some(1800));
        assert!(parse_policy_overrides(&["quantum=up".to_string()]).is_err());
        assert!(parse_policy_overrides(&["backfill".to_string()]).is_err());
    }

    #[test]
    fn variant_parsing_pins_features() {
        let base = PolicyConfig::default();
        let v = parse_variant("fifo+backfill+reservation").unwrap().apply(&base);
        assert!(v.backfill_enabled && v.reservations_enabled && !v.quotas_enabled);
        assert_eq!(v.ordering, QueueOrdering::Fifo);
        let fs = parse_variant("fairshare").unwrap().apply(&base);
        assert_eq!(fs.ordering, QueueOrdering::FairShare);
        assert!(parse_variant("fifo+warp").is_err());
    }
}
