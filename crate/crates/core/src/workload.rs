//! Tenancy and workload traces: namespaces with quotas, weights, and model
//! grants; pod arrival traces; and a seeded synthetic trace generator.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Cluster;
use crate::diagnostics::{DiagCode, Diagnostic};

/// Concurrent-consumption cap for a namespace. GPU counts are totals across
/// models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    #[serde(rename = "cpu")]
    pub cpu_millicores: u64,
    #[serde(rename = "mem")]
    pub mem_bytes: u64,
    pub gpus: u64,
}

fn default_weight() -> f64 {
    1.0
}

/// The tenancy unit: a research group's slice of the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Namespace {
    pub id: String,
    #[serde(default)]
    pub quota: Option<Quota>,
    #[serde(default = "default_weight")]
    pub share_weight: f64,
    /// GPU models this namespace may use as guaranteed when the model is
    /// reserved.
    #[serde(default)]
    pub grants: BTreeSet<String>,
}

pub type NamespaceTable = BTreeMap<String, Namespace>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    /// May trigger preemption, is never itself preempted.
    Guaranteed,
    /// Backfill work: evicted whenever guaranteed work needs the resources.
    Opportunistic,
}

/// A tenant workload request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodSpec {
    pub id: String,
    pub namespace: String,
    /// Millicores.
    #[serde(rename = "cpu", default)]
    pub cpu_millicores: u64,
    /// Bytes.
    #[serde(rename = "mem", default)]
    pub mem_bytes: u64,
    #[serde(default)]
    pub gpu_count: u32,
    /// Ordered preference list; empty means any model is acceptable.
    #[serde(default)]
    pub acceptable_models: Vec<String>,
    #[serde(default)]
    pub region_affinity: Option<String>,
    pub priority: Priority,
    /// Seconds, > 0.
    #[serde(rename = "duration")]
    pub duration_seconds: u64,
    /// Seconds since scenario start.
    #[serde(rename = "arrival", default)]
    pub arrival_seconds: u64,
}

impl PodSpec {
    pub fn accepts_model(&self, model: &str) -> bool {
        self.acceptable_models.is_empty() || self.acceptable_models.iter().any(|m| m == model)
    }
}

/// Why a pod can never be admitted to a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PodRejection {
    #[error("unknown namespace \"{0}\"")]
    UnknownNamespace(String),
    #[error("unknown gpu model \"{0}\"")]
    UnknownModel(String),
    #[error("unknown region \"{0}\"")]
    UnknownRegion(String),
    #[error("pod can never fit on any node of the cluster")]
    NeverFits,
}

impl PodRejection {
    pub fn diag_code(&self) -> DiagCode {
        match self {
            PodRejection::UnknownNamespace(_) => DiagCode::UnknownNamespace,
            PodRejection::UnknownModel(_) => DiagCode::UnknownModel,
            PodRejection::UnknownRegion(_) => DiagCode::UnknownRegion,
            PodRejection::NeverFits => DiagCode::NeverFits,
        }
    }
}

/// Structural admission check: references resolve and the pod could fit on
/// some node of an empty cluster. Location status is ignored here; a down
/// location may recover later.
pub fn validate_pod(
    pod: &PodSpec,
    cluster: &Cluster,
    namespaces: &NamespaceTable,
) -> Result<(), PodRejection> {
    if !namespaces.contains_key(&pod.namespace) {
        return Err(PodRejection::UnknownNamespace(pod.namespace.clone()));
    }
    for model in &pod.acceptable_models {
        if cluster.gpu_model(model).is_none() {
            return Err(PodRejection::UnknownModel(model.clone()));
        }
    }
    if let Some(region) = &pod.region_affinity {
        if cluster.region(region).is_none() {
            return Err(PodRejection::UnknownRegion(region.clone()));
        }
    }
    for node in cluster.nodes() {
        if node.cpu_capacity < pod.cpu_millicores || node.mem_capacity < pod.mem_bytes {
            continue;
        }
        if let Some(region) = &pod.region_affinity {
            if cluster.node_region(node) != region {
                continue;
            }
        }
        if pod.gpu_count > 0
            && !node.gpus.iter().any(|(m, c)| *c >= pod.gpu_count && pod.accepts_model(m))
        {
            continue;
        }
        return Ok(());
    }
    Err(PodRejection::NeverFits)
}

/// An ordered pod trace, optionally remembering the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub pods: Vec<PodSpec>,
    pub seed: Option<u64>,
}

impl WorkloadTrace {
    /// Parse a trace file: a bare JSON array of pod specs.
    pub fn from_json(json: &str) -> Result<Self, WorkloadError> {
        let pods: Vec<PodSpec> =
            serde_json::from_str(json).map_err(|e| WorkloadError::Parse(e.to_string()))?;
        Ok(WorkloadTrace { pods, seed: None })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.pods).expect("pod specs serialize")
    }

    /// Trace invariants: unique pod ids, nondecreasing arrivals, positive
    /// durations.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut seen = BTreeSet::new();
        let mut last_arrival = 0u64;
        for pod in &self.pods {
            if !seen.insert(pod.id.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::DupId,
                        "workload.trace",
                        format!("duplicate pod id \"{}\"", pod.id),
                    )
                    .with_token(&pod.id),
                );
            }
            if pod.arrival_seconds < last_arrival {
                diags.push(
                    Diagnostic::new(
                        DiagCode::BadValue,
                        format!("workload.trace[{}].arrival", pod.id),
                        format!("pod \"{}\" arrives before its predecessor", pod.id),
                    )
                    .with_token(&pod.id),
                );
            }
            last_arrival = pod.arrival_seconds;
            if pod.duration_seconds == 0 {
                diags.push(
                    Diagnostic::new(
                        DiagCode::BadValue,
                        format!("workload.trace[{}].duration", pod.id),
                        format!("pod \"{}\" duration must be > 0", pod.id),
                    )
                    .with_token(&pod.id),
                );
            }
        }
        diags
    }
}

/// A weighted choice of acceptable-model lists for generated pods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSetChoice {
    /// Empty list means "any model".
    #[serde(default)]
    pub models: Vec<String>,
    pub weight: f64,
}

/// A weighted choice of region affinity for generated pods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionChoice {
    /// `None` means no affinity.
    #[serde(default)]
    pub region: Option<String>,
    pub weight: f64,
}

fn default_cpu_range() -> (u64, u64) {
    (100, 2000)
}

fn default_mem_range() -> (u64, u64) {
    (256 << 20, 2 << 30)
}

fn default_gpu_weights() -> Vec<(u32, f64)> {
    vec![(0, 1.0)]
}

/// Synthetic trace parameters. Arrivals are exponential with the configured
/// rate; durations are log-uniform between the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub pod_count: u32,
    /// Mean arrivals per second. Zero yields an empty trace.
    pub arrival_rate_per_sec: f64,
    pub duration_min_seconds: u64,
    pub duration_max_seconds: u64,
    /// Fraction of pods generated as opportunistic, in [0, 1].
    pub opportunistic_fraction: f64,
    /// Namespaces to draw from, uniformly. Filled from the scenario when left
    /// empty in a config file.
    #[serde(default)]
    pub namespaces: Vec<String>,
    #[serde(default = "default_cpu_range")]
    pub cpu_millicores_range: (u64, u64),
    #[serde(default = "default_mem_range")]
    pub mem_bytes_range: (u64, u64),
    /// Weighted GPU-count distribution, e.g. [[0, 0.3], [1, 0.5], [4, 0.2]].
    #[serde(default = "default_gpu_weights")]
    pub gpu_count_weights: Vec<(u32, f64)>,
    #[serde(default)]
    pub acceptable_model_sets: Vec<ModelSetChoice>,
    #[serde(default)]
    pub region_affinities: Vec<RegionChoice>,
}

impl GeneratorParams {
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let bad = |field: &str, msg: String| {
            Diagnostic::new(DiagCode::BadWorkload, format!("workload.generator.{field}"), msg)
        };
        if !self.arrival_rate_per_sec.is_finite() || self.arrival_rate_per_sec < 0.0 {
            diags.push(bad(
                "arrival_rate_per_sec",
                format!("arrival rate must be finite and >= 0, got {}", self.arrival_rate_per_sec),
            ));
        }
        if self.duration_min_seconds == 0 {
            diags.push(bad("duration_min_seconds", "duration lower bound must be > 0".into()));
        }
        if self.duration_min_seconds > self.duration_max_seconds {
            diags.push(bad(
                "duration_max_seconds",
                "duration lower bound exceeds upper bound".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.opportunistic_fraction) {
            diags.push(bad(
                "opportunistic_fraction",
                format!("mix fraction must be in [0, 1], got {}", self.opportunistic_fraction),
            ));
        }
        if self.namespaces.is_empty() {
            diags.push(bad("namespaces", "namespace set must not be empty".into()));
        }
        if self.cpu_millicores_range.0 > self.cpu_millicores_range.1 {
            diags.push(bad("cpu_millicores_range", "cpu range is inverted".into()));
        }
        if self.mem_bytes_range.0 > self.mem_bytes_range.1 {
            diags.push(bad("mem_bytes_range", "mem range is inverted".into()));
        }
        let weight_ok = |ws: &[f64]| ws.iter().all(|w| w.is_finite() && *w >= 0.0)
            && ws.iter().sum::<f64>() > 0.0;
        if self.gpu_count_weights.is_empty()
            || !weight_ok(&self.gpu_count_weights.iter().map(|(_, w)| *w).collect::<Vec<_>>())
        {
            diags.push(bad(
                "gpu_count_weights",
                "gpu count weights must be nonempty, nonnegative, with positive sum".into(),
            ));
        }
        if !self.acceptable_model_sets.is_empty()
            && !weight_ok(
                &self.acceptable_model_sets.iter().map(|c| c.weight).collect::<Vec<_>>(),
            )
        {
            diags.push(bad(
                "acceptable_model_sets",
                "model set weights must be nonnegative with positive sum".into(),
            ));
        }
        if !self.region_affinities.is_empty()
            && !weight_ok(&self.region_affinities.iter().map(|c| c.weight).collect::<Vec<_>>())
        {
            diags.push(bad(
                "region_affinities",
                "region affinity weights must be nonnegative with positive sum".into(),
            ));
        }
        diags
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("trace parse error: {0}")]
    Parse(String),
    #[error("invalid generator params: {} problem(s), first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    InvalidParams(Vec<Diagnostic>),
}

fn weighted_pick<'a, T>(rng: &mut ChaCha8Rng, choices: &'a [(T, f64)]) -> &'a T {
    let total: f64 = choices.iter().map(|(_, w)| *w).sum();
    let mut x: f64 = rng.random::<f64>() * total;
    for (item, w) in choices {
        x -= w;
        if x < 0.0 {
            return item;
        }
    }
    &choices.last().expect("choices validated nonempty").0
}

/// Generate a deterministic synthetic trace. The same `(params, seed)` pair
/// always yields the same trace, byte for byte.
pub fn generate_workload(
    params: &GeneratorParams,
    seed: u64,
) -> Result<WorkloadTrace, WorkloadError> {
    let diags = params.validate();
    if !diags.is_empty() {
        return Err(WorkloadError::InvalidParams(diags));
    }
    let mut pods = Vec::new();
    if params.pod_count == 0 || params.arrival_rate_per_sec == 0.0 {
        return Ok(WorkloadTrace { pods, seed: Some(seed) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model_sets: Vec<(Vec<String>, f64)> = if params.acceptable_model_sets.is_empty() {
        vec![(Vec::new(), 1.0)]
    } else {
        params.acceptable_model_sets.iter().map(|c| (c.models.clone(), c.weight)).collect()
    };
    let regions: Vec<(Option<String>, f64)> = if params.region_affinities.is_empty() {
        vec![(None, 1.0)]
    } else {
        params.region_affinities.iter().map(|c| (c.region.clone(), c.weight)).collect()
    };
    let mut clock = 0.0f64;
    for i in 0..params.pod_count {
        let u: f64 = rng.random();
        clock += -(1.0 - u).ln() / params.arrival_rate_per_sec;
        let arrival = clock.floor() as u64;
        let namespace = params.namespaces[rng.random_range(0..params.namespaces.len())].clone();
        let priority = if rng.random::<f64>() < params.opportunistic_fraction {
            Priority::Opportunistic
        } else {
            Priority::Guaranteed
        };
        let gpu_count = *weighted_pick(&mut rng, &params.gpu_count_weights);
        let acceptable_models = weighted_pick(&mut rng, &model_sets).clone();
        let region_affinity = weighted_pick(&mut rng, &regions).clone();
        let (cpu_lo, cpu_hi) = params.cpu_millicores_range;
        let cpu_millicores = rng.random_range(cpu_lo..=cpu_hi);
        let (mem_lo, mem_hi) = params.mem_bytes_range;
        let mem_bytes = rng.random_range(mem_lo..=mem_hi);
        let (dur_lo, dur_hi) = (params.duration_min_seconds, params.duration_max_seconds);
        let duration_seconds = if dur_lo == dur_hi {
            dur_lo
        } else {
            let ln_lo = (dur_lo as f64).ln();
            let ln_hi = (dur_hi as f64).ln();
            let d = (ln_lo + rng.random::<f64>() * (ln_hi - ln_lo)).exp();
            (d.round() as u64).clamp(dur_lo, dur_hi)
        };
        pods.push(PodSpec {
            id: format!("pod-{i:05}"),
            namespace,
            cpu_millicores,
            mem_bytes,
            gpu_count,
            acceptable_models,
            region_affinity,
            priority,
            duration_seconds,
            arrival_seconds: arrival,
        });
    }
    Ok(WorkloadTrace { pods, seed: Some(seed) })
}
