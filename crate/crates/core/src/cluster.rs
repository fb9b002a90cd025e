//! Cluster inventory: regions, locations, and nodes, plus the per-node
//! allocation ledger the scheduler debits and credits.
//!
//! A location is the failure domain: when it goes down its nodes stop being
//! schedulable and capacity queries exclude them. Node lifecycle states are
//! carried as metadata only and never influence scheduling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{DiagCode, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationStatus {
    #[default]
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub region: String,
    #[serde(default)]
    pub status: LocationStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpuModel {
    pub id: String,
    /// Reserved models are gated: guaranteed pods need a namespace grant.
    #[serde(default)]
    pub reserved: bool,
}

/// Administrative integration level of a node. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeLifecycle {
    HardwareManaged,
    OsManaged,
    Peered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub location: String,
    /// Integer millicores.
    pub cpu_capacity: u64,
    /// Integer bytes.
    pub mem_capacity: u64,
    /// (GPU model id, count) pairs; counts are >= 1.
    #[serde(default)]
    pub gpus: Vec<(String, u32)>,
    pub lifecycle: NodeLifecycle,
}

impl Node {
    pub fn gpu_capacity_total(&self) -> u64 {
        self.gpus.iter().map(|(_, c)| u64::from(*c)).sum()
    }

    pub fn gpu_capacity_of(&self, model: &str) -> u32 {
        self.gpus
            .iter()
            .find(|(m, _)| m == model)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }
}

/// The inventory document: top-level arrays `regions`, `locations`,
/// `gpu_models`, and `nodes`. This is the schema the `inventory` section of
/// a scenario file uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryDoc {
    pub regions: Vec<Region>,
    pub locations: Vec<Location>,
    #[serde(default)]
    pub gpu_models: Vec<GpuModel>,
    pub nodes: Vec<Node>,
}

impl InventoryDoc {
    /// Structural validation: unique ids, no dangling references, strictly
    /// positive capacities, GPU counts >= 1.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut region_ids = BTreeSet::new();
        for r in &self.regions {
            if !region_ids.insert(r.id.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::DupId,
                        "inventory.regions",
                        format!("duplicate region id \"{}\"", r.id),
                    )
                    .with_token(&r.id),
                );
            }
        }
        if self.regions.is_empty() {
            diags.push(Diagnostic::new(
                DiagCode::BadValue,
                "inventory.regions",
                "at least one region is required",
            ));
        }
        let mut location_ids = BTreeSet::new();
        for l in &self.locations {
            if !location_ids.insert(l.id.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::DupId,
                        "inventory.locations",
                        format!("duplicate location id \"{}\"", l.id),
                    )
                    .with_token(&l.id),
                );
            }
            if !region_ids.contains(l.region.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::UnknownRegion,
                        format!("inventory.locations[{}].region", l.id),
                        format!("location \"{}\" references unknown region \"{}\"", l.id, l.region),
                    )
                    .with_token(&l.region),
                );
            }
        }
        let mut model_ids = BTreeSet::new();
        for m in &self.gpu_models {
            if !model_ids.insert(m.id.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::DupId,
                        "inventory.gpu_models",
                        format!("duplicate gpu model id \"{}\"", m.id),
                    )
                    .with_token(&m.id),
                );
            }
        }
        let mut node_ids = BTreeSet::new();
        for n in &self.nodes {
            let path = format!("inventory.nodes[{}]", n.id);
            if !node_ids.insert(n.id.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::DupId,
                        "inventory.nodes",
                        format!("duplicate node id \"{}\"", n.id),
                    )
                    .with_token(&n.id),
                );
            }
            if !location_ids.contains(n.location.as_str()) {
                diags.push(
                    Diagnostic::new(
                        DiagCode::UnknownLocation,
                        format!("{path}.location"),
                        format!("node \"{}\" references unknown location \"{}\"", n.id, n.location),
                    )
                    .with_token(&n.location),
                );
            }
            if n.cpu_capacity == 0 {
                diags.push(
                    Diagnostic::new(
                        DiagCode::BadCapacity,
                        format!("{path}.cpu_capacity"),
                        format!("node \"{}\" cpu_capacity must be positive", n.id),
                    )
                    .with_token(&n.id),
                );
            }
            if n.mem_capacity == 0 {
                diags.push(
                    Diagnostic::new(
                        DiagCode::BadCapacity,
                        format!("{path}.mem_capacity"),
                        format!("node \"{}\" mem_capacity must be positive", n.id),
                    )
                    .with_token(&n.id),
                );
            }
            let mut seen = BTreeSet::new();
            for (model, count) in &n.gpus {
                if !seen.insert(model.as_str()) {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::DupId,
                            format!("{path}.gpus"),
                            format!("node \"{}\" lists gpu model \"{model}\" twice", n.id),
                        )
                        .with_token(model),
                    );
                }
                if !model_ids.contains(model.as_str()) {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::UnknownModel,
                            format!("{path}.gpus"),
                            format!("node \"{}\" references unknown gpu model \"{model}\"", n.id),
                        )
                        .with_token(model),
                    );
                }
                if *count == 0 {
                    diags.push(
                        Diagnostic::new(
                            DiagCode::BadCapacity,
                            format!("{path}.gpus"),
                            format!("node \"{}\" gpu count for \"{model}\" must be >= 1", n.id),
                        )
                        .with_token(model),
                    );
                }
            }
        }
        diags
    }
}

/// Aggregated capacity over a set of nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceTotals {
    pub cpu_millicores: u64,
    pub mem_bytes: u64,
    /// Per-model GPU counts.
    pub gpus: BTreeMap<String, u64>,
}

impl ResourceTotals {
    pub fn gpu_total(&self) -> u64 {
        self.gpus.values().sum()
    }
}

/// Per-node resources currently in use.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAlloc {
    pub cpu_millicores: u64,
    pub mem_bytes: u64,
    pub gpus: BTreeMap<String, u32>,
}

impl NodeAlloc {
    pub fn gpu_total(&self) -> u64 {
        self.gpus.values().map(|c| u64::from(*c)).sum()
    }
}

/// Free resources on one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFree {
    pub cpu_millicores: u64,
    pub mem_bytes: u64,
    pub gpus: BTreeMap<String, u32>,
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("inventory parse error: {0}")]
    Parse(String),
    #[error("invalid inventory: {} problem(s), first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Invalid(Vec<Diagnostic>),
    #[error("unknown region \"{0}\"")]
    UnknownRegion(String),
    #[error("unknown location \"{0}\"")]
    UnknownLocation(String),
    #[error("unknown node \"{0}\"")]
    UnknownNode(String),
    #[error("allocation would overcommit {resource} on node \"{node}\"")]
    Overcommit { node: String, resource: String },
    #[error("release underflow of {resource} on node \"{node}\"")]
    ReleaseUnderflow { node: String, resource: String },
}

/// Inventory plus the derived allocation ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    regions: BTreeMap<String, Region>,
    locations: BTreeMap<String, Location>,
    gpu_models: BTreeMap<String, GpuModel>,
    nodes: BTreeMap<String, Node>,
    alloc: BTreeMap<String, NodeAlloc>,
}

impl Cluster {
    /// Build a cluster from a parsed inventory document, enforcing every
    /// structural invariant.
    pub fn from_inventory(doc: &InventoryDoc) -> Result<Self, ClusterError> {
        let diags = doc.validate();
        if !diags.is_empty() {
            return Err(ClusterError::Invalid(diags));
        }
        let regions = doc.regions.iter().map(|r| (r.id.clone(), r.clone())).collect();
        let locations = doc.locations.iter().map(|l| (l.id.clone(), l.clone())).collect();
        let gpu_models = doc.gpu_models.iter().map(|m| (m.id.clone(), m.clone())).collect();
        let nodes: BTreeMap<String, Node> =
            doc.nodes.iter().map(|n| (n.id.clone(), n.clone())).collect();
        let alloc = nodes.keys().map(|id| (id.clone(), NodeAlloc::default())).collect();
        Ok(Cluster { regions, locations, gpu_models, nodes, alloc })
    }

    /// Parse an inventory document from JSON text and build the cluster.
    pub fn load_inventory(json: &str) -> Result<Self, ClusterError> {
        let doc: InventoryDoc =
            serde_json::from_str(json).map_err(|e| ClusterError::Parse(e.to_string()))?;
        Self::from_inventory(&doc)
    }

    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.get(id)
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn location(&self, id: &str) -> Option<&Location> {
        self.locations.get(id)
    }

    pub fn locations(&self) -> impl Iterator<Item = &Location> {
        self.locations.values()
    }

    pub fn gpu_model(&self, id: &str) -> Option<&GpuModel> {
        self.gpu_models.get(id)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn alloc_of(&self, node_id: &str) -> Option<&NodeAlloc> {
        self.alloc.get(node_id)
    }

    /// Region a node sits in. Panics on a node id that never validated.
    pub fn node_region(&self, node: &Node) -> &str {
        &self.locations[&node.location].region
    }

    pub fn node_location_up(&self, node: &Node) -> bool {
        self.locations[&node.location].status == LocationStatus::Up
    }

    pub fn model_reserved(&self, model: &str) -> bool {
        self.gpu_models.get(model).map(|m| m.reserved).unwrap_or(false)
    }

    /// Total capacity over nodes at up locations, optionally restricted to a
    /// region. Nodes at down locations are excluded.
    pub fn capacity(&self, region: Option<&str>) -> Result<ResourceTotals, ClusterError> {
        if let Some(r) = region {
            if !self.regions.contains_key(r) {
                return Err(ClusterError::UnknownRegion(r.to_string()));
            }
        }
        let mut totals = ResourceTotals::default();
        for node in self.nodes.values() {
            let loc = &self.locations[&node.location];
            if loc.status != LocationStatus::Up {
                continue;
            }
            if let Some(r) = region {
                if loc.region != r {
                    continue;
                }
            }
            totals.cpu_millicores += node.cpu_capacity;
            totals.mem_bytes += node.mem_capacity;
            for (model, count) in &node.gpus {
                *totals.gpus.entry(model.clone()).or_insert(0) += u64::from(*count);
            }
        }
        Ok(totals)
    }

    /// Total GPU and CPU capacity at up locations, as a cheap pair for
    /// capacity timelines.
    pub fn up_capacity_pair(&self) -> (u64, u64) {
        let mut gpu = 0u64;
        let mut cpu = 0u64;
        for node in self.nodes.values() {
            if self.node_location_up(node) {
                gpu += node.gpu_capacity_total();
                cpu += node.cpu_capacity;
            }
        }
        (gpu, cpu)
    }

    /// Whether any node carries a GPU, regardless of location status. Used to
    /// pick the fair-share usage resource.
    pub fn has_gpus(&self) -> bool {
        self.nodes.values().any(|n| !n.gpus.is_empty())
    }

    pub fn set_location_status(
        &mut self,
        location: &str,
        status: LocationStatus,
    ) -> Result<(), ClusterError> {
        let loc = self
            .locations
            .get_mut(location)
            .ok_or_else(|| ClusterError::UnknownLocation(location.to_string()))?;
        loc.status = status;
        Ok(())
    }

    pub fn location_status(&self, location: &str) -> Result<LocationStatus, ClusterError> {
        self.locations
            .get(location)
            .map(|l| l.status)
            .ok_or_else(|| ClusterError::UnknownLocation(location.to_string()))
    }

    /// Free resources on a node (capacity minus allocation).
    pub fn node_free(&self, node_id: &str) -> Result<NodeFree, ClusterError> {
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| ClusterError::UnknownNode(node_id.to_string()))?;
        let alloc = &self.alloc[node_id];
        let mut gpus = BTreeMap::new();
        for (model, count) in &node.gpus {
            let used = alloc.gpus.get(model).copied().unwrap_or(0);
            gpus.insert(model.clone(), count - used);
        }
        Ok(NodeFree {
            cpu_millicores: node.cpu_capacity - alloc.cpu_millicores,
            mem_bytes: node.mem_capacity - alloc.mem_bytes,
            gpus,
        })
    }

    /// Debit the allocation ledger. Fails rather than overcommit.
    pub fn allocate(
        &mut self,
        node_id: &str,
        cpu: u64,
        mem: u64,
        gpu_count: u32,
        model: Option<&str>,
    ) -> Result<(), ClusterError> {
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| ClusterError::UnknownNode(node_id.to_string()))?;
        let overcommit = |resource: &str| ClusterError::Overcommit {
            node: node_id.to_string(),
            resource: resource.to_string(),
        };
        let alloc = self.alloc.get_mut(node_id).expect("alloc entry exists for every node");
        if alloc.cpu_millicores + cpu > node.cpu_capacity {
            return Err(overcommit("cpu"));
        }
        if alloc.mem_bytes + mem > node.mem_capacity {
            return Err(overcommit("mem"));
        }
        if gpu_count > 0 {
            let model = model.ok_or_else(|| overcommit("gpu"))?;
            let cap = node.gpu_capacity_of(model);
            let used = alloc.gpus.get(model).copied().unwrap_or(0);
            if used + gpu_count > cap {
                return Err(overcommit("gpu"));
            }
            *alloc.gpus.entry(model.to_string()).or_insert(0) += gpu_count;
        }
        alloc.cpu_millicores += cpu;
        alloc.mem_bytes += mem;
        Ok(())
    }

    /// Credit the allocation ledger back.
    pub fn release(
        &mut self,
        node_id: &str,
        cpu: u64,
        mem: u64,
        gpu_count: u32,
        model: Option<&str>,
    ) -> Result<(), ClusterError> {
        let underflow = |resource: &str| ClusterError::ReleaseUnderflow {
            node: node_id.to_string(),
            resource: resource.to_string(),
        };
        let alloc = self
            .alloc
            .get_mut(node_id)
            .ok_or_else(|| ClusterError::UnknownNode(node_id.to_string()))?;
        if alloc.cpu_millicores < cpu {
            return Err(underflow("cpu"));
        }
        if alloc.mem_bytes < mem {
            return Err(underflow("mem"));
        }
        if gpu_count > 0 {
            let model = model.ok_or_else(|| underflow("gpu"))?;
            let used = alloc.gpus.get_mut(model).ok_or_else(|| underflow("gpu"))?;
            if *used < gpu_count {
                return Err(underflow("gpu"));
            }
            *used -= gpu_count;
            if *used == 0 {
                alloc.gpus.remove(model);
            }
        }
        alloc.cpu_millicores -= cpu;
        alloc.mem_bytes -= mem;
        Ok(())
    }
}
