//! spansim — a deterministic discrete-event simulator of a stretched,
//! multi-tenant compute cluster.
//!
//! The model: federated nodes grouped into physical locations and geographic
//! regions host namespace-scoped workloads under pluggable scheduling
//! policies (FIFO or fair-share ordering, quotas, GPU-model reservations,
//! preemptible backfill). Storage objects are replicated across distinct
//! locations within a region and survive any single-location outage. A
//! usage-accounting ledger tracks GPU- and CPU-hours per namespace and
//! answers window queries through a segmented cache that matches direct
//! recomputation exactly.
//!
//! Everything is deterministic: a scenario file plus a seed fully determine
//! every event, metric, and output byte.

pub mod accounting;
pub mod cli;
pub mod cluster;
pub mod diagnostics;
pub mod engine;
pub mod report;
pub mod scenario;
pub mod scheduler;
pub mod storage;
pub mod workload;

pub use cluster::{Cluster, GpuModel, Location, LocationStatus, Node, Region, ResourceTotals};
pub use engine::{run, Event, EventKind, RunOutcome, SimState};
pub use report::MetricsReport;
pub use scenario::{PolicyOverrides, ResolvedScenario, Scenario};
pub use scheduler::{PolicyConfig, QueueOrdering, ScheduleDecision};
pub use storage::{ReplicaSet, StorageObject};
pub use workload::{Namespace, PodSpec, Priority, WorkloadTrace};
