//! Shared helpers for integration tests: shipped-scenario loading and
//! seeded random instance generators for property suites.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::PathBuf;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spansim::cluster::{Cluster, GpuModel, InventoryDoc, Location, LocationStatus, Node, NodeLifecycle, Region};
use spansim::scenario::{FaultKind, FaultSpec, ResolvedScenario, Scenario};
use spansim::scheduler::{PolicyConfig, QueueOrdering, RunningTable, UsageSnapshot};
use spansim::workload::{GeneratorParams, Namespace, NamespaceTable, PodSpec, Priority, Quota, WorkloadTrace};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario_path(name: &str) -> PathBuf {
    scenario_dir().join(format!("{name}.json"))
}

pub fn load_scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("shipped scenario loads")
}

pub const SHIPPED_SCENARIOS: [&str; 4] =
    ["reference-fifo", "reservation-vs-fifo", "outage-resilience", "fairshare-demo"];

/// A randomly built scheduling instance: small cluster, namespaces, two pod
/// waves, and a policy. Wave 1 seeds running pods; wave 2 is the audited
/// cycle.
pub struct RandomInstance {
    pub cluster: Cluster,
    pub namespaces: NamespaceTable,
    pub wave1: Vec<PodSpec>,
    pub wave2: Vec<PodSpec>,
    pub policy: PolicyConfig,
}

pub const MODEL_IDS: [&str; 3] = ["m-alpha", "m-beta", "m-gamma"];

pub fn random_instance(seed: u64, max_nodes: usize, max_wave_pods: usize) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region_count = rng.random_range(1..=2usize);
    let regions: Vec<Region> =
        (0..region_count).map(|i| Region { id: format!("r{i}") }).collect();
    let location_count = rng.random_range(1..=3usize);
    let locations: Vec<Location> = (0..location_count)
        .map(|i| Location {
            id: format!("loc{i}"),
            region: format!("r{}", rng.random_range(0..region_count)),
            status: if rng.random::<f64>() < 0.15 {
                LocationStatus::Down
            } else {
                LocationStatus::Up
            },
        })
        .collect();
    let gpu_models: Vec<GpuModel> = MODEL_IDS
        .iter()
        .map(|id| GpuModel { id: id.to_string(), reserved: rng.random::<f64>() < 0.4 })
        .collect();
    let node_count = rng.random_range(1..=max_nodes);
    let nodes: Vec<Node> = (0..node_count)
        .map(|i| {
            let mut gpus = Vec::new();
            let model_entries = rng.random_range(0..=2usize);
            let mut available: Vec<&str> = MODEL_IDS.to_vec();
            for _ in 0..model_entries {
                let pick = rng.random_range(0..available.len());
                let model = available.remove(pick);
                gpus.push((model.to_string(), rng.random_range(1..=8u32)));
            }
            Node {
                id: format!("node{i}"),
                location: format!("loc{}", rng.random_range(0..location_count)),
                cpu_capacity: rng.random_range(2000..=16000u64),
                mem_capacity: rng.random_range(4..=64u64) << 30,
                gpus,
                lifecycle: NodeLifecycle::OsManaged,
            }
        })
        .collect();
    let doc = InventoryDoc { regions: regions.clone(), locations, gpu_models, nodes };
    let cluster = Cluster::from_inventory(&doc).expect("random inventory is structurally valid");

    let ns_count = rng.random_range(1..=3usize);
    let namespaces: NamespaceTable = (0..ns_count)
        .map(|i| {
            let id = format!("ns{i}");
            let mut grants = std::collections::BTreeSet::new();
            for model in MODEL_IDS {
                if rng.random::<f64>() < 0.4 {
                    grants.insert(model.to_string());
                }
            }
            let quota = if rng.random::<f64>() < 0.4 {
                Some(Quota {
                    cpu_millicores: rng.random_range(2000..=20000u64),
                    mem_bytes: rng.random_range(8..=128u64) << 30,
                    gpus: rng.random_range(1..=12u64),
                })
            } else {
                None
            };
            (id.clone(), Namespace { id, quota, share_weight: 1.0 + rng.random_range(0..4u32) as f64, grants })
        })
        .collect();

    let mut pod_index = 0;
    let mut make_wave = |rng: &mut ChaCha8Rng, arrival: u64, count: usize| -> Vec<PodSpec> {
        (0..count)
            .map(|_| {
                let gpu_count = if rng.random::<f64>() < 0.35 {
                    0
                } else {
                    rng.random_range(1..=6u32)
                };
                let acceptable_models: Vec<String> = if rng.random::<f64>() < 0.5 {
                    Vec::new()
                } else {
                    MODEL_IDS
                        .iter()
                        .filter(|_| rng.random::<f64>() < 0.5)
                        .map(|s| s.to_string())
                        .collect()
                };
                let region_affinity = if rng.random::<f64>() < 0.3 {
                    Some(format!("r{}", rng.random_range(0..region_count)))
                } else {
                    None
                };
                let pod = PodSpec {
                    id: format!("pod{pod_index:03}"),
                    namespace: format!("ns{}", rng.random_range(0..ns_count)),
                    cpu_millicores: rng.random_range(0..=6000u64),
                    mem_bytes: rng.random_range(0..=16u64) << 30,
                    gpu_count,
                    acceptable_models,
                    region_affinity,
                    priority: if rng.random::<f64>() < 0.5 {
                        Priority::Opportunistic
                    } else {
                        Priority::Guaranteed
                    },
                    duration_seconds: rng.random_range(60..=7200u64),
                    arrival_seconds: arrival,
                };
                pod_index += 1;
                pod
            })
            .collect()
    };
    let wave1_count = rng.random_range(0..=max_wave_pods);
    let wave1 = make_wave(&mut rng, 0, wave1_count);
    let wave2_count = rng.random_range(1..=max_wave_pods);
    let wave2 = make_wave(&mut rng, 100, wave2_count);

    let policy = PolicyConfig {
        ordering: if rng.random::<f64>() < 0.3 {
            QueueOrdering::FairShare
        } else {
            QueueOrdering::Fifo
        },
        quotas_enabled: rng.random::<f64>() < 0.5,
        reservations_enabled: rng.random::<f64>() < 0.5,
        backfill_enabled: true,
        fair_share_halflife_seconds: 3600,
    };
    RandomInstance { cluster, namespaces, wave1, wave2, policy }
}

/// Run one scheduling cycle over a pod wave against mutable state.
pub fn run_wave(
    cluster: &mut Cluster,
    running: &mut RunningTable,
    namespaces: &NamespaceTable,
    pods: &[PodSpec],
    policy: &PolicyConfig,
    now: u64,
) -> (Vec<spansim::ScheduleDecision>, VecDeque<String>) {
    let table: std::collections::BTreeMap<String, PodSpec> =
        pods.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let mut queue: VecDeque<String> = pods.iter().map(|p| p.id.clone()).collect();
    let decisions = spansim::scheduler::schedule_cycle(
        &mut queue,
        &table,
        cluster,
        running,
        namespaces,
        &UsageSnapshot::empty(),
        policy,
        now,
    );
    (decisions, queue)
}

/// A randomly built full scenario for end-to-end conservation runs.
pub fn random_resolved_scenario(seed: u64) -> ResolvedScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let location_count = rng.random_range(2..=3usize);
    let locations: Vec<Location> = (0..location_count)
        .map(|i| Location {
            id: format!("loc{i}"),
            region: "r0".into(),
            status: LocationStatus::Up,
        })
        .collect();
    let mut nodes = vec![Node {
        // Anchor node large enough for any generated pod.
        id: "node0".into(),
        location: "loc0".into(),
        cpu_capacity: 16000,
        mem_capacity: 64 << 30,
        gpus: vec![("m-alpha".into(), 4)],
        lifecycle: NodeLifecycle::OsManaged,
    }];
    let extra_nodes = rng.random_range(1..=3usize);
    for i in 1..=extra_nodes {
        nodes.push(Node {
            id: format!("node{i}"),
            location: format!("loc{}", rng.random_range(0..location_count)),
            cpu_capacity: rng.random_range(4000..=16000u64),
            mem_capacity: 64 << 30,
            gpus: if rng.random::<f64>() < 0.7 {
                vec![("m-alpha".into(), rng.random_range(1..=4u32))]
            } else {
                Vec::new()
            },
            lifecycle: NodeLifecycle::OsManaged,
        });
    }
    let doc = InventoryDoc {
        regions: vec![Region { id: "r0".into() }],
        locations,
        gpu_models: vec![GpuModel { id: "m-alpha".into(), reserved: rng.random::<f64>() < 0.3 }],
        nodes,
    };
    let cluster = Cluster::from_inventory(&doc).unwrap();
    let ns_count = rng.random_range(1..=3usize);
    let namespaces: NamespaceTable = (0..ns_count)
        .map(|i| {
            let id = format!("ns{i}");
            let grants = if rng.random::<f64>() < 0.5 {
                std::iter::once("m-alpha".to_string()).collect()
            } else {
                Default::default()
            };
            (id.clone(), Namespace { id, quota: None, share_weight: 1.0, grants })
        })
        .collect();
    let horizon = rng.random_range(4000..=20000u64);
    let params = GeneratorParams {
        pod_count: rng.random_range(5..=40u32),
        arrival_rate_per_sec: 0.002 + rng.random::<f64>() * 0.02,
        duration_min_seconds: 60,
        duration_max_seconds: rng.random_range(600..=4000u64),
        opportunistic_fraction: rng.random::<f64>(),
        namespaces: namespaces.keys().cloned().collect(),
        cpu_millicores_range: (100, 4000),
        mem_bytes_range: (1 << 20, 8 << 30),
        gpu_count_weights: vec![(0, 0.4), (1, 0.4), (2, 0.1), (4, 0.1)],
        acceptable_model_sets: vec![],
        region_affinities: vec![],
    };
    let trace_seed = rng.random::<u64>();
    let trace: WorkloadTrace =
        spansim::workload::generate_workload(&params, trace_seed).expect("params valid");
    let mut faults = Vec::new();
    if rng.random::<f64>() < 0.7 {
        let loc = format!("loc{}", rng.random_range(0..location_count));
        let t_down = rng.random_range(1..horizon / 2);
        faults.push(FaultSpec { time: t_down, location: loc.clone(), kind: FaultKind::Outage });
        if rng.random::<f64>() < 0.8 {
            faults.push(FaultSpec {
                time: t_down + rng.random_range(1..horizon / 3),
                location: loc,
                kind: FaultKind::Recovery,
            });
        }
    }
    let policy = PolicyConfig {
        ordering: if rng.random::<f64>() < 0.3 {
            QueueOrdering::FairShare
        } else {
            QueueOrdering::Fifo
        },
        quotas_enabled: rng.random::<f64>() < 0.3,
        reservations_enabled: rng.random::<f64>() < 0.5,
        backfill_enabled: rng.random::<f64>() < 0.7,
        fair_share_halflife_seconds: 1800,
    };
    ResolvedScenario {
        name: format!("random-{seed}"),
        cluster,
        namespaces,
        seed: trace.seed,
        trace,
        policy,
        faults,
        objects: Vec::new(),
        horizon_seconds: horizon,
    }
}
