//! The policy engine: queue ordering (FIFO or fair-share), feasibility
//! filtering, bin-pack scoring, and preemption of opportunistic pods.
//!
//! Everything here is deterministic: nodes are visited in id order, model
//! preference follows the pod's list (or lexicographic model order when the
//! pod accepts any), victim search enumerates subsets in a fixed order, and
//! every comparison carries a total tie-break.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::workload::{NamespaceTable, PodSpec, Priority};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueueOrdering {
    Fifo,
    FairShare,
}

fn default_halflife() -> u64 {
    3600
}

/// Scheduling policy knobs. The default is the plain FIFO baseline with
/// every feature off, so a scenario with no `policy` block gets baseline
/// behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub ordering: QueueOrdering,
    pub quotas_enabled: bool,
    pub reservations_enabled: bool,
    pub backfill_enabled: bool,
    pub fair_share_halflife_seconds: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            ordering: QueueOrdering::Fifo,
            quotas_enabled: false,
            reservations_enabled: false,
            backfill_enabled: false,
            fair_share_halflife_seconds: default_halflife(),
        }
    }
}

/// Binding of a pod to a node, with the GPU model assigned and any
/// opportunistic pods evicted to make room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub pod: String,
    pub node: String,
    pub assigned_model: Option<String>,
    pub start: u64,
    pub preempted_victims: Vec<String>,
}

/// Bookkeeping for a pod currently bound to a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningPod {
    pub pod: String,
    pub namespace: String,
    pub node: String,
    pub assigned_model: Option<String>,
    pub priority: Priority,
    pub cpu_millicores: u64,
    pub mem_bytes: u64,
    pub gpu_count: u32,
    pub start: u64,
    /// Scheduled completion time.
    pub end: u64,
}

pub type RunningTable = BTreeMap<String, RunningPod>;

/// Decayed per-namespace usage snapshot feeding fair-share ordering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UsageSnapshot {
    pub by_namespace: BTreeMap<String, f64>,
}

impl UsageSnapshot {
    pub fn empty() -> Self {
        Self::default()
    }
}

fn reservation_gate_ok(
    model: &str,
    pod: &PodSpec,
    namespaces: &NamespaceTable,
    cluster: &Cluster,
    policy: &PolicyConfig,
) -> bool {
    if !policy.reservations_enabled || pod.priority == Priority::Opportunistic {
        return true;
    }
    if !cluster.model_reserved(model) {
        return true;
    }
    namespaces.get(&pod.namespace).is_some_and(|ns| ns.grants.contains(model))
}

/// Pick the GPU model to assign from a free-GPU map, honoring the pod's
/// preference order (or lexicographic order when the pod accepts any) and the
/// reservation gate. `Some(None)` means feasible without a GPU.
fn pick_model(
    pod: &PodSpec,
    free_gpus: &BTreeMap<String, u32>,
    namespaces: &NamespaceTable,
    cluster: &Cluster,
    policy: &PolicyConfig,
) -> Option<Option<String>> {
    if pod.gpu_count == 0 {
        return Some(None);
    }
    let preference: Vec<&str> = if pod.acceptable_models.is_empty() {
        free_gpus.keys().map(|s| s.as_str()).collect()
    } else {
        pod.acceptable_models.iter().map(|s| s.as_str()).collect()
    };
    for model in preference {
        if free_gpus.get(model).copied().unwrap_or(0) >= pod.gpu_count
            && reservation_gate_ok(model, pod, namespaces, cluster, policy)
        {
            return Some(Some(model.to_string()));
        }
    }
    None
}

/// Nodes (in id order) where the pod fits right now, each with the GPU model
/// it would be assigned. An empty result is a valid outcome.
pub fn filter_nodes(
    pod: &PodSpec,
    cluster: &Cluster,
    namespaces: &NamespaceTable,
    policy: &PolicyConfig,
) -> Vec<(String, Option<String>)> {
    let mut out = Vec::new();
    for node in cluster.nodes() {
        if !cluster.node_location_up(node) {
            continue;
        }
        if let Some(region) = &pod.region_affinity {
            if cluster.node_region(node) != region {
                continue;
            }
        }
        let free = cluster.node_free(&node.id).expect("inventory node has a free view");
        if free.cpu_millicores < pod.cpu_millicores || free.mem_bytes < pod.mem_bytes {
            continue;
        }
        if let Some(model) = pick_model(pod, &free.gpus, namespaces, cluster, policy) {
            out.push((node.id.clone(), model));
        }
    }
    out
}

/// Order candidates by descending bin-pack score: the weighted sum of
/// post-placement fractional utilization with weights cpu 1, mem 1, gpu 2.
/// Ties break lexicographically by node id.
pub fn score_nodes(
    pod: &PodSpec,
    cluster: &Cluster,
    candidates: &[(String, Option<String>)],
) -> Vec<(String, Option<String>)> {
    let mut scored: Vec<(f64, String, Option<String>)> = candidates
        .iter()
        .map(|(node_id, model)| {
            (bin_pack_score(pod, cluster, node_id), node_id.clone(), model.clone())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, node, model)| (node, model)).collect()
}

fn bin_pack_score(pod: &PodSpec, cluster: &Cluster, node_id: &str) -> f64 {
    let node = cluster.node(node_id).expect("candidate node exists");
    let alloc = cluster.alloc_of(node_id).expect("alloc entry exists");
    let cpu = (alloc.cpu_millicores + pod.cpu_millicores) as f64 / node.cpu_capacity as f64;
    let mem = (alloc.mem_bytes + pod.mem_bytes) as f64 / node.mem_capacity as f64;
    let gpu_cap = node.gpu_capacity_total();
    let gpu = if gpu_cap > 0 {
        (alloc.gpu_total() + u64::from(pod.gpu_count)) as f64 / gpu_cap as f64
    } else {
        0.0
    };
    cpu + mem + 2.0 * gpu
}

/// Sort pending pods ascending by decayed namespace usage over share weight;
/// within a namespace FIFO by arrival, with pod id as the final tie-break.
pub fn fair_share_order(
    queue: &VecDeque<String>,
    pods: &BTreeMap<String, PodSpec>,
    usage: &UsageSnapshot,
    namespaces: &NamespaceTable,
) -> Vec<String> {
    let ratio = |pod: &PodSpec| -> f64 {
        let used = usage.by_namespace.get(&pod.namespace).copied().unwrap_or(0.0);
        let weight = namespaces.get(&pod.namespace).map(|n| n.share_weight).unwrap_or(1.0);
        used / weight
    };
    let mut ids: Vec<String> = queue.iter().cloned().collect();
    ids.sort_by(|a, b| {
        let pa = pods.get(a).expect("queued pod exists");
        let pb = pods.get(b).expect("queued pod exists");
        ratio(pa)
            .total_cmp(&ratio(pb))
            .then_with(|| pa.arrival_seconds.cmp(&pb.arrival_seconds))
            .then_with(|| a.cmp(b))
    });
    ids
}

/// A feasible eviction plan for one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreemptionPlan {
    /// Opportunistic pods to evict, in id order.
    pub victims: Vec<String>,
    pub assigned_model: Option<String>,
    /// GPU-seconds of remaining work the victims would lose.
    pub released_gpu_seconds: u64,
}

fn remaining_gpu_seconds(victim: &RunningPod, now: u64) -> u64 {
    victim.end.saturating_sub(now) * u64::from(victim.gpu_count)
}

fn combination_count(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Above this many subsets per victim count the exact search hands over to a
/// deterministic greedy pass (feasibility stays exact, minimality becomes
/// best-effort).
const EXACT_SEARCH_CAP: u128 = 200_000;

/// Find the cheapest set of opportunistic victims on `node_id` whose release
/// lets `pod` fit: fewest victims first, then fewest released GPU-seconds of
/// remaining work, then lexicographic victim ids. `None` means the pod does
/// not fit even with every opportunistic pod evicted.
pub fn preempt(
    pod: &PodSpec,
    node_id: &str,
    cluster: &Cluster,
    running: &RunningTable,
    namespaces: &NamespaceTable,
    policy: &PolicyConfig,
    now: u64,
) -> Option<PreemptionPlan> {
    let node = cluster.node(node_id)?;
    if !cluster.node_location_up(node) {
        return None;
    }
    if let Some(region) = &pod.region_affinity {
        if cluster.node_region(node) != region {
            return None;
        }
    }
    let free = cluster.node_free(node_id).ok()?;
    let pool: Vec<&RunningPod> = running
        .values()
        .filter(|r| r.node == node_id && r.priority == Priority::Opportunistic)
        .collect();

    let fits = |chosen: &[usize]| -> Option<Option<String>> {
        let mut cpu = free.cpu_millicores;
        let mut mem = free.mem_bytes;
        let mut gpus = free.gpus.clone();
        for &i in chosen {
            let v = pool[i];
            cpu += v.cpu_millicores;
            mem += v.mem_bytes;
            if v.gpu_count > 0 {
                if let Some(model) = &v.assigned_model {
                    *gpus.get_mut(model).expect("victim model present on node") += v.gpu_count;
                }
            }
        }
        if cpu < pod.cpu_millicores || mem < pod.mem_bytes {
            return None;
        }
        pick_model(pod, &gpus, namespaces, cluster, policy)
    };

    if let Some(model) = fits(&[]) {
        return Some(PreemptionPlan {
            victims: Vec::new(),
            assigned_model: model,
            released_gpu_seconds: 0,
        });
    }
    // Only guaranteed pods may evict.
    if pod.priority == Priority::Opportunistic {
        return None;
    }
    let all: Vec<usize> = (0..pool.len()).collect();
    fits(&all)?;

    for count in 1..=pool.len() {
        if combination_count(pool.len(), count) > EXACT_SEARCH_CAP {
            return greedy_preempt(pod, &pool, fits, cluster, namespaces, policy, node_id, now);
        }
        let mut best: Option<(u64, Vec<usize>)> = None;
        let mut idx: Vec<usize> = (0..count).collect();
        loop {
            if fits(&idx).is_some() {
                let released: u64 = idx.iter().map(|&i| remaining_gpu_seconds(pool[i], now)).sum();
                let better = match &best {
                    None => true,
                    Some((r, ids)) => (released, &idx) < (*r, ids),
                };
                if better {
                    best = Some((released, idx.clone()));
                }
            }
            if !next_combination(&mut idx, pool.len()) {
                break;
            }
        }
        if let Some((released, indices)) = best {
            let model = fits(&indices).expect("winning subset fits");
            return Some(PreemptionPlan {
                victims: indices.iter().map(|&i| pool[i].pod.clone()).collect(),
                assigned_model: model,
                released_gpu_seconds: released,
            });
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn greedy_preempt(
    pod: &PodSpec,
    pool: &[&RunningPod],
    fits: impl Fn(&[usize]) -> Option<Option<String>>,
    cluster: &Cluster,
    namespaces: &NamespaceTable,
    policy: &PolicyConfig,
    node_id: &str,
    now: u64,
) -> Option<PreemptionPlan> {
    let node = cluster.node(node_id)?;
    let needed_models: BTreeSet<&str> = node
        .gpus
        .iter()
        .filter(|(m, c)| {
            *c >= pod.gpu_count
                && pod.accepts_model(m)
                && reservation_gate_ok(m, pod, namespaces, cluster, policy)
        })
        .map(|(m, _)| m.as_str())
        .collect();
    let usefulness = |i: usize| -> (u64, u64, u64) {
        let v = pool[i];
        let gpu = match (&v.assigned_model, pod.gpu_count) {
            (Some(m), n) if n > 0 && needed_models.contains(m.as_str()) => u64::from(v.gpu_count),
            _ => 0,
        };
        (gpu, v.cpu_millicores, v.mem_bytes)
    };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    // Stable sort: ties keep pod-id order since the pool is id-sorted.
    order.sort_by_key(|&i| std::cmp::Reverse(usefulness(i)));
    let mut chosen: Vec<usize> = Vec::new();
    let mut model = None;
    for &i in &order {
        chosen.push(i);
        if let Some(m) = fits(&chosen) {
            model = Some(m);
            break;
        }
    }
    let mut model = model?;
    // Prune least-useful victims that turned out unnecessary.
    let mut pos = chosen.len();
    while pos > 0 {
        pos -= 1;
        let mut without = chosen.clone();
        without.remove(pos);
        if let Some(m) = fits(&without) {
            chosen = without;
            model = m;
        }
    }
    chosen.sort_unstable();
    let released: u64 = chosen.iter().map(|&i| remaining_gpu_seconds(pool[i], now)).sum();
    Some(PreemptionPlan {
        victims: chosen.iter().map(|&i| pool[i].pod.clone()).collect(),
        assigned_model: model,
        released_gpu_seconds: released,
    })
}

/// One pass over the pending queue. Placed pods leave the queue and the
/// allocation ledger is updated immediately, so later pods in the same cycle
/// see the new state. Unplaceable pods stay queued in their relative order.
#[allow(clippy::too_many_arguments)]
pub fn schedule_cycle(
    queue: &mut VecDeque<String>,
    pods: &BTreeMap<String, PodSpec>,
    cluster: &mut Cluster,
    running: &mut RunningTable,
    namespaces: &NamespaceTable,
    usage: &UsageSnapshot,
    policy: &PolicyConfig,
    now: u64,
) -> Vec<ScheduleDecision> {
    let order: Vec<String> = match policy.ordering {
        QueueOrdering::Fifo => queue.iter().cloned().collect(),
        QueueOrdering::FairShare => fair_share_order(queue, pods, usage, namespaces),
    };
    let node_ids: Vec<String> = cluster.nodes().map(|n| n.id.clone()).collect();
    // Concurrent guaranteed consumption per namespace, for quota admission.
    let mut ns_usage: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    if policy.quotas_enabled {
        for r in running.values() {
            if r.priority == Priority::Guaranteed {
                let e = ns_usage.entry(r.namespace.clone()).or_default();
                e.0 += r.cpu_millicores;
                e.1 += r.mem_bytes;
                e.2 += u64::from(r.gpu_count);
            }
        }
    }
    let mut placed: BTreeSet<String> = BTreeSet::new();
    let mut decisions = Vec::new();
    for pod_id in &order {
        let pod = pods.get(pod_id).expect("queued pod exists in the pod table");
        if pod.priority == Priority::Opportunistic && !policy.backfill_enabled {
            continue;
        }
        if pod.priority == Priority::Guaranteed && policy.quotas_enabled {
            if let Some(quota) = namespaces.get(&pod.namespace).and_then(|n| n.quota) {
                let used = ns_usage.get(&pod.namespace).copied().unwrap_or_default();
                if used.0 + pod.cpu_millicores > quota.cpu_millicores
                    || used.1 + pod.mem_bytes > quota.mem_bytes
                    || used.2 + u64::from(pod.gpu_count) > quota.gpus
                {
                    continue;
                }
            }
        }
        let candidates = filter_nodes(pod, cluster, namespaces, policy);
        let placement: Option<(String, Option<String>, Vec<String>)> = if !candidates.is_empty() {
            let mut ranked = score_nodes(pod, cluster, &candidates);
            let (node, model) = ranked.swap_remove(0);
            Some((node, model, Vec::new()))
        } else if pod.priority == Priority::Guaranteed && policy.backfill_enabled {
            let mut best: Option<((usize, u64, String), PreemptionPlan)> = None;
            for node_id in &node_ids {
                if let Some(plan) =
                    preempt(pod, node_id, cluster, running, namespaces, policy, now)
                {
                    let key = (plan.victims.len(), plan.released_gpu_seconds, node_id.clone());
                    if best.as_ref().is_none_or(|(k, _)| key < *k) {
                        best = Some((key, plan));
                    }
                }
            }
            best.map(|((_, _, node), plan)| (node, plan.assigned_model, plan.victims))
        } else {
            None
        };
        let Some((node, model, victims)) = placement else {
            continue;
        };
        for victim_id in &victims {
            let victim = running.remove(victim_id).expect("victim is in the running table");
            cluster
                .release(
                    &victim.node,
                    victim.cpu_millicores,
                    victim.mem_bytes,
                    victim.gpu_count,
                    victim.assigned_model.as_deref(),
                )
                .expect("victim release matches its allocation");
        }
        cluster
            .allocate(&node, pod.cpu_millicores, pod.mem_bytes, pod.gpu_count, model.as_deref())
            .expect("filter and preempt guarantee the placement fits");
        running.insert(
            pod_id.clone(),
            RunningPod {
                pod: pod_id.clone(),
                namespace: pod.namespace.clone(),
                node: node.clone(),
                assigned_model: model.clone(),
                priority: pod.priority,
                cpu_millicores: pod.cpu_millicores,
                mem_bytes: pod.mem_bytes,
                gpu_count: pod.gpu_count,
                start: now,
                end: now.saturating_add(pod.duration_seconds),
            },
        );
        if pod.priority == Priority::Guaranteed && policy.quotas_enabled {
            let e = ns_usage.entry(pod.namespace.clone()).or_default();
            e.0 += pod.cpu_millicores;
            e.1 += pod.mem_bytes;
            e.2 += u64::from(pod.gpu_count);
        }
        placed.insert(pod_id.clone());
        decisions.push(ScheduleDecision {
            pod: pod_id.clone(),
            node,
            assigned_model: model,
            start: now,
            preempted_victims: victims,
        });
    }
    queue.retain(|id| !placed.contains(id));
    decisions
}
