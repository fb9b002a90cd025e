//! Region-scoped replica placement across distinct physical locations.
//!
//! Placement uses rendezvous hashing: every (object, location) pair gets a
//! stable score and the object takes the top-r up locations in its region.
//! That keeps placement deterministic, balanced, and automatically spread
//! across distinct locations. Re-replication is additive only; replicas are
//! never moved back after a recovery.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh64::xxh64;

use crate::cluster::{Cluster, LocationStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageObject {
    pub id: String,
    pub region: String,
    pub replication_factor: u32,
}

/// The locations holding copies of one object. `degraded` means fewer than
/// `replication_factor` copies are on up locations right now.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaSet {
    pub object: String,
    pub locations: Vec<String>,
    pub degraded: bool,
}

/// One replica added by re-replication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementChange {
    pub object: String,
    pub added_location: String,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("region \"{0}\" has no up locations")]
    NoUpLocations(String),
    #[error("object \"{0}\" references unknown region")]
    UnknownRegion(String),
}

fn rendezvous_score(object_id: &str, location_id: &str) -> u64 {
    let mut key = Vec::with_capacity(object_id.len() + location_id.len() + 1);
    key.extend_from_slice(object_id.as_bytes());
    key.push(0);
    key.extend_from_slice(location_id.as_bytes());
    xxh64(&key, 0)
}

/// Up locations of a region ordered by rendezvous score for `object_id`
/// (descending, ties by location id).
fn ranked_up_locations(cluster: &Cluster, region: &str, object_id: &str) -> Vec<String> {
    let mut scored: Vec<(u64, &str)> = cluster
        .locations()
        .filter(|l| l.region == region && l.status == LocationStatus::Up)
        .map(|l| (rendezvous_score(object_id, &l.id), l.id.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().map(|(_, id)| id.to_string()).collect()
}

/// Place an object on the top-r distinct up locations of its region. The
/// placement is a pure function of the object id, the region's up-location
/// set, and r.
pub fn place_replicas(object: &StorageObject, cluster: &Cluster) -> Result<ReplicaSet, StorageError> {
    if cluster.region(&object.region).is_none() {
        return Err(StorageError::UnknownRegion(object.id.clone()));
    }
    let ranked = ranked_up_locations(cluster, &object.region, &object.id);
    if ranked.is_empty() {
        return Err(StorageError::NoUpLocations(object.region.clone()));
    }
    let take = (object.replication_factor as usize).min(ranked.len());
    let locations: Vec<String> = ranked.into_iter().take(take).collect();
    let degraded = (locations.len() as u32) < object.replication_factor;
    Ok(ReplicaSet { object: object.id.clone(), locations, degraded })
}

/// An object is available while at least one replica location is up.
pub fn availability(replicas: &ReplicaSet, cluster: &Cluster) -> bool {
    replicas.locations.iter().any(|l| {
        cluster.location(l).map(|loc| loc.status == LocationStatus::Up).unwrap_or(false)
    })
}

fn live_count(replicas: &ReplicaSet, cluster: &Cluster) -> usize {
    replicas
        .locations
        .iter()
        .filter(|l| {
            cluster.location(l).map(|loc| loc.status == LocationStatus::Up).unwrap_or(false)
        })
        .count()
}

/// Top up every object whose live replica count dropped below r, adding
/// replicas on up locations in rendezvous order and skipping locations that
/// already hold one. Existing replicas are never removed, so a recovered
/// location's copies simply come back.
pub fn re_replicate(
    objects: &[StorageObject],
    placements: &mut BTreeMap<String, ReplicaSet>,
    cluster: &Cluster,
) -> Vec<PlacementChange> {
    let mut changes = Vec::new();
    for object in objects {
        let Some(replicas) = placements.get_mut(&object.id) else {
            continue;
        };
        let mut live = live_count(replicas, cluster);
        let want = object.replication_factor as usize;
        if live < want {
            for candidate in ranked_up_locations(cluster, &object.region, &object.id) {
                if live >= want {
                    break;
                }
                if replicas.locations.contains(&candidate) {
                    continue;
                }
                replicas.locations.push(candidate.clone());
                changes.push(PlacementChange { object: object.id.clone(), added_location: candidate });
                live += 1;
            }
        }
        replicas.degraded = live < want;
    }
    changes
}

/// Recompute the degraded flags after a status change that added no
/// replicas (e.g. a recovery).
pub fn refresh_degraded(
    objects: &[StorageObject],
    placements: &mut BTreeMap<String, ReplicaSet>,
    cluster: &Cluster,
) {
    for object in objects {
        if let Some(replicas) = placements.get_mut(&object.id) {
            replicas.degraded = live_count(replicas, cluster) < object.replication_factor as usize;
        }
    }
}
