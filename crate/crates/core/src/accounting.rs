//! Usage accounting: the ledger of per-namespace resource consumption,
//! window aggregation, cluster utilization against time-varying capacity,
//! decayed usage for fair-share ordering, and a segmented query cache.
//!
//! All arithmetic inside a window is integer unit-seconds (GPU-seconds or
//! millicore-seconds); conversion to hours happens only at the boundary, so
//! segmented queries match direct aggregation exactly, not approximately.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Gpu,
    Cpu,
}

impl Resource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Resource::Gpu => "gpu",
            Resource::Cpu => "cpu",
        }
    }

    /// Unit-seconds to resource-hours. CPU amounts are millicores, so the
    /// hour figure is core-hours.
    pub fn unit_seconds_to_hours(&self, unit_seconds: u64) -> f64 {
        match self {
            Resource::Gpu => unit_seconds as f64 / 3600.0,
            Resource::Cpu => unit_seconds as f64 / 3600.0 / 1000.0,
        }
    }
}

/// One interval of resource consumption attributed to a namespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub namespace: String,
    pub resource: Resource,
    /// GPU count or millicores; always > 0.
    pub amount: u64,
    pub start: u64,
    /// `None` while the consumer is still running.
    pub end: Option<u64>,
}

impl UsageRecord {
    /// Unit-seconds this record contributes to `[t0, t1)`, with open records
    /// clipped at `now`.
    fn contribution(&self, t0: u64, t1: u64, now: u64) -> u64 {
        let end = self.end.unwrap_or(now);
        let lo = self.start.max(t0);
        let hi = end.min(t1);
        if hi > lo {
            self.amount * (hi - lo)
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct OpenRecord {
    namespace: String,
    resource: Resource,
    amount: u64,
    start: u64,
}

/// Append-only usage ledger. Records are opened when a pod starts and closed
/// when it completes, fails, or is preempted; zero-length intervals are
/// dropped on close.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UsageLedger {
    closed: Vec<UsageRecord>,
    open: BTreeMap<(String, Resource), OpenRecord>,
    /// Latest event time seen; segments ending at or before this are final.
    high_water: u64,
}

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("inverted window [{0}, {1})")]
    InvertedWindow(u64, u64),
    #[error("segment width must be > 0")]
    BadGranularity,
    #[error("query clock {now} precedes a cached segment boundary {seen}")]
    ClockRegression { now: u64, seen: u64 },
    #[error("ledger io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache serialization error: {0}")]
    Serde(String),
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Open a usage record for `pod`. Amounts of zero are ignored.
    pub fn open(&mut self, pod: &str, namespace: &str, resource: Resource, amount: u64, start: u64) {
        if amount == 0 {
            return;
        }
        self.high_water = self.high_water.max(start);
        self.open.insert(
            (pod.to_string(), resource),
            OpenRecord { namespace: namespace.to_string(), resource, amount, start },
        );
    }

    /// Close every open record of `pod` at `end`. Records that would be
    /// zero-length are discarded.
    pub fn close_pod(&mut self, pod: &str, end: u64) {
        self.high_water = self.high_water.max(end);
        for resource in [Resource::Gpu, Resource::Cpu] {
            if let Some(open) = self.open.remove(&(pod.to_string(), resource)) {
                if end > open.start {
                    self.closed.push(UsageRecord {
                        namespace: open.namespace,
                        resource: open.resource,
                        amount: open.amount,
                        start: open.start,
                        end: Some(end),
                    });
                }
            }
        }
    }

    pub fn note_time(&mut self, now: u64) {
        self.high_water = self.high_water.max(now);
    }

    pub fn high_water(&self) -> u64 {
        self.high_water
    }

    /// Closed records in close order followed by open records in key order.
    pub fn records(&self) -> impl Iterator<Item = UsageRecord> + '_ {
        self.closed.iter().cloned().chain(self.open.values().map(|o| UsageRecord {
            namespace: o.namespace.clone(),
            resource: o.resource,
            amount: o.amount,
            start: o.start,
            end: None,
        }))
    }

    pub fn is_empty(&self) -> bool {
        self.closed.is_empty() && self.open.is_empty()
    }

    fn sum_window(&self, namespace: Option<&str>, t0: u64, t1: u64, resource: Resource, now: u64) -> u64 {
        let mut total = 0u64;
        for rec in self.closed.iter() {
            if rec.resource == resource && namespace.is_none_or(|ns| rec.namespace == ns) {
                total += rec.contribution(t0, t1, now);
            }
        }
        for open in self.open.values() {
            if open.resource == resource && namespace.is_none_or(|ns| open.namespace == ns) {
                let rec = UsageRecord {
                    namespace: open.namespace.clone(),
                    resource: open.resource,
                    amount: open.amount,
                    start: open.start,
                    end: None,
                };
                total += rec.contribution(t0, t1, now);
            }
        }
        total
    }

    /// Per-namespace unit-second sums over a window, in one ledger pass.
    fn sum_window_by_namespace(&self, t0: u64, t1: u64, resource: Resource, now: u64) -> BTreeMap<String, u64> {
        let mut by_ns: BTreeMap<String, u64> = BTreeMap::new();
        for rec in self.records() {
            if rec.resource == resource {
                let c = rec.contribution(t0, t1, now);
                if c > 0 {
                    *by_ns.entry(rec.namespace.clone()).or_insert(0) += c;
                }
            }
        }
        by_ns
    }
}

/// Sum of `amount x overlap` over the ledger, clipped to `[t0, t1)`, in unit
/// seconds. Open records are clipped at `now`.
pub fn aggregate(
    ledger: &UsageLedger,
    namespace: Option<&str>,
    window: (u64, u64),
    resource: Resource,
    now: u64,
) -> Result<u64, AccountingError> {
    let (t0, t1) = window;
    if t1 <= t0 {
        return Err(AccountingError::InvertedWindow(t0, t1));
    }
    Ok(ledger.sum_window(namespace, t0, t1, resource, now))
}

/// Like [`aggregate`] but converted to resource-hours.
pub fn aggregate_hours(
    ledger: &UsageLedger,
    namespace: Option<&str>,
    window: (u64, u64),
    resource: Resource,
    now: u64,
) -> Result<f64, AccountingError> {
    Ok(resource.unit_seconds_to_hours(aggregate(ledger, namespace, window, resource, now)?))
}

/// A step function of total capacity over time, appended to on every
/// location status change.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityTimeline {
    /// (time, total units from that time on). First point is at time 0.
    points: Vec<(u64, u64)>,
}

impl CapacityTimeline {
    pub fn new(initial: u64) -> Self {
        CapacityTimeline { points: vec![(0, initial)] }
    }

    /// Record a new level from `time` on. Appends must be chronological.
    pub fn push(&mut self, time: u64, level: u64) {
        debug_assert!(self.points.last().is_none_or(|(t, _)| *t <= time));
        if let Some(last) = self.points.last_mut() {
            if last.0 == time {
                last.1 = level;
                return;
            }
        }
        self.points.push((time, level));
    }

    pub fn level_at(&self, time: u64) -> u64 {
        let mut level = 0;
        for (t, l) in &self.points {
            if *t <= time {
                level = *l;
            } else {
                break;
            }
        }
        level
    }

    /// Integral of the step function over `[t0, t1)` in unit-seconds.
    pub fn integral(&self, t0: u64, t1: u64) -> u64 {
        if t1 <= t0 {
            return 0;
        }
        let mut total = 0u64;
        for (i, (start, level)) in self.points.iter().enumerate() {
            let end = self.points.get(i + 1).map(|(t, _)| *t).unwrap_or(u64::MAX);
            let lo = (*start).max(t0);
            let hi = end.min(t1);
            if hi > lo {
                total += level * (hi - lo);
            }
        }
        total
    }
}

/// Allocated unit-seconds divided by capacity unit-seconds over the window;
/// 0 when the capacity integral is 0.
pub fn utilization(
    ledger: &UsageLedger,
    capacity: &CapacityTimeline,
    window: (u64, u64),
    resource: Resource,
    now: u64,
) -> Result<f64, AccountingError> {
    let allocated = aggregate(ledger, None, window, resource, now)?;
    let available = capacity.integral(window.0, window.1);
    if available == 0 {
        return Ok(0.0);
    }
    Ok(allocated as f64 / available as f64)
}

/// Exponentially decayed usage per namespace at `now`, for fair-share
/// ordering. A unit consumed `dt` seconds ago weighs `2^(-dt / halflife)`.
pub fn decayed_usage(
    ledger: &UsageLedger,
    resource: Resource,
    now: u64,
    halflife_seconds: u64,
) -> BTreeMap<String, f64> {
    let h = halflife_seconds.max(1) as f64;
    let ln2 = std::f64::consts::LN_2;
    let mut by_ns: BTreeMap<String, f64> = BTreeMap::new();
    for rec in ledger.records() {
        if rec.resource != resource {
            continue;
        }
        let start = rec.start.min(now);
        let end = rec.end.unwrap_or(now).min(now);
        if end <= start {
            continue;
        }
        // Integral of amount * 2^(-(now - t)/h) dt over [start, end].
        let decayed = rec.amount as f64 * h / ln2
            * ((-((now - end) as f64) * ln2 / h).exp() - (-((now - start) as f64) * ln2 / h).exp());
        *by_ns.entry(rec.namespace.clone()).or_insert(0.0) += decayed;
    }
    by_ns
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
struct SegmentKey {
    resource: Resource,
    width: u64,
    index: u64,
}

/// Cached per-namespace sums for one aligned segment `[k*W, (k+1)*W)`. Only
/// segments that end at or before the query clock are ever stored, so an
/// entry is immutable for the rest of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub start: u64,
    pub end: u64,
    pub by_namespace: BTreeMap<String, u64>,
    pub total: u64,
}

impl SegmentEntry {
    fn lookup(&self, namespace: Option<&str>) -> u64 {
        match namespace {
            None => self.total,
            Some(ns) => self.by_namespace.get(ns).copied().unwrap_or(0),
        }
    }
}

/// Hit/miss statistics for one segmented query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Aligned, closed segments served from cache.
    pub aligned_hits: u64,
    /// Aligned, closed segments computed and stored.
    pub aligned_misses: u64,
    /// Ragged head/tail pieces and still-open segments computed directly.
    pub direct_parts: u64,
}

/// Segmented aggregation cache. Queries split their window into aligned
/// segments plus ragged edges; closed aligned segments are cached, the rest
/// is computed directly. Results are exactly equal to [`aggregate`].
#[derive(Debug, Clone, Default)]
pub struct SegmentCache {
    entries: BTreeMap<SegmentKey, SegmentEntry>,
    last_now: u64,
}

/// On-disk form of the cache; JSON objects cannot key on structs.
#[derive(Serialize, Deserialize)]
struct SegmentCacheFile {
    entries: Vec<(SegmentKey, SegmentEntry)>,
    last_now: u64,
}

impl SegmentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Window aggregation in unit-seconds plus cache statistics.
    pub fn query(
        &mut self,
        ledger: &UsageLedger,
        namespace: Option<&str>,
        window: (u64, u64),
        resource: Resource,
        width: u64,
        now: u64,
    ) -> Result<(u64, QueryStats), AccountingError> {
        let (t0, t1) = window;
        if t1 <= t0 {
            return Err(AccountingError::InvertedWindow(t0, t1));
        }
        if width == 0 {
            return Err(AccountingError::BadGranularity);
        }
        if now < self.last_now {
            return Err(AccountingError::ClockRegression { now, seen: self.last_now });
        }
        self.last_now = now;

        let mut stats = QueryStats::default();
        let mut total = 0u64;
        let first_full = t0.div_ceil(width);
        let past_last_full = t1 / width;
        if first_full >= past_last_full {
            // Window narrower than one aligned segment: all direct.
            total += ledger.sum_window(namespace, t0, t1, resource, now);
            stats.direct_parts += 1;
            return Ok((total, stats));
        }
        let head_end = first_full * width;
        if t0 < head_end {
            total += ledger.sum_window(namespace, t0, head_end, resource, now);
            stats.direct_parts += 1;
        }
        for k in first_full..past_last_full {
            let seg = (k * width, (k + 1) * width);
            if seg.1 <= now {
                let key = SegmentKey { resource, width, index: k };
                if let Some(entry) = self.entries.get(&key) {
                    stats.aligned_hits += 1;
                    total += entry.lookup(namespace);
                } else {
                    let by_namespace = ledger.sum_window_by_namespace(seg.0, seg.1, resource, now);
                    let entry_total = by_namespace.values().sum();
                    let entry = SegmentEntry {
                        start: seg.0,
                        end: seg.1,
                        by_namespace,
                        total: entry_total,
                    };
                    total += entry.lookup(namespace);
                    self.entries.insert(key, entry);
                    stats.aligned_misses += 1;
                }
            } else {
                // Open segment: the clock sits inside it, never cache.
                total += ledger.sum_window(namespace, seg.0, seg.1, resource, now);
                stats.direct_parts += 1;
            }
        }
        let tail_start = past_last_full * width;
        if tail_start < t1 {
            total += ledger.sum_window(namespace, tail_start, t1, resource, now);
            stats.direct_parts += 1;
        }
        Ok((total, stats))
    }

    /// Write-through for warm restarts.
    pub fn save_to_file(&self, path: &Path) -> Result<(), AccountingError> {
        let file = SegmentCacheFile {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            last_now: self.last_now,
        };
        let json =
            serde_json::to_string(&file).map_err(|e| AccountingError::Serde(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_from_file(path: &Path) -> Result<Self, AccountingError> {
        let json = std::fs::read_to_string(path)?;
        let file: SegmentCacheFile =
            serde_json::from_str(&json).map_err(|e| AccountingError::Serde(e.to_string()))?;
        Ok(SegmentCache {
            entries: file.entries.into_iter().collect(),
            last_now: file.last_now,
        })
    }
}
