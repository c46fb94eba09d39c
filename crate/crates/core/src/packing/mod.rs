//! Offline consolidation of variable-length samples into fixed-capacity
//! packed sequences.
//!
//! Two strategies share one first-fit-decreasing engine:
//!
//! * [`pack_ffd`] sorts every item by length and first-fits it.
//! * [`pack_bucketed`] hash-shards the corpus by sample id, routes each shard
//!   into geometric length buckets, packs each bucket under the per-pack caps,
//!   then re-packs the underfilled residual packs of a shard jointly once.
//!   Shards run in parallel and are merged in shard order, so the plan never
//!   depends on the worker count.
//!
//! Items longer than the capacity go to an overflow list untouched.

mod bucketed;
mod ffd;
mod io;
mod oracle;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bucketed::{bucket_of, pack_bucketed, shard_of};
pub use ffd::pack_ffd;
pub use io::{load_plan, load_plan_with_stats, read_plan, save_plan, write_plan};
pub use oracle::{pack_optimal_oracle, ORACLE_MAX_ITEMS};

/// Context length used throughout the reproduction experiments.
pub const DEFAULT_CAPACITY: u32 = 8192;
pub const DEFAULT_NUM_BUCKETS: u32 = 6;
pub const DEFAULT_MIN_UTILIZATION: f64 = 0.95;
pub const DEFAULT_SHARDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackItem {
    pub id: String,
    pub length: u32,
    pub source: String,
}

impl PackItem {
    pub fn new(id: impl Into<String>, length: u32, source: impl Into<String>) -> Self {
        PackItem {
            id: id.into(),
            length,
            source: source.into(),
        }
    }
}

/// One packed sequence. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pack {
    items: Vec<PackItem>,
    total: u64,
}

impl Pack {
    pub fn new(items: Vec<PackItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Partition("empty pack".into()));
        }
        let total = items.iter().map(|i| u64::from(i.length)).sum();
        Ok(Pack { items, total })
    }

    pub fn items(&self) -> &[PackItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Real tokens in the pack.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn padding(&self, capacity: u32) -> u64 {
        u64::from(capacity).saturating_sub(self.total)
    }

    /// Start of each item within the packed sequence.
    pub fn offsets(&self) -> Vec<u64> {
        self.items
            .iter()
            .scan(0u64, |acc, item| {
                let start = *acc;
                *acc += u64::from(item.length);
                Some(start)
            })
            .collect()
    }

    pub fn distinct_sources(&self) -> usize {
        self.items
            .iter()
            .map(|i| i.source.as_str())
            .collect::<HashSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackPlan {
    capacity: u32,
    packs: Vec<Pack>,
    overflow: Vec<PackItem>,
}

impl PackPlan {
    /// Checks the structural invariants: non-empty packs within capacity and
    /// overflow items strictly longer than the capacity.
    pub fn new(capacity: u32, packs: Vec<Pack>, overflow: Vec<PackItem>) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        for (i, p) in packs.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::Partition(format!("pack {i} is empty")));
            }
            if p.total() > u64::from(capacity) {
                return Err(Error::Partition(format!(
                    "pack {i} holds {} tokens, over capacity {capacity}",
                    p.total()
                )));
            }
        }
        if let Some(item) = overflow.iter().find(|i| i.length <= capacity) {
            return Err(Error::Partition(format!(
                "overflow item {:?} fits the capacity",
                item.id
            )));
        }
        Ok(PackPlan {
            capacity,
            packs,
            overflow,
        })
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn packs(&self) -> &[Pack] {
        &self.packs
    }

    pub fn overflow(&self) -> &[PackItem] {
        &self.overflow
    }

    /// Every item, packed or overflowed.
    pub fn items(&self) -> impl Iterator<Item = &PackItem> {
        self.packs
            .iter()
            .flat_map(|p| p.items.iter())
            .chain(self.overflow.iter())
    }

    pub(crate) fn ensure_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in self.items() {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Partition(format!(
                    "sample id {:?} appears more than once",
                    item.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ffd,
    #[default]
    Bucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingConfig {
    pub capacity: u32,
    pub strategy: Strategy,
    pub num_buckets: u32,
    pub max_samples_per_pack: Option<usize>,
    pub min_utilization: f64,
    pub max_sources_per_pack: Option<usize>,
    pub shards: usize,
    pub seed: u64,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            capacity: DEFAULT_CAPACITY,
            strategy: Strategy::Bucket,
            num_buckets: DEFAULT_NUM_BUCKETS,
            max_samples_per_pack: None,
            min_utilization: DEFAULT_MIN_UTILIZATION,
            max_sources_per_pack: None,
            shards: DEFAULT_SHARDS,
            seed: 0,
        }
    }
}

impl PackingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        if !(self.min_utilization > 0.0 && self.min_utilization <= 1.0) {
            return bad("min_utilization must lie in (0, 1]");
        }
        if self.shards == 0 {
            return bad("shards must be at least 1");
        }
        if self.num_buckets == 0 || self.num_buckets > 32 {
            return bad("num_buckets must lie in 1..=32");
        }
        if self.max_samples_per_pack == Some(0) {
            return bad("max_samples_per_pack must be at least 1");
        }
        if self.max_sources_per_pack == Some(0) {
            return bad("max_sources_per_pack must be at least 1");
        }
        Ok(())
    }
}

/// Run the configured strategy.
pub fn pack(items: &[PackItem], config: &PackingConfig) -> Result<PackPlan> {
    config.validate()?;
    ffd::check_items(items)?;
    match config.strategy {
        Strategy::Ffd => {
            let limits = ffd::Limits {
                max_items: config.max_samples_per_pack,
                max_sources: config.max_sources_per_pack,
            };
            let (packs, overflow) = ffd::ffd_core(items.to_vec(), config.capacity, limits);
            Ok(PackPlan {
                capacity: config.capacity,
                packs,
                overflow,
            })
        }
        Strategy::Bucket => pack_bucketed(items, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingStats {
    pub capacity: u32,
    /// All input samples, overflow included.
    pub num_samples: usize,
    pub num_packed: usize,
    pub num_packs: usize,
    pub overflow_count: usize,
    pub total_tokens: u64,
    pub padding_tokens: u64,
    /// Packed samples per pack; `None` for an empty plan.
    pub compression_ratio: Option<f64>,
    /// All samples (overflow included) per pack.
    pub compression_ratio_with_overflow: Option<f64>,
    pub utilization: Option<f64>,
    pub success_rate: Option<f64>,
    pub min_utilization: f64,
    pub max_samples_in_pack: usize,
    pub empty: bool,
}

pub fn packing_stats(plan: &PackPlan, min_utilization: f64) -> PackingStats {
    let cap = f64::from(plan.capacity);
    let num_packs = plan.packs.len();
    let num_packed: usize = plan.packs.iter().map(Pack::len).sum();
    let overflow_count = plan.overflow.len();
    let total_tokens: u64 = plan.packs.iter().map(Pack::total).sum();
    let padding_tokens: u64 = plan.packs.iter().map(|p| p.padding(plan.capacity)).sum();
    let successes = plan
        .packs
        .iter()
        .filter(|p| p.total() as f64 / cap >= min_utilization)
        .count();
    let per_pack = |x: f64| (num_packs > 0).then(|| x / num_packs as f64);
    PackingStats {
        capacity: plan.capacity,
        num_samples: num_packed + overflow_count,
        num_packed,
        num_packs,
        overflow_count,
        total_tokens,
        padding_tokens,
        compression_ratio: per_pack(num_packed as f64),
        compression_ratio_with_overflow: per_pack((num_packed + overflow_count) as f64),
        utilization: per_pack(total_tokens as f64 / cap),
        success_rate: per_pack(successes as f64),
        min_utilization,
        max_samples_in_pack: plan.packs.iter().map(Pack::len).max().unwrap_or(0),
        empty: num_packs == 0,
    }
}
