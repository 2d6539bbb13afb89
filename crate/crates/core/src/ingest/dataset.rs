use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IngestError, RawInteraction};
use crate::sparse::Csr;

/// Bijection between raw string identifiers and contiguous internal indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    internal_to_raw: Vec<String>,
    raw_to_internal: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a map from raw IDs listed in internal-index order. Fails on duplicates.
    pub fn from_raw(ids: Vec<String>) -> Result<Self, IngestError> {
        let mut map = Self::new();
        for id in ids {
            if map.raw_to_internal.contains_key(&id) {
                return Err(IngestError::InvalidRecord(format!("duplicate id {id:?} in id map")));
            }
            map.intern(&id);
        }
        Ok(map)
    }

    /// Returns the internal index of `raw`, assigning the next free one if unseen.
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&idx) = self.raw_to_internal.get(raw) {
            return idx;
        }
        let idx = self.internal_to_raw.len() as u32;
        self.internal_to_raw.push(raw.to_owned());
        self.raw_to_internal.insert(raw.to_owned(), idx);
        idx
    }

    pub fn internal(&self, raw: &str) -> Option<u32> {
        self.raw_to_internal.get(raw).copied()
    }

    pub fn raw(&self, internal: u32) -> Option<&str> {
        self.internal_to_raw.get(internal as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.internal_to_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.internal_to_raw.is_empty()
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.internal_to_raw
    }

    fn feed_digest(&self, hasher: &mut Sha256) {
        hasher.update((self.len() as u64).to_le_bytes());
        for id in &self.internal_to_raw {
            hasher.update((id.len() as u64).to_le_bytes());
            hasher.update(id.as_bytes());
        }
    }
}

impl Serialize for IdMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.internal_to_raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<String>::deserialize(d)?;
        IdMap::from_raw(ids).map_err(serde::de::Error::custom)
    }
}

/// One stored interaction, addressed by internal indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Immutable user×item interaction dataset.
///
/// Splits and filters of one dataset share its [`IdMap`]s, so internal indices stay
/// comparable across train, validation and test partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    interactions: Csr,
    timestamps: Option<Vec<i64>>,
    user_map: Arc<IdMap>,
    item_map: Arc<IdMap>,
}

impl Dataset {
    /// Assembles a dataset from a CSR matrix and optional timestamps aligned with its
    /// stored entries.
    pub fn from_parts(
        interactions: Csr,
        timestamps: Option<Vec<i64>>,
        user_map: Arc<IdMap>,
        item_map: Arc<IdMap>,
    ) -> Self {
        assert_eq!(interactions.n_rows(), user_map.len());
        assert_eq!(interactions.n_cols(), item_map.len());
        if let Some(ts) = &timestamps {
            assert_eq!(ts.len(), interactions.nnz());
        }
        Self {
            interactions,
            timestamps,
            user_map,
            item_map,
        }
    }

    /// Builds a dataset over existing ID maps from unsorted interactions.
    /// Later duplicates of the same `(user, item)` overwrite earlier ones.
    pub fn from_interactions(
        user_map: Arc<IdMap>,
        item_map: Arc<IdMap>,
        mut entries: Vec<Interaction>,
        with_timestamps: bool,
    ) -> Self {
        entries.sort_by_key(|e| (e.user, e.item));
        entries.dedup_by(|later, earlier| {
            if (later.user, later.item) == (earlier.user, earlier.item) {
                *earlier = *later;
                true
            } else {
                false
            }
        });
        let timestamps = with_timestamps.then(|| entries.iter().map(|e| e.timestamp.unwrap_or(0)).collect());
        let csr = Csr::from_sorted_triplets(
            user_map.len(),
            item_map.len(),
            entries.iter().map(|e| (e.user, e.item, e.rating)),
        );
        Self::from_parts(csr, timestamps, user_map, item_map)
    }

    pub fn n_users(&self) -> usize {
        self.interactions.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.interactions.n_cols()
    }

    pub fn n_interactions(&self) -> usize {
        self.interactions.nnz()
    }

    pub fn matrix(&self) -> &Csr {
        &self.interactions
    }

    /// Timestamps aligned with the flat entry order of [`Dataset::matrix`].
    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn has_timestamps(&self) -> bool {
        self.timestamps.is_some()
    }

    pub fn user_map(&self) -> &Arc<IdMap> {
        &self.user_map
    }

    pub fn item_map(&self) -> &Arc<IdMap> {
        &self.item_map
    }

    /// Items the user interacted with, ascending.
    pub fn user_items(&self, user: usize) -> &[u32] {
        self.interactions.row_indices(user)
    }

    /// Iterates every stored interaction in (user, item) order.
    pub fn interactions(&self) -> impl Iterator<Item = Interaction> + '_ {
        let ts = self.timestamps.as_deref();
        (0..self.n_users()).flat_map(move |u| {
            self.interactions.row_range(u).map(move |k| Interaction {
                user: u as u32,
                item: self.interactions.indices()[k],
                rating: self.interactions.values()[k],
                timestamp: ts.map(|t| t[k]),
            })
        })
    }

    /// Keeps the entries whose flat position is marked in `mask`; ID maps are shared.
    pub fn select(&self, mask: &[bool]) -> Dataset {
        let interactions = self.interactions.select(mask);
        let timestamps = self.timestamps.as_ref().map(|ts| {
            ts.iter()
                .zip(mask)
                .filter_map(|(&t, &keep)| keep.then_some(t))
                .collect()
        });
        Dataset {
            interactions,
            timestamps,
            user_map: Arc::clone(&self.user_map),
            item_map: Arc::clone(&self.item_map),
        }
    }

    /// Number of interactions per item.
    pub fn item_degrees(&self) -> Vec<usize> {
        self.interactions.col_counts()
    }

    /// Number of interactions per user.
    pub fn user_degrees(&self) -> Vec<usize> {
        (0..self.n_users()).map(|u| self.interactions.row_len(u)).collect()
    }

    /// SHA-256 over both ID maps; checkpoints use it to detect index-space mismatches.
    pub fn id_maps_digest(&self) -> String {
        id_maps_digest(&self.user_map, &self.item_map)
    }
}

pub(crate) fn id_maps_digest(users: &IdMap, items: &IdMap) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"users");
    users.feed_digest(&mut hasher);
    hasher.update(b"items");
    items.feed_digest(&mut hasher);
    hex::encode(hasher.finalize())
}

/// How repeated `(user, item)` pairs are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupPolicy {
    /// Keep the row with the largest timestamp; later rows win ties and untimed rows.
    #[default]
    KeepLastByTimestamp,
    KeepFirst,
    Error,
}

/// Summary statistics of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    /// `1 - n_interactions / (n_users * n_items)`.
    pub sparsity: f64,
}

pub fn compute_stats(d: &Dataset) -> DatasetStats {
    let cells = d.n_users() as f64 * d.n_items() as f64;
    DatasetStats {
        n_users: d.n_users(),
        n_items: d.n_items(),
        n_interactions: d.n_interactions(),
        sparsity: 1.0 - d.n_interactions() as f64 / cells,
    }
}

/// Dataset construction with optional catalogs of known users/items.
///
/// Catalog entries are interned before any interaction, so entities that never occur
/// in the interaction file still get an index (an empty row or column).
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    users: IdMap,
    items: IdMap,
    policy: DedupPolicy,
}

impl DatasetBuilder {
    pub fn new(policy: DedupPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn with_user_catalog<S: AsRef<str>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        for id in ids {
            self.users.intern(id.as_ref());
        }
        self
    }

    pub fn with_item_catalog<S: AsRef<str>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        for id in ids {
            self.items.intern(id.as_ref());
        }
        self
    }

    pub fn build(mut self, records: Vec<RawInteraction>) -> Result<Dataset, IngestError> {
        if records.is_empty() {
            return Err(IngestError::Empty);
        }
        let with_ts = records.iter().any(|r| r.timestamp.is_some());
        // (user, item) -> position in `kept`
        let mut slot: HashMap<(u32, u32), usize> = HashMap::with_capacity(records.len());
        let mut kept: Vec<Interaction> = Vec::with_capacity(records.len());
        for rec in records {
            rec.validate()?;
            let user = self.users.intern(&rec.user_id);
            let item = self.items.intern(&rec.item_id);
            let entry = Interaction {
                user,
                item,
                rating: rec.rating,
                timestamp: rec.timestamp,
            };
            match slot.get(&(user, item)) {
                None => {
                    slot.insert((user, item), kept.len());
                    kept.push(entry);
                }
                Some(&pos) => match self.policy {
                    DedupPolicy::KeepFirst => {}
                    DedupPolicy::KeepLastByTimestamp => {
                        let old = kept[pos].timestamp.unwrap_or(i64::MIN);
                        if entry.timestamp.unwrap_or(i64::MIN) >= old {
                            kept[pos] = entry;
                        }
                    }
                    DedupPolicy::Error => {
                        return Err(IngestError::Duplicate {
                            user: rec.user_id,
                            item: rec.item_id,
                        })
                    }
                },
            }
        }
        Ok(Dataset::from_interactions(
            Arc::new(self.users),
            Arc::new(self.items),
            kept,
            with_ts,
        ))
    }
}

/// Builds a dataset, assigning internal indices in first-appearance order.
pub fn build_dataset(records: Vec<RawInteraction>, policy: DedupPolicy) -> Result<Dataset, IngestError> {
    DatasetBuilder::new(policy).build(records)
}
