//! Binary checkpoint container.
//!
//! ```text
//! "WBCK" | u32 version | u64 header length | JSON header | little-endian arrays
//! ```
//!
//! The header records the engine version, the model config, both ID maps with their
//! digest, a SHA-256 of the array payload and one descriptor per array.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelError, ModelState, NeighborLists, TrainedModel};
use crate::ingest::{Dataset, IdMap};
use crate::sparse::Csr;

const MAGIC: &[u8; 4] = b"WBCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F64,
    U32,
    U64,
    I64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayDesc {
    name: String,
    dtype: Dtype,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    engine_version: String,
    config: ModelConfig,
    id_maps_digest: String,
    payload_sha256: String,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    arrays: Vec<ArrayDesc>,
}

enum Array<'a> {
    F64(&'a [f64]),
    U32(&'a [u32]),
    U64(Vec<u64>),
    I64(&'a [i64]),
}

fn usizes(v: &[usize]) -> Array<'static> {
    Array::U64(v.iter().map(|&x| x as u64).collect())
}

/// Writes `m` to `path`.
pub fn save_checkpoint(m: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    let train = m.train();
    let x = train.matrix();
    let mut arrays: Vec<(&str, Array)> = vec![
        ("train.indptr", usizes(x.indptr())),
        ("train.indices", Array::U32(x.indices())),
        ("train.values", Array::F64(x.values())),
    ];
    if let Some(ts) = train.timestamps() {
        arrays.push(("train.timestamps", Array::I64(ts)));
    }
    match m.state() {
        ModelState::MostPop { popularity } => arrays.push(("popularity", Array::F64(popularity))),
        ModelState::Random { seed } => arrays.push(("seed", Array::U64(vec![*seed]))),
        ModelState::ItemKnn { neighbors, .. } | ModelState::UserKnn { neighbors } => {
            let (offsets, ids, sims) = neighbors.raw();
            arrays.push(("neighbors.offsets", usizes(offsets)));
            arrays.push(("neighbors.ids", Array::U32(ids)));
            arrays.push(("neighbors.sims", Array::F64(sims)));
        }
        ModelState::Ease { weights } => arrays.push(("weights", Array::F64(weights))),
        ModelState::BprMf {
            user_factors,
            item_factors,
            item_bias,
            ..
        } => {
            arrays.push(("user_factors", Array::F64(user_factors)));
            arrays.push(("item_factors", Array::F64(item_factors)));
            arrays.push(("item_bias", Array::F64(item_bias)));
        }
    }

    let mut payload = Vec::new();
    let mut descs = Vec::new();
    for (name, a) in &arrays {
        let (dtype, len) = match a {
            Array::F64(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                (Dtype::F64, v.len())
            }
            Array::U32(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                (Dtype::U32, v.len())
            }
            Array::U64(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                (Dtype::U64, v.len())
            }
            Array::I64(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                (Dtype::I64, v.len())
            }
        };
        descs.push(ArrayDesc {
            name: (*name).to_owned(),
            dtype,
            len,
        });
    }
    let header = Header {
        engine_version: crate::ENGINE_VERSION.to_owned(),
        config: m.config().clone(),
        id_maps_digest: train.id_maps_digest(),
        payload_sha256: hex::encode(Sha256::digest(&payload)),
        user_ids: train.user_map().raw_ids().to_vec(),
        item_ids: train.item_map().raw_ids().to_vec(),
        arrays: descs,
    };
    let header = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;

    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    header: Header,
    offsets: Vec<usize>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Reader<'_> {
    fn find(&self, name: &str, dtype: Dtype) -> Result<(&[u8], usize), ModelError> {
        let (k, d) = self
            .header
            .arrays
            .iter()
            .enumerate()
            .find(|(_, d)| d.name == name)
            .ok_or_else(|| corrupt(format!("missing array `{name}`")))?;
        if d.dtype != dtype {
            return Err(corrupt(format!("array `{name}` has the wrong type")));
        }
        Ok((&self.bytes[self.offsets[k]..self.offsets[k + 1]], d.len))
    }

    fn has(&self, name: &str) -> bool {
        self.header.arrays.iter().any(|d| d.name == name)
    }

    fn f64s(&self, name: &str) -> Result<Vec<f64>, ModelError> {
        let (b, _) = self.find(name, Dtype::F64)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&self, name: &str) -> Result<Vec<u32>, ModelError> {
        let (b, _) = self.find(name, Dtype::U32)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u64s(&self, name: &str) -> Result<Vec<u64>, ModelError> {
        let (b, _) = self.find(name, Dtype::U64)?;
        Ok(b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn usizes(&self, name: &str) -> Result<Vec<usize>, ModelError> {
        Ok(self.u64s(name)?.into_iter().map(|x| x as usize).collect())
    }

    fn i64s(&self, name: &str) -> Result<Vec<i64>, ModelError> {
        let (b, _) = self.find(name, Dtype::I64)?;
        Ok(b.chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Reads a checkpoint. With `expected_digest`, the stored ID maps must match it.
pub fn load_checkpoint(path: &Path, expected_digest: Option<&str>) -> Result<TrainedModel, ModelError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a warpbench checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported container version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(e.to_string()))?;
    let payload = &body[hlen..];
    if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
        return Err(corrupt("payload digest mismatch"));
    }
    let mut offsets = vec![0usize];
    for d in &header.arrays {
        let width = match d.dtype {
            Dtype::U32 => 4,
            _ => 8,
        };
        offsets.push(offsets.last().unwrap() + d.len * width);
    }
    if *offsets.last().unwrap() != payload.len() {
        return Err(corrupt("payload length does not match the array table"));
    }

    let users = IdMap::from_raw(header.user_ids.clone()).map_err(|e| corrupt(e.to_string()))?;
    let items = IdMap::from_raw(header.item_ids.clone()).map_err(|e| corrupt(e.to_string()))?;
    let found = crate::ingest::dataset::id_maps_digest(&users, &items);
    if found != header.id_maps_digest {
        return Err(corrupt("stored ID maps do not match their digest"));
    }
    if let Some(expected) = expected_digest {
        if expected != found {
            return Err(ModelError::IdMapMismatch {
                expected: expected.to_owned(),
                found,
            });
        }
    }

    let r = Reader {
        bytes: payload,
        header,
        offsets,
    };
    let (n_users, n_items) = (users.len(), items.len());
    let indptr = r.usizes("train.indptr")?;
    let indices = r.u32s("train.indices")?;
    let values = r.f64s("train.values")?;
    if indptr.len() != n_users + 1 || indices.len() != values.len() || indptr.last() != Some(&indices.len()) {
        return Err(corrupt("inconsistent training matrix"));
    }
    let mut triplets = Vec::with_capacity(indices.len());
    for u in 0..n_users {
        if indptr[u] > indptr[u + 1] {
            return Err(corrupt("inconsistent training matrix"));
        }
        for k in indptr[u]..indptr[u + 1] {
            if indices[k] as usize >= n_items || (k > indptr[u] && indices[k - 1] >= indices[k]) {
                return Err(corrupt("inconsistent training matrix"));
            }
            triplets.push((u as u32, indices[k], values[k]));
        }
    }
    let x = Csr::from_sorted_triplets(n_users, n_items, triplets);
    let timestamps = if r.has("train.timestamps") {
        let ts = r.i64s("train.timestamps")?;
        if ts.len() != x.nnz() {
            return Err(corrupt("timestamp count mismatch"));
        }
        Some(ts)
    } else {
        None
    };
    let train = Dataset::from_parts(x, timestamps, Arc::new(users), Arc::new(items));

    let config = r.header.config.clone();
    config.validate()?;
    let sized = |v: Vec<f64>, n: usize, what: &str| {
        if v.len() == n {
            Ok(v)
        } else {
            Err(corrupt(format!("`{what}` has {} values, expected {n}", v.len())))
        }
    };
    let neighbors = |n: usize| -> Result<NeighborLists, ModelError> {
        let offsets = r.usizes("neighbors.offsets")?;
        let ids = r.u32s("neighbors.ids")?;
        if offsets.len() != n + 1 || ids.iter().any(|&i| i as usize >= n) {
            return Err(corrupt("neighbour lists do not fit the catalog"));
        }
        NeighborLists::from_raw(offsets, ids, r.f64s("neighbors.sims")?).map_err(corrupt)
    };
    let state = match &config {
        ModelConfig::MostPop => ModelState::MostPop {
            popularity: sized(r.f64s("popularity")?, n_items, "popularity")?,
        },
        ModelConfig::Random { .. } => ModelState::Random {
            seed: *r.u64s("seed")?.first().ok_or_else(|| corrupt("missing seed"))?,
        },
        ModelConfig::ItemKnn(_) => {
            let neighbors = neighbors(n_items)?;
            let reverse = neighbors.reverse(n_items);
            ModelState::ItemKnn { neighbors, reverse }
        }
        ModelConfig::UserKnn(_) => ModelState::UserKnn {
            neighbors: neighbors(n_users)?,
        },
        ModelConfig::Ease(_) => ModelState::Ease {
            weights: sized(r.f64s("weights")?, n_items * n_items, "weights")?,
        },
        ModelConfig::BprMf(p) => ModelState::BprMf {
            factors: p.factors,
            user_factors: sized(r.f64s("user_factors")?, n_users * p.factors, "user_factors")?,
            item_factors: sized(r.f64s("item_factors")?, n_items * p.factors, "item_factors")?,
            item_bias: sized(r.f64s("item_bias")?, n_items, "item_bias")?,
        },
    };
    Ok(TrainedModel::new(config, state, &train))
}
