//! Read-only inference over saved checkpoints, exposed as a REST API and as a
//! newline-delimited JSON-RPC tool server (MCP over stdio). Both front ends call the
//! same [`Recommender`], so identical queries yield identical rankings.

mod mcp;
mod rest;

pub use mcp::{McpServer, DEFAULT_PROTOCOL_VERSION};
pub use rest::{router, serve_http};

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::models::{load_checkpoint, recommend, recommend_from_items, Family, ModelError, ParamMap, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    Http,
    Stdio,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_k() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_protocol() -> String {
    DEFAULT_PROTOCOL_VERSION.into()
}

/// Serving configuration, usually read from a TOML file.
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// transport = "http"
/// default_k = 10
/// aliases = "titles.tsv"
///
/// [models]
/// ease = "run/checkpoints/ease.wbck"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    /// Model name to checkpoint file.
    pub models: BTreeMap<String, PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default = "default_k")]
    pub default_k: usize,
    #[serde(default = "default_true")]
    pub filter_seen: bool,
    /// Optional TSV of `raw_item_id \t display name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aliases: Option<PathBuf>,
    #[serde(default = "default_protocol")]
    pub protocol_version: String,
}

impl ServeConfig {
    pub fn new(models: BTreeMap<String, PathBuf>) -> Self {
        Self {
            models,
            bind: default_bind(),
            transport: Transport::Http,
            default_k: default_k(),
            filter_seen: true,
            aliases: None,
            protocol_version: default_protocol(),
        }
    }

    /// Parses a TOML file; relative checkpoint and alias paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ServeError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ServeConfig =
            toml::from_str(&text).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.models.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(a) = cfg.aliases.as_mut().filter(|a| a.is_relative()) {
            *a = base.join(&*a);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServeError> {
        if self.models.is_empty() {
            return Err(ServeError::Config("at least one model checkpoint is required".into()));
        }
        if self.default_k < 1 {
            return Err(ServeError::Config("default_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid serve config: {0}")]
    Config(String),
    #[error("cannot load model `{name}`: {source}")]
    Load {
        name: String,
        #[source]
        source: ModelError,
    },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown user `{0}` and no item_sequence given")]
    UnknownUser(String),
    #[error("none of the items in item_sequence are known")]
    NoKnownItems,
    #[error("model `{model}` ({family}) cannot rank a bare item sequence")]
    SequenceUnsupported { model: String, family: Family },
    #[error("{0}")]
    InvalidRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServeError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServeError::Config(_) => "invalid_config",
            ServeError::Load { .. } => "load_failed",
            ServeError::UnknownModel(_) => "unknown_model",
            ServeError::UnknownUser(_) => "unknown_user",
            ServeError::NoKnownItems => "no_known_items",
            ServeError::SequenceUnsupported { .. } => "sequence_unsupported",
            ServeError::InvalidRequest(_) => "invalid_request",
            ServeError::Internal(_) => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    /// May be omitted when exactly one model is loaded.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default, alias = "user")]
    pub user_id: Option<String>,
    #[serde(default)]
    pub item_sequence: Option<Vec<String>>,
    #[serde(default, alias = "top_k")]
    pub k: Option<usize>,
    #[serde(default)]
    pub filter_seen: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub model: String,
    pub items: Vec<RankedItem>,
    pub warnings: Vec<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub family: Family,
    pub params: ParamMap,
    pub n_users: usize,
    pub n_items: usize,
    pub checkpoint: PathBuf,
}

/// Item display names, keyed both ways.
#[derive(Debug, Clone, Default)]
pub struct Aliases {
    title_of: HashMap<String, String>,
    id_of: HashMap<String, String>,
}

impl Aliases {
    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        let mut a = Self::default();
        for (id, title) in pairs {
            a.id_of.entry(title.clone()).or_insert_with(|| id.clone());
            a.title_of.insert(id, title);
        }
        a
    }

    pub fn load(path: &Path) -> Result<Self, ServeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServeError::Config(format!("aliases {}: {e}", path.display())))?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, title) = line.split_once('\t').ok_or_else(|| {
                ServeError::Config(format!("aliases {}:{}: expected `id<TAB>title`", path.display(), n + 1))
            })?;
            pairs.push((id.to_owned(), title.to_owned()));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn title(&self, id: &str) -> Option<&str> {
        self.title_of.get(id).map(String::as_str)
    }

    pub fn id_for_title(&self, title: &str) -> Option<&str> {
        self.id_of.get(title).map(String::as_str)
    }
}

struct Served {
    model: TrainedModel,
    checkpoint: PathBuf,
}

/// The shared, immutable inference core.
pub struct Recommender {
    models: BTreeMap<String, Served>,
    aliases: Aliases,
    default_k: usize,
    filter_seen: bool,
    started: Instant,
}

impl Recommender {
    /// Loads every checkpoint listed in `cfg`.
    pub fn from_config(cfg: &ServeConfig) -> Result<Self, ServeError> {
        cfg.validate()?;
        let mut models = Vec::new();
        for (name, path) in &cfg.models {
            let model = load_checkpoint(path, None).map_err(|source| ServeError::Load {
                name: name.clone(),
                source,
            })?;
            models.push((name.clone(), model, path.clone()));
        }
        let aliases = match &cfg.aliases {
            Some(p) => Aliases::load(p)?,
            None => Aliases::default(),
        };
        let mut r = Self::from_models(models, cfg.default_k, cfg.filter_seen)?;
        r.aliases = aliases;
        Ok(r)
    }

    /// Serves already loaded models; the path is only reported in the inventory.
    pub fn from_models(
        models: Vec<(String, TrainedModel, PathBuf)>,
        default_k: usize,
        filter_seen: bool,
    ) -> Result<Self, ServeError> {
        let mut map = BTreeMap::new();
        for (name, model, checkpoint) in models {
            if map.insert(name.clone(), Served { model, checkpoint }).is_some() {
                return Err(ServeError::Config(format!("duplicate model name `{name}`")));
            }
        }
        if map.is_empty() {
            return Err(ServeError::Config("at least one model is required".into()));
        }
        if default_k < 1 {
            return Err(ServeError::Config("default_k must be at least 1".into()));
        }
        Ok(Self {
            models: map,
            aliases: Aliases::default(),
            default_k,
            filter_seen,
            started: Instant::now(),
        })
    }

    pub fn with_aliases(mut self, aliases: Aliases) -> Self {
        self.aliases = aliases;
        self
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    pub fn inventory(&self) -> Vec<ModelInfo> {
        self.models
            .iter()
            .map(|(name, s)| ModelInfo {
                name: name.clone(),
                family: s.model.family(),
                params: s.model.config().to_params(),
                n_users: s.model.n_users(),
                n_items: s.model.n_items(),
                checkpoint: s.checkpoint.clone(),
            })
            .collect()
    }

    pub fn uptime_s(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn default_k(&self) -> usize {
        self.default_k
    }

    fn resolve_model(&self, name: Option<&str>) -> Result<(&str, &Served), ServeError> {
        match name {
            Some(n) => self
                .models
                .get_key_value(n)
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| ServeError::UnknownModel(n.to_owned())),
            None if self.models.len() == 1 => {
                let (k, v) = self.models.iter().next().expect("one model");
                Ok((k.as_str(), v))
            }
            None => Err(ServeError::InvalidRequest(format!(
                "`model` is required when several models are loaded ({})",
                self.model_names().join(", ")
            ))),
        }
    }

    pub fn recommend(&self, req: &RecommendRequest) -> Result<RecommendResponse, ServeError> {
        let t0 = Instant::now();
        let (name, served) = self.resolve_model(req.model.as_deref())?;
        let m = &served.model;
        let k = req.k.unwrap_or(self.default_k);
        if k < 1 {
            return Err(ServeError::InvalidRequest("k must be at least 1".into()));
        }
        let items_map = m.train().item_map();
        let mut warnings = Vec::new();
        let ranked = match (&req.user_id, &req.item_sequence) {
            (Some(_), Some(_)) => {
                return Err(ServeError::InvalidRequest(
                    "give exactly one of `user_id` and `item_sequence`".into(),
                ))
            }
            (None, None) => {
                return Err(ServeError::InvalidRequest(
                    "one of `user_id` or `item_sequence` is required".into(),
                ))
            }
            (Some(user), None) => {
                let u = m
                    .train()
                    .user_map()
                    .internal(user)
                    .ok_or_else(|| ServeError::UnknownUser(user.clone()))?;
                let filter = req.filter_seen.unwrap_or(self.filter_seen);
                let list = recommend(m, &[u], k, filter).map_err(|e| ServeError::Internal(e.to_string()))?;
                list.lists.into_iter().next().map(|l| l.items).unwrap_or_default()
            }
            (None, Some(seq)) => {
                if !m.family().supports_item_sequences() {
                    return Err(ServeError::SequenceUnsupported {
                        model: name.to_owned(),
                        family: m.family(),
                    });
                }
                // display names are accepted wherever the raw ID is unknown
                let resolved: Vec<String> = seq
                    .iter()
                    .map(|s| match (items_map.internal(s), self.aliases.id_for_title(s)) {
                        (None, Some(id)) => id.to_owned(),
                        _ => s.clone(),
                    })
                    .collect();
                match recommend_from_items(m, &resolved, k) {
                    Ok(r) => {
                        warnings.extend(r.unknown.iter().map(|u| format!("unknown item `{u}` ignored")));
                        r.items
                    }
                    Err(ModelError::NoKnownItems(_)) => return Err(ServeError::NoKnownItems),
                    Err(e) => return Err(ServeError::Internal(e.to_string())),
                }
            }
        };
        let items = ranked
            .iter()
            .map(|s| {
                let id = items_map.raw(s.item).unwrap_or_default().to_owned();
                RankedItem {
                    title: self.aliases.title(&id).map(str::to_owned),
                    item_id: id,
                    score: s.score,
                }
            })
            .collect();
        Ok(RecommendResponse {
            model: name.to_owned(),
            items,
            warnings,
            latency_ms: t0.elapsed().as_secs_f64() * 1e3,
        })
    }
}
