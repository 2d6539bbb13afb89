use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    MostPop,
    Random,
    ItemKnn,
    UserKnn,
    Ease,
    BprMf,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::MostPop,
        Family::Random,
        Family::ItemKnn,
        Family::UserKnn,
        Family::Ease,
        Family::BprMf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::MostPop => "mostpop",
            Family::Random => "random",
            Family::ItemKnn => "itemknn",
            Family::UserKnn => "userknn",
            Family::Ease => "ease",
            Family::BprMf => "bprmf",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Whether the family can rank items for a bare item sequence.
    pub fn supports_item_sequences(self) -> bool {
        matches!(self, Family::MostPop | Family::ItemKnn | Family::Ease)
    }

    /// Whether training proceeds in epochs that a scheduler can interrupt.
    pub fn is_iterative(self) -> bool {
        self == Family::BprMf
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// A single hyperparameter value as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(v) => Some(v as f64),
            ParamValue::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            ParamValue::Int(v) if v >= 0 => Some(v as u64),
            ParamValue::Real(v) if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 => Some(v as u64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(v) => write!(f, "{v}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Jaccard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub neighbors: usize,
    pub similarity: Similarity,
    pub shrinkage: f64,
}

pub const DEFAULT_EASE_MAX_ITEMS: usize = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaseParams {
    pub l2: f64,
    pub max_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BprParams {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    /// Falls back to the trial's derived seed when absent.
    pub seed: Option<u64>,
}

/// A fully specified model: family plus validated hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelConfig {
    MostPop,
    Random { seed: Option<u64> },
    ItemKnn(KnnParams),
    UserKnn(KnnParams),
    Ease(EaseParams),
    BprMf(BprParams),
}

struct Params<'a> {
    family: Family,
    map: &'a ParamMap,
}

impl Params<'_> {
    fn err(&self, msg: String) -> ModelError {
        ModelError::InvalidConfig(format!("{}: {msg}", self.family))
    }

    fn real(&self, key: &str, default: Option<f64>) -> Result<f64, ModelError> {
        match self.map.get(key) {
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.err(format!("`{key}` must be a finite number, got {v}"))),
            None => default.ok_or_else(|| self.err(format!("missing `{key}`"))),
        }
    }

    fn count(&self, key: &str, default: Option<u64>) -> Result<u64, ModelError> {
        match self.map.get(key) {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| self.err(format!("`{key}` must be a non-negative integer, got {v}"))),
            None => default.ok_or_else(|| self.err(format!("missing `{key}`"))),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ModelError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.err(format!("unknown hyperparameter `{k}`"))),
            None => Ok(()),
        }
    }
}

impl ModelConfig {
    pub fn family(&self) -> Family {
        match self {
            ModelConfig::MostPop => Family::MostPop,
            ModelConfig::Random { .. } => Family::Random,
            ModelConfig::ItemKnn(_) => Family::ItemKnn,
            ModelConfig::UserKnn(_) => Family::UserKnn,
            ModelConfig::Ease(_) => Family::Ease,
            ModelConfig::BprMf(_) => Family::BprMf,
        }
    }

    /// Builds and range-checks a config from a hyperparameter map.
    pub fn from_params(family: Family, map: &ParamMap) -> Result<Self, ModelError> {
        let p = Params { family, map };
        let cfg = match family {
            Family::MostPop => {
                p.check_keys(&[])?;
                ModelConfig::MostPop
            }
            Family::Random => {
                p.check_keys(&["seed"])?;
                ModelConfig::Random {
                    seed: map.contains_key("seed").then(|| p.count("seed", None)).transpose()?,
                }
            }
            Family::ItemKnn | Family::UserKnn => {
                p.check_keys(&["neighbors", "similarity", "shrinkage"])?;
                let similarity = match map.get("similarity") {
                    None => Similarity::Cosine,
                    Some(v) => match v.as_str() {
                        Some("cosine") => Similarity::Cosine,
                        Some("jaccard") => Similarity::Jaccard,
                        _ => return Err(p.err(format!("unknown similarity {v}"))),
                    },
                };
                let params = KnnParams {
                    neighbors: p.count("neighbors", None)? as usize,
                    similarity,
                    shrinkage: p.real("shrinkage", Some(0.0))?,
                };
                if family == Family::ItemKnn {
                    ModelConfig::ItemKnn(params)
                } else {
                    ModelConfig::UserKnn(params)
                }
            }
            Family::Ease => {
                p.check_keys(&["l2", "max_items"])?;
                ModelConfig::Ease(EaseParams {
                    l2: p.real("l2", None)?,
                    max_items: p.count("max_items", Some(DEFAULT_EASE_MAX_ITEMS as u64))? as usize,
                })
            }
            Family::BprMf => {
                p.check_keys(&["factors", "learning_rate", "regularization", "epochs", "seed"])?;
                ModelConfig::BprMf(BprParams {
                    factors: p.count("factors", None)? as usize,
                    learning_rate: p.real("learning_rate", None)?,
                    regularization: p.real("regularization", Some(0.0))?,
                    epochs: p.count("epochs", None)? as usize,
                    seed: map.contains_key("seed").then(|| p.count("seed", None)).transpose()?,
                })
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(format!("{}: {m}", self.family())));
        match self {
            ModelConfig::ItemKnn(k) | ModelConfig::UserKnn(k) => {
                if k.neighbors < 1 {
                    return bad("neighbors must be >= 1");
                }
                if !(k.shrinkage >= 0.0 && k.shrinkage.is_finite()) {
                    return bad("shrinkage must be finite and >= 0");
                }
            }
            ModelConfig::Ease(e) => {
                if !(e.l2 > 0.0 && e.l2.is_finite()) {
                    return bad("l2 must be finite and > 0");
                }
            }
            ModelConfig::BprMf(b) => {
                if b.factors < 1 || b.epochs < 1 {
                    return bad("factors and epochs must be >= 1");
                }
                if !(b.learning_rate > 0.0 && b.learning_rate.is_finite()) {
                    return bad("learning_rate must be finite and > 0");
                }
                if !(b.regularization >= 0.0 && b.regularization.is_finite()) {
                    return bad("regularization must be finite and >= 0");
                }
            }
            ModelConfig::MostPop | ModelConfig::Random { .. } => {}
        }
        Ok(())
    }

    /// The hyperparameters as a flat map (inverse of [`ModelConfig::from_params`]).
    pub fn to_params(&self) -> ParamMap {
        let mut m = ParamMap::new();
        let mut put = |k: &str, v: ParamValue| {
            m.insert(k.to_owned(), v);
        };
        match self {
            ModelConfig::MostPop => {}
            ModelConfig::Random { seed } => {
                if let Some(s) = seed {
                    put("seed", ParamValue::Int(*s as i64));
                }
            }
            ModelConfig::ItemKnn(k) | ModelConfig::UserKnn(k) => {
                put("neighbors", ParamValue::Int(k.neighbors as i64));
                let sim = match k.similarity {
                    Similarity::Cosine => "cosine",
                    Similarity::Jaccard => "jaccard",
                };
                put("similarity", ParamValue::Text(sim.into()));
                put("shrinkage", ParamValue::Real(k.shrinkage));
            }
            ModelConfig::Ease(e) => {
                put("l2", ParamValue::Real(e.l2));
                put("max_items", ParamValue::Int(e.max_items as i64));
            }
            ModelConfig::BprMf(b) => {
                put("factors", ParamValue::Int(b.factors as i64));
                put("learning_rate", ParamValue::Real(b.learning_rate));
                put("regularization", ParamValue::Real(b.regularization));
                put("epochs", ParamValue::Int(b.epochs as i64));
                if let Some(s) = b.seed {
                    put("seed", ParamValue::Int(s as i64));
                }
            }
        }
        m
    }
}
