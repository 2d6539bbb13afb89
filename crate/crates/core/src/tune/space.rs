use std::fmt;

use rand::Rng;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::seed::derived_rng;
use super::TuneError;
use crate::models::{Family, ModelConfig, ParamMap, ParamValue};

/// The values one hyperparameter may take.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Categorical(Vec<ParamValue>),
    /// Inclusive integer range.
    Int {
        low: i64,
        high: i64,
    },
    Real {
        low: f64,
        high: f64,
        log: bool,
    },
}

impl Domain {
    fn validate(&self, name: &str) -> Result<(), TuneError> {
        let bad = |m: String| Err(TuneError::InvalidSpace(format!("`{name}`: {m}")));
        match self {
            Domain::Categorical(v) if v.is_empty() => bad("empty value list".into()),
            Domain::Int { low, high } if low > high => bad(format!("empty range [{low}, {high}]")),
            Domain::Real { low, high, log } => {
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    bad(format!("empty or non-finite range [{low}, {high}]"))
                } else if *log && *low <= 0.0 {
                    bad("log-scale bounds must be > 0".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn grid_values(&self, name: &str) -> Result<Vec<ParamValue>, TuneError> {
        match self {
            Domain::Categorical(v) => Ok(v.clone()),
            Domain::Int { low, high } => Ok((*low..=*high).map(ParamValue::Int).collect()),
            Domain::Real { .. } => Err(TuneError::InvalidSpace(format!(
                "`{name}`: a real range cannot be enumerated by grid search; list the values instead"
            ))),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match self {
            Domain::Categorical(v) => v[rng.random_range(0..v.len())].clone(),
            Domain::Int { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            Domain::Real { low, high, .. } if low == high => ParamValue::Real(*low),
            Domain::Real { low, high, log: false } => ParamValue::Real(rng.random_range(*low..*high)),
            Domain::Real { low, high, log: true } => ParamValue::Real(rng.random_range(low.ln()..high.ln()).exp()),
        }
    }
}

/// Per-hyperparameter domains for one model family, in declaration order.
///
/// In TOML a domain is a list (categorical), a scalar (single point),
/// `{ int = [lo, hi] }` or `{ real = [lo, hi], log = true }`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    pub params: Vec<(String, Domain)>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, domain: Domain) -> Self {
        self.params.push((name.to_owned(), domain));
        self
    }

    /// A single-point space holding exactly these values.
    pub fn fixed(params: &ParamMap) -> Self {
        Self {
            params: params
                .iter()
                .map(|(k, v)| (k.clone(), Domain::Categorical(vec![v.clone()])))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        for (i, (name, d)) in self.params.iter().enumerate() {
            if self.params[..i].iter().any(|(n, _)| n == name) {
                return Err(TuneError::InvalidSpace(format!("`{name}` declared twice")));
            }
            d.validate(name)?;
        }
        Ok(())
    }
}

/// Cartesian product of all domains; the first declared parameter varies slowest.
pub fn expand_grid(family: Family, space: &SearchSpace) -> Result<Vec<ModelConfig>, TuneError> {
    space.validate()?;
    let axes = space
        .params
        .iter()
        .map(|(n, d)| d.grid_values(n))
        .collect::<Result<Vec<_>, _>>()?;
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        let map: ParamMap = space
            .params
            .iter()
            .zip(&axes)
            .zip(&idx)
            .map(|(((name, _), values), &k)| (name.clone(), values[k].clone()))
            .collect();
        out.push(ModelConfig::from_params(family, &map)?);
        for a in (0..axes.len()).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(out)
}

/// `n` independent draws; log-scale reals are uniform in the exponent.
pub fn sample_random(family: Family, space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<ModelConfig>, TuneError> {
    space.validate()?;
    let mut rng = derived_rng(seed, "random-search", 0);
    (0..n)
        .map(|_| {
            let map: ParamMap = space
                .params
                .iter()
                .map(|(name, d)| (name.clone(), d.sample(&mut rng)))
                .collect();
            ModelConfig::from_params(family, &map).map_err(TuneError::from)
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DomainRepr {
    List(Vec<ParamValue>),
    Range(RangeRepr),
    Point(ParamValue),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeRepr {
    int: Option<[i64; 2]>,
    real: Option<[f64; 2]>,
    #[serde(default)]
    log: bool,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = String;

    fn try_from(r: DomainRepr) -> Result<Self, String> {
        match r {
            DomainRepr::List(v) => Ok(Domain::Categorical(v)),
            DomainRepr::Point(v) => Ok(Domain::Categorical(vec![v])),
            DomainRepr::Range(RangeRepr {
                int: Some([low, high]),
                real: None,
                log: false,
            }) => Ok(Domain::Int { low, high }),
            DomainRepr::Range(RangeRepr {
                int: None,
                real: Some([low, high]),
                log,
            }) => Ok(Domain::Real { low, high, log }),
            DomainRepr::Range(_) => Err("a range needs exactly one of `int` or `real` (`log` only with `real`)".into()),
        }
    }
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = SearchSpace;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a table of hyperparameter domains")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<SearchSpace, A::Error> {
                let mut params = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, DomainRepr>()? {
                    let d = Domain::try_from(v).map_err(|e| de::Error::custom(format!("`{k}`: {e}")))?;
                    params.push((k, d));
                }
                Ok(SearchSpace { params })
            }
        }
        d.deserialize_map(V)
    }
}

impl Serialize for SearchSpace {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Range {
            #[serde(skip_serializing_if = "Option::is_none")]
            int: Option<[i64; 2]>,
            #[serde(skip_serializing_if = "Option::is_none")]
            real: Option<[f64; 2]>,
            #[serde(skip_serializing_if = "std::ops::Not::not")]
            log: bool,
        }
        let mut m = s.serialize_map(Some(self.params.len()))?;
        for (k, d) in &self.params {
            match d {
                Domain::Categorical(v) => m.serialize_entry(k, v)?,
                Domain::Int { low, high } => m.serialize_entry(
                    k,
                    &Range {
                        int: Some([*low, *high]),
                        real: None,
                        log: false,
                    },
                )?,
                Domain::Real { low, high, log } => m.serialize_entry(
                    k,
                    &Range {
                        int: None,
                        real: Some([*low, *high]),
                        log: *log,
                    },
                )?,
            }
        }
        m.end()
    }
}
