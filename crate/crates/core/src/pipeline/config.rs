use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::{AccuracyMetric, Correction, StatTest, DEFAULT_SHORT_HEAD_SHARE};
use crate::ingest::{Column, DedupPolicy, ParseMode, Schema};
use crate::models::{Family, ModelConfig, ParamMap};
use crate::prep::{FilterSpec, SplitSpec, SplitStrategy};
use crate::report::{check_name, PowerModel, DEFAULT_CARBON_INTENSITY};
use crate::tune::{Direction, EarlyStopping, Scheduler, Search, SearchSpace};

fn default_separator() -> String {
    "\t".into()
}

fn default_columns() -> Vec<Column> {
    vec![Column::User, Column::Item, Column::Rating, Column::Timestamp]
}

/// An optional list of known entity IDs, one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    pub path: PathBuf,
    #[serde(default = "default_separator")]
    pub separator: String,
    #[serde(default)]
    pub column: usize,
    #[serde(default)]
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default = "default_columns")]
    pub columns: Vec<Column>,
    #[serde(default = "default_separator")]
    pub separator: String,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub mode: ParseMode,
    #[serde(default)]
    pub dedup: DedupPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<CatalogConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<CatalogConfig>,
}

impl DatasetConfig {
    pub fn schema(&self) -> Schema {
        Schema {
            columns: self.columns.clone(),
            separator: self.separator.clone(),
            header: self.header,
            mode: self.mode,
        }
    }
}

/// A split strategy; `seed` defaults to the master seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitConfig {
    #[serde(flatten)]
    pub strategy: SplitStrategy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

// serde's flatten drops the strict field check of the tagged strategy, so the
// seed is peeled off by hand and the rest goes to the strategy as-is
impl<'de> Deserialize<'de> for SplitConfig {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut table = toml::Table::deserialize(de)?;
        let seed = match table.remove("seed") {
            None => None,
            Some(toml::Value::Integer(s)) if s >= 0 => Some(s as u64),
            Some(other) => {
                return Err(D::Error::custom(format!(
                    "split.seed must be a non-negative integer, got {other}"
                )))
            }
        };
        let strategy =
            SplitStrategy::deserialize(toml::Value::Table(table)).map_err(|e| D::Error::custom(e.message()))?;
        Ok(Self { strategy, seed })
    }
}

/// One model: its family, fixed hyperparameters and, for tuning, a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub family: Family,
    /// Values used as-is; the design pipeline trains exactly this configuration.
    #[serde(default)]
    pub params: ParamMap,
    /// Searched dimensions, added to `params` by the train pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<Search>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<Scheduler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<EarlyStopping>,
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

fn grid() -> Search {
    Search::Grid
}

fn fifo() -> Scheduler {
    Scheduler::Fifo
}

fn ndcg() -> AccuracyMetric {
    AccuracyMetric::Ndcg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default = "grid")]
    pub search: Search,
    #[serde(default = "fifo")]
    pub scheduler: Scheduler,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_timeout_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<EarlyStopping>,
    /// Validation metric driving selection.
    #[serde(default = "ndcg")]
    pub metric: AccuracyMetric,
    #[serde(default = "ten")]
    pub cutoff: usize,
    #[serde(default)]
    pub direction: Direction,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            search: Search::Grid,
            scheduler: Scheduler::Fifo,
            workers: 1,
            trial_timeout_s: None,
            budget_s: None,
            early_stopping: None,
            metric: AccuracyMetric::Ndcg,
            cutoff: 10,
            direction: Direction::Maximize,
        }
    }
}

fn default_cutoffs() -> Vec<usize> {
    vec![10]
}

fn all_metrics() -> Vec<AccuracyMetric> {
    AccuracyMetric::ALL.to_vec()
}

fn default_tests() -> Vec<StatTest> {
    vec![StatTest::PairedT, StatTest::Wilcoxon]
}

fn default_corrections() -> Vec<Correction> {
    vec![Correction::Bonferroni, Correction::BenjaminiHochberg]
}

fn default_true() -> bool {
    true
}

fn default_share() -> f64 {
    DEFAULT_SHORT_HEAD_SHARE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<AccuracyMetric>,
    #[serde(default = "default_true")]
    pub system_metrics: bool,
    #[serde(default = "default_tests")]
    pub tests: Vec<StatTest>,
    #[serde(default = "default_corrections")]
    pub corrections: Vec<Correction>,
    /// Minimum test rating counted as relevant; every test interaction when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_threshold: Option<f64>,
    #[serde(default = "default_true")]
    pub filter_seen: bool,
    #[serde(default = "default_share")]
    pub short_head_share: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            cutoffs: default_cutoffs(),
            metrics: all_metrics(),
            system_metrics: true,
            tests: default_tests(),
            corrections: default_corrections(),
            relevance_threshold: None,
            filter_seen: true,
            short_head_share: DEFAULT_SHORT_HEAD_SHARE,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

fn default_intensity() -> f64 {
    DEFAULT_CARBON_INTENSITY
}

fn default_interval() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportingConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub power: PowerModel,
    #[serde(default = "default_intensity")]
    pub carbon_intensity: f64,
    #[serde(default = "default_interval")]
    pub sample_interval_ms: u64,
    #[serde(default = "default_true")]
    pub checkpoints: bool,
}

impl Default for ReportingConfig {
    fn default() -> Self {
        Self {
            output: default_output(),
            power: PowerModel::default(),
            carbon_intensity: DEFAULT_CARBON_INTENSITY,
            sample_interval_ms: default_interval(),
            checkpoints: true,
        }
    }
}

/// Checkpoints consumed by the eval pipeline; defaults to `<output>/checkpoints/<model>.wbck`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalInputs {
    #[serde(default)]
    pub checkpoints: BTreeMap<String, PathBuf>,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random choice in the run derives from it.
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    pub split: SplitConfig,
    pub models: BTreeMap<String, ModelBlock>,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub reporting: ReportingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalInputs>,
}

fn secs(field: &str, v: Option<f64>) -> Result<Option<Duration>, PipelineError> {
    v.map(|s| {
        Duration::try_from_secs_f64(s)
            .map_err(|_| PipelineError::Config(format!("{field} must be a non-negative number of seconds")))
    })
    .transpose()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates a config file; relative paths inside it resolve against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        for c in [&mut self.dataset.users, &mut self.dataset.items].into_iter().flatten() {
            fix(&mut c.path);
        }
        fix(&mut self.reporting.output);
        if let Some(e) = &mut self.eval {
            e.checkpoints.values_mut().for_each(fix);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.dataset
            .schema()
            .validate()
            .map_err(|e| PipelineError::Config(format!("dataset: {e}")))?;
        for (i, f) in self.filters.iter().enumerate() {
            f.validate()
                .map_err(|e| PipelineError::Config(format!("filters[{i}]: {e}")))?;
        }
        self.split_spec()
            .validate()
            .map_err(|e| PipelineError::Config(format!("split: {e}")))?;
        if self.models.is_empty() {
            return bad("models: at least one model is required".into());
        }
        for (name, m) in &self.models {
            check_name(name).map_err(|e| PipelineError::Config(format!("models.{name}: {e}")))?;
            if let Some(space) = &m.space {
                if let Some(k) = space.params.iter().map(|(k, _)| k).find(|k| m.params.contains_key(*k)) {
                    return bad(format!("models.{name}: `{k}` is both fixed and searched"));
                }
            }
        }
        if self.tuning.workers < 1 {
            return bad("tuning.workers must be at least 1".into());
        }
        if self.tuning.cutoff < 1 {
            return bad("tuning.cutoff must be at least 1".into());
        }
        secs("tuning.trial_timeout_s", self.tuning.trial_timeout_s)?;
        secs("tuning.budget_s", self.tuning.budget_s)?;
        let ev = &self.evaluation;
        if ev.cutoffs.is_empty() || ev.cutoffs.contains(&0) {
            return bad("evaluation.cutoffs must be a non-empty list of positive integers".into());
        }
        if ev.metrics.is_empty() {
            return bad("evaluation.metrics must not be empty".into());
        }
        if !(ev.short_head_share > 0.0 && ev.short_head_share <= 1.0) {
            return bad("evaluation.short_head_share must lie in (0, 1]".into());
        }
        let r = &self.reporting;
        let p = &r.power;
        if [p.cpu_tdp_w, p.gpu_tdp_w, p.ram_w_per_gb, r.carbon_intensity]
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return bad("reporting: power figures and carbon_intensity must be finite and >= 0".into());
        }
        if r.sample_interval_ms == 0 {
            return bad("reporting.sample_interval_ms must be positive".into());
        }
        if let Some(e) = &self.eval {
            if let Some(n) = e.checkpoints.keys().find(|n| check_name(n).is_err()) {
                return bad(format!("eval.checkpoints: invalid model name `{n}`"));
            }
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::new(self.split.strategy.clone(), self.split.seed.unwrap_or(self.seed))
    }

    pub fn trial_timeout(&self) -> Option<Duration> {
        self.tuning
            .trial_timeout_s
            .and_then(|s| Duration::try_from_secs_f64(s).ok())
    }

    pub fn budget(&self) -> Option<Duration> {
        self.tuning.budget_s.and_then(|s| Duration::try_from_secs_f64(s).ok())
    }

    /// Fixed and searched parameters of one model as a single space.
    pub fn search_space(&self, name: &str) -> SearchSpace {
        let m = &self.models[name];
        let mut space = SearchSpace::fixed(&m.params);
        if let Some(s) = &m.space {
            space.params.extend(s.params.iter().cloned());
        }
        space
    }

    /// The design pipeline's configuration for one model.
    pub fn fixed_config(&self, name: &str) -> Result<ModelConfig, PipelineError> {
        let m = &self.models[name];
        ModelConfig::from_params(m.family, &m.params).map_err(|e| PipelineError::Config(format!("models.{name}: {e}")))
    }

    /// SHA-256 of the config with fields that cannot change results (worker count,
    /// output directory) blanked.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.tuning.workers = 1;
        c.reporting.output = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        crate::report::sha256_hex(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[dataset]
path = "ratings.tsv"
columns = ["user", "item", "rating"]

[split]
strategy = "holdout"
ratios = [0.8, 0.2]

[models.pop]
family = "mostpop"
"#;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.split_spec().seed, 7);
        assert_eq!(c.tuning.workers, 1);
        assert_eq!(c.evaluation.cutoffs, vec![10]);
        assert_eq!(c.evaluation.metrics.len(), 7);
    }

    #[test]
    fn typo_names_key_and_line() {
        let text = MINIMAL.replace("ratios = [0.8, 0.2]", "ratios = [0.8, 0.2]\nratio = 1");
        let e = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("ratio"), "{e}");
        assert!(e.contains("line"), "{e}");
        let text = MINIMAL.replace("[models.pop]", "[modles.pop]");
        let e = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("modles"), "{e}");
    }

    #[test]
    fn missing_seed_is_an_error() {
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("seed = 7", "")).unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn unknown_family_is_an_error() {
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("\"mostpop\"", "\"sasrec\"")).unwrap_err();
        assert!(e.to_string().contains("sasrec"), "{e}");
    }

    #[test]
    fn space_and_params_combine() {
        let text = format!(
            "{MINIMAL}\n[models.ease]\nfamily = \"ease\"\nparams = {{ max_items = 100 }}\nspace = {{ l2 = [1.0, 10.0] }}\n"
        );
        let c = ExperimentConfig::from_toml(&text).unwrap();
        let s = c.search_space("ease");
        assert_eq!(s.params.len(), 2);
        assert!(c.fixed_config("ease").is_err());
        let clash = text.replace("max_items = 100", "l2 = 5.0");
        assert!(ExperimentConfig::from_toml(&clash).is_err());
    }

    #[test]
    fn digest_ignores_workers() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.tuning.workers = 6;
        assert_eq!(a.digest(), b.digest());
        b.seed = 8;
        assert_ne!(a.digest(), b.digest());
    }
}
