use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::energy::EnergySummary;
use super::recs::render_recommendations;
use super::{Num, ReportError};
use crate::eval::{MetricReport, SignificanceReport};
use crate::ingest::{DatasetStats, IdMap};
use crate::models::{save_checkpoint, RecommendationList, TrainedModel};
use crate::prep::SplitProvenance;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A model that could not be trained or evaluated; the run carries on without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub model: String,
    pub stage: String,
    pub error: String,
}

/// Run metadata copied verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunInfo {
    pub pipeline: String,
    pub engine_version: String,
    /// SHA-256 of the canonical experiment config.
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitProvenance>,
    /// Wall seconds per pipeline stage, in execution order.
    pub stage_wall_s: Vec<(String, f64)>,
    pub skipped_rows: usize,
    pub unsplittable_users: usize,
    /// Per model: recommended users without any relevant test item.
    pub users_without_relevance: BTreeMap<String, usize>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// False for files holding wall times or energy figures.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub run: RunInfo,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    /// `(path, sha256)` of every deterministic artifact.
    pub fn deterministic_digests(&self) -> BTreeMap<String, String> {
        self.artifacts
            .iter()
            .filter(|a| a.deterministic)
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect()
    }
}

/// Everything a run persists. Empty parts are simply not written.
#[derive(Default)]
pub struct ArtifactBundle<'a> {
    pub run: RunInfo,
    /// Maps for rendering raw IDs; required when recommendations or metrics are present.
    pub user_map: Option<Arc<IdMap>>,
    pub item_map: Option<Arc<IdMap>>,
    pub metrics: Vec<(String, MetricReport)>,
    pub significance: Option<SignificanceReport>,
    pub recommendations: Vec<(String, RecommendationList)>,
    pub best_params: BTreeMap<String, serde_json::Value>,
    pub checkpoints: Vec<(String, &'a TrainedModel)>,
    /// A study log written during the run; copied to `study.log` unless already there.
    pub study_log: Option<PathBuf>,
    pub energy: Option<EnergySummary>,
}

/// Model names become file names.
pub fn check_name(name: &str) -> Result<(), ReportError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ReportError::InvalidName(name.to_owned()))
    }
}

struct Writer<'d> {
    dir: &'d Path,
    entries: Vec<ArtifactEntry>,
}

impl Writer<'_> {
    fn mkdir(&self, sub: &str) -> Result<(), ReportError> {
        let p = self.dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| ReportError::Io(p, e))
    }

    fn put(&mut self, rel: &str, bytes: &[u8], deterministic: bool) -> Result<(), ReportError> {
        let p = self.dir.join(rel);
        std::fs::write(&p, bytes).map_err(|e| ReportError::Io(p, e))?;
        self.record(rel, bytes, deterministic);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8], deterministic: bool) {
        self.entries.push(ArtifactEntry {
            path: rel.to_owned(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            deterministic,
        });
    }

    fn json<T: Serialize>(&mut self, rel: &str, v: &T, deterministic: bool) -> Result<(), ReportError> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.put(rel, s.as_bytes(), deterministic)
    }
}

fn user_label(map: Option<&IdMap>, u: u32) -> String {
    map.and_then(|m| m.raw(u))
        .map_or_else(|| format!("#{u}"), str::to_owned)
}

/// Wide table: one row per model, one column per metric@K (accuracy then system).
fn summary_table(metrics: &[(String, MetricReport)]) -> String {
    let mut cols: Vec<String> = Vec::new();
    let mut rows: Vec<BTreeMap<String, f64>> = Vec::new();
    for (_, r) in metrics {
        let mut row = BTreeMap::new();
        let cells = r
            .accuracy
            .iter()
            .map(|m| (m.label(), m.mean))
            .chain(r.system.iter().map(|s| (format!("{}@{}", s.name, s.k), s.value)));
        for (label, v) in cells {
            if !cols.contains(&label) {
                cols.push(label.clone());
            }
            row.insert(label, v);
        }
        rows.push(row);
    }
    let mut out = String::from("model");
    for c in &cols {
        write!(out, "\t{c}").expect("string write");
    }
    out.push('\n');
    for ((name, _), row) in metrics.iter().zip(&rows) {
        out.push_str(name);
        for c in &cols {
            match row.get(c) {
                Some(v) => write!(out, "\t{}", Num(*v)),
                None => write!(out, "\t"),
            }
            .expect("string write");
        }
        out.push('\n');
    }
    out
}

fn per_user_table(metrics: &[(String, MetricReport)], users: Option<&IdMap>) -> String {
    let mut out = String::from("model\tuser\tmetric\tvalue\n");
    for (name, r) in metrics {
        for m in &r.accuracy {
            let label = m.label();
            for (&u, v) in r.users.iter().zip(&m.per_user) {
                writeln!(out, "{name}\t{}\t{label}\t{}", user_label(users, u), Num(*v)).expect("string write");
            }
        }
    }
    out
}

fn significance_table(s: &SignificanceReport) -> String {
    let names: Vec<&str> = s.corrections.iter().map(|c| c.name()).collect();
    let mut out = String::from("metric\tmodel_a\tmodel_b\ttest\tn\tstatistic\tp_value");
    for n in &names {
        write!(out, "\tp_{n}").expect("string write");
    }
    out.push('\n');
    for c in &s.comparisons {
        write!(
            out,
            "{}@{}\t{}\t{}\t{}",
            c.metric,
            c.k,
            c.model_a,
            c.model_b,
            c.test.name()
        )
        .expect("string write");
        match &c.result {
            Some(r) => {
                write!(out, "\t{}\t{}\t{}", r.n, Num(r.statistic), Num(r.p_value)).expect("string write");
                for n in &names {
                    match r.adjusted.get(*n) {
                        Some(p) => write!(out, "\t{}", Num(*p)),
                        None => write!(out, "\t"),
                    }
                    .expect("string write");
                }
            }
            None => {
                out.push_str("\t\t\t");
                out.extend(names.iter().map(|_| '\t'));
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the fixed layout under `dir` and returns the manifest, which is written last.
///
/// ```text
/// manifest.json  best_params.json  study.log  energy.json
/// metrics/summary.tsv  metrics/per_user.tsv
/// stats/significance.json  stats/significance.tsv
/// recs/<model>.tsv  checkpoints/<model>.wbck
/// ```
pub fn write_artifacts(bundle: &ArtifactBundle<'_>, dir: &Path) -> Result<RunManifest, ReportError> {
    std::fs::create_dir_all(dir).map_err(|e| ReportError::Io(dir.to_path_buf(), e))?;
    let mut w = Writer {
        dir,
        entries: Vec::new(),
    };
    let users = bundle.user_map.as_deref();

    if !bundle.metrics.is_empty() {
        for (name, _) in &bundle.metrics {
            check_name(name)?;
        }
        w.mkdir("metrics")?;
        w.put("metrics/summary.tsv", summary_table(&bundle.metrics).as_bytes(), true)?;
        w.put(
            "metrics/per_user.tsv",
            per_user_table(&bundle.metrics, users).as_bytes(),
            true,
        )?;
    }
    if let Some(s) = &bundle.significance {
        w.mkdir("stats")?;
        w.json("stats/significance.json", s, true)?;
        w.put("stats/significance.tsv", significance_table(s).as_bytes(), true)?;
    }
    if !bundle.recommendations.is_empty() {
        let (Some(um), Some(im)) = (&bundle.user_map, &bundle.item_map) else {
            return Err(ReportError::MissingIdMaps);
        };
        w.mkdir("recs")?;
        for (name, list) in &bundle.recommendations {
            check_name(name)?;
            let body = render_recommendations(list, um, im)?;
            w.put(&format!("recs/{name}.tsv"), body.as_bytes(), true)?;
        }
    }
    if !bundle.checkpoints.is_empty() {
        w.mkdir("checkpoints")?;
        for (name, model) in &bundle.checkpoints {
            check_name(name)?;
            let rel = format!("checkpoints/{name}.wbck");
            let p = dir.join(&rel);
            save_checkpoint(model, &p)?;
            let bytes = std::fs::read(&p).map_err(|e| ReportError::Io(p.clone(), e))?;
            w.record(&rel, &bytes, true);
        }
    }
    if !bundle.best_params.is_empty() {
        w.json("best_params.json", &bundle.best_params, true)?;
    }
    if let Some(src) = &bundle.study_log {
        let target = dir.join("study.log");
        let bytes = std::fs::read(src).map_err(|e| ReportError::Io(src.clone(), e))?;
        let same = std::fs::canonicalize(src).ok() == std::fs::canonicalize(&target).ok();
        if same {
            w.record("study.log", &bytes, false);
        } else {
            w.put("study.log", &bytes, false)?;
        }
    }
    if let Some(e) = &bundle.energy {
        w.json("energy.json", e, false)?;
    }

    let manifest = RunManifest {
        run: bundle.run.clone(),
        artifacts: w.entries,
    };
    let mut s = serde_json::to_string_pretty(&manifest)?;
    s.push('\n');
    let p = dir.join(MANIFEST_FILE);
    std::fs::write(&p, s).map_err(|e| ReportError::Io(p, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, ReportError> {
    let p = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| ReportError::Io(p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Re-hashes every listed artifact against the manifest.
pub fn verify_artifacts(dir: &Path) -> Result<RunManifest, ReportError> {
    let m = read_manifest(dir)?;
    for a in &m.artifacts {
        let p = dir.join(&a.path);
        let bytes = std::fs::read(&p).map_err(|_| ReportError::Missing(a.path.clone()))?;
        let found = sha256_hex(&bytes);
        if found != a.sha256 {
            return Err(ReportError::DigestMismatch {
                path: a.path.clone(),
                expected: a.sha256.clone(),
                found,
            });
        }
    }
    Ok(m)
}
