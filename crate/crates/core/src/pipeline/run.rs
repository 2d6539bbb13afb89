use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::json;

use super::config::{EvaluationConfig, ExperimentConfig};
use super::events::{PipelineEvent, PipelineHook, Stage};
use super::PipelineError;
use crate::eval::{
    compute_accuracy, compute_exposure, significance_report, MetricReport, MetricValues, RelevanceJudgments,
    SystemMetric,
};
use crate::ingest::{compute_stats, load_id_list, load_interactions, Dataset, DatasetBuilder};
use crate::models::{fit, load_checkpoint, recommend, Deadline, ModelConfig, RecommendationList, TrainedModel};
use crate::prep::{apply_filter, split, SplitOutput, SplitStrategy};
use crate::report::{write_artifacts, ArtifactBundle, EnergyMonitor, FailureRecord, RunInfo, RunManifest};
use crate::tune::{run_study, Objective, Scheduler, Search, StudyObserver, StudyResult, StudySpec, Trial, TuneError};

/// What a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub manifest: RunManifest,
    /// Per-model failures; the run carried on without those models.
    pub failures: Vec<FailureRecord>,
    /// A failure that stopped the run early; artifacts are partial.
    pub fatal: Option<String>,
    /// Test-set metric reports by model.
    pub reports: BTreeMap<String, MetricReport>,
    /// Tuning results by model (train and design pipelines).
    pub studies: BTreeMap<String, StudyResult>,
}

impl RunOutcome {
    /// 0 when everything succeeded, 2 when any model failed or the run stopped early.
    pub fn exit_code(&self) -> i32 {
        if self.fatal.is_some() || !self.failures.is_empty() {
            2
        } else {
            0
        }
    }
}

struct Ctx<'h> {
    hooks: &'h [&'h dyn PipelineHook],
    monitor: EnergyMonitor,
    stage_times: Vec<(String, f64)>,
    current: Option<(String, Instant)>,
}

impl<'h> Ctx<'h> {
    fn new(cfg: &ExperimentConfig, hooks: &'h [&'h dyn PipelineHook]) -> Self {
        let r = &cfg.reporting;
        Self {
            hooks,
            monitor: EnergyMonitor::start(r.power, r.carbon_intensity, Duration::from_millis(r.sample_interval_ms)),
            stage_times: Vec::new(),
            current: None,
        }
    }

    fn stage(&mut self, name: &str) {
        self.close_stage();
        self.monitor.begin_stage(name);
        self.current = Some((name.to_owned(), Instant::now()));
    }

    fn close_stage(&mut self) {
        if let Some((n, t)) = self.current.take() {
            self.stage_times.push((n, t.elapsed().as_secs_f64()));
        }
    }

    fn emit(&self, stage: Stage, model: Option<&str>, trial: Option<usize>, summary: String) {
        log::info!(
            "[{}] {}{}",
            stage.name(),
            model.map(|m| format!("{m}: ")).unwrap_or_default(),
            summary
        );
        let e = PipelineEvent {
            stage,
            model: model.map(str::to_owned),
            trial,
            summary,
        };
        for h in self.hooks {
            h.on_event(&e);
        }
    }
}

struct Prepared {
    split: SplitOutput,
}

fn prepare(cfg: &ExperimentConfig, ctx: &mut Ctx<'_>, info: &mut RunInfo) -> Result<Prepared, String> {
    ctx.stage("ingest");
    let ds = &cfg.dataset;
    let loaded = load_interactions(&ds.path, &ds.schema()).map_err(|e| e.to_string())?;
    let mut builder = DatasetBuilder::new(ds.dedup);
    if let Some(c) = &ds.users {
        let ids = load_id_list(&c.path, &c.separator, c.column, c.header).map_err(|e| e.to_string())?;
        builder = builder.with_user_catalog(ids);
    }
    if let Some(c) = &ds.items {
        let ids = load_id_list(&c.path, &c.separator, c.column, c.header).map_err(|e| e.to_string())?;
        builder = builder.with_item_catalog(ids);
    }
    let mut data = builder.build(loaded.records).map_err(|e| e.to_string())?;
    let stats = compute_stats(&data);
    info.skipped_rows = loaded.skipped_rows;
    ctx.emit(
        Stage::Ingest,
        None,
        None,
        format!(
            "{} users, {} items, {} interactions, sparsity {:.6}%, {} rows skipped",
            stats.n_users,
            stats.n_items,
            stats.n_interactions,
            stats.sparsity * 100.0,
            loaded.skipped_rows
        ),
    );

    ctx.stage("filter");
    if cfg.filters.is_empty() {
        ctx.emit(Stage::Filter, None, None, "no filters".into());
    }
    for f in &cfg.filters {
        let before = data.n_interactions();
        data = apply_filter(&data, f).map_err(|e| e.to_string())?;
        ctx.emit(
            Stage::Filter,
            None,
            None,
            format!("{f:?}: {before} -> {} interactions", data.n_interactions()),
        );
    }
    info.dataset = Some(compute_stats(&data));

    ctx.stage("split");
    let out = split(&data, &cfg.split_spec()).map_err(|e| e.to_string())?;
    info.unsplittable_users = out.provenance.unsplittable_users;
    info.split = Some(out.provenance.clone());
    ctx.emit(
        Stage::Split,
        None,
        None,
        format!(
            "train {}, validation {}, test {}, folds {}, unsplittable users {}",
            out.train.n_interactions(),
            out.validation.as_ref().map_or(0, Dataset::n_interactions),
            out.test.n_interactions(),
            out.folds.len(),
            out.provenance.unsplittable_users
        ),
    );
    Ok(Prepared { split: out })
}

/// Validation score: one metric at one cutoff over users with relevant items.
struct Validation<'a> {
    judgments: Vec<RelevanceJudgments>,
    cfg: &'a ExperimentConfig,
}

impl<'a> Validation<'a> {
    fn new(cfg: &'a ExperimentConfig, split: &'a SplitOutput) -> Self {
        let sets: Vec<&Dataset> = if split.folds.is_empty() {
            // without a validation split, selection falls back to the test split
            vec![split.validation.as_ref().unwrap_or(&split.test)]
        } else {
            split.folds.iter().map(|f| &f.test).collect()
        };
        let judgments = sets
            .iter()
            .map(|d| RelevanceJudgments::from_dataset(d, cfg.evaluation.relevance_threshold))
            .collect();
        Self { judgments, cfg }
    }
}

impl Objective for Validation<'_> {
    fn score(&self, fold: usize, model: &TrainedModel) -> Result<f64, String> {
        let judg = &self.judgments[fold];
        let t = &self.cfg.tuning;
        let recs =
            recommend(model, &judg.users(), t.cutoff, self.cfg.evaluation.filter_seen).map_err(|e| e.to_string())?;
        let report = compute_accuracy(&recs, judg, &[t.cutoff], &[t.metric]).map_err(|e| e.to_string())?;
        Ok(report.accuracy[0].mean)
    }
}

struct Forward<'c, 'h> {
    ctx: &'c Ctx<'h>,
}

impl StudyObserver for Forward<'_, '_> {
    fn trial_started(&self, name: &str, trial_id: usize, config: &ModelConfig) {
        let params: Vec<String> = config.to_params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        self.ctx
            .emit(Stage::TrialStart, Some(name), Some(trial_id), params.join(" "));
    }

    fn trial_finished(&self, trial: &Trial) {
        let metric = trial.metric().map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        self.ctx.emit(
            Stage::TrialEnd,
            Some(&trial.model),
            Some(trial.trial_id),
            format!("{:?} after {} epochs, metric {metric}", trial.status, trial.epochs),
        );
    }
}

/// Recommends for every user with a relevant test item and scores the lists.
fn evaluate_model(
    model: &TrainedModel,
    test: &Dataset,
    ev: &EvaluationConfig,
) -> Result<(RecommendationList, MetricReport), String> {
    let judg = RelevanceJudgments::from_dataset(test, ev.relevance_threshold);
    let users = judg.users();
    let kmax = *ev.cutoffs.iter().max().expect("validated non-empty");
    let recs = recommend(model, &users, kmax, ev.filter_seen).map_err(|e| e.to_string())?;
    let mut report = compute_accuracy(&recs, &judg, &ev.cutoffs, &ev.metrics).map_err(|e| e.to_string())?;
    report.skipped_users = test.n_users() - users.len();
    if ev.system_metrics {
        for &k in &ev.cutoffs {
            let sys = compute_exposure(&recs, model.train(), k, ev.short_head_share).map_err(|e| e.to_string())?;
            report.system.extend(sys);
        }
    }
    Ok((recs, report))
}

/// Per-user means across folds for users evaluated in several folds; system metrics
/// are averaged.
fn merge_folds(reports: &[MetricReport]) -> MetricReport {
    let mut users: Vec<u32> = reports.iter().flat_map(|r| r.users.iter().copied()).collect();
    users.sort_unstable();
    users.dedup();
    let pos: HashMap<u32, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let first = &reports[0];
    let accuracy = first
        .accuracy
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let mut sum = vec![0.0; users.len()];
            let mut cnt = vec![0usize; users.len()];
            for r in reports {
                for (&u, v) in r.users.iter().zip(&r.accuracy[mi].per_user) {
                    sum[pos[&u]] += v;
                    cnt[pos[&u]] += 1;
                }
            }
            let per_user: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect();
            let mean = per_user.iter().sum::<f64>() / per_user.len() as f64;
            MetricValues {
                metric: m.metric,
                k: m.k,
                per_user,
                mean,
            }
        })
        .collect();
    let system = first
        .system
        .iter()
        .enumerate()
        .map(|(si, s)| SystemMetric {
            name: s.name.clone(),
            k: s.k,
            value: reports.iter().map(|r| r.system[si].value).sum::<f64>() / reports.len() as f64,
        })
        .collect();
    MetricReport {
        users,
        skipped_users: reports.iter().map(|r| r.skipped_users).min().unwrap_or(0),
        accuracy,
        system,
    }
}

struct Evaluated {
    recs: RecommendationList,
    report: MetricReport,
}

fn evaluate_all(
    cfg: &ExperimentConfig,
    split: &SplitOutput,
    models: &BTreeMap<String, TrainedModel>,
    seeds: &BTreeMap<String, u64>,
    ctx: &Ctx<'_>,
    failures: &mut Vec<FailureRecord>,
) -> BTreeMap<String, Evaluated> {
    let mut out = BTreeMap::new();
    for (name, model) in models {
        let result = if split.folds.is_empty() {
            evaluate_model(model, &split.test, &cfg.evaluation)
        } else {
            // fold 0 reuses the tuned model; other folds are refitted with its config
            let seed = seeds.get(name).copied().unwrap_or(cfg.seed);
            let mut first_recs = None;
            let mut reports = Vec::new();
            let mut err = None;
            for (f, fold) in split.folds.iter().enumerate() {
                let fitted;
                let m = if f == 0 {
                    model
                } else {
                    match fit(model.config(), &fold.train, seed, &Deadline::none()) {
                        Ok(x) => {
                            fitted = x;
                            &fitted
                        }
                        Err(e) => {
                            err = Some(format!("refit on fold {f}: {e}"));
                            break;
                        }
                    }
                };
                match evaluate_model(m, &fold.test, &cfg.evaluation) {
                    Ok((recs, rep)) => {
                        first_recs.get_or_insert(recs);
                        reports.push(rep);
                    }
                    Err(e) => {
                        err = Some(format!("fold {f}: {e}"));
                        break;
                    }
                }
            }
            match err {
                Some(e) => Err(e),
                None => Ok((first_recs.expect("at least two folds"), merge_folds(&reports))),
            }
        };
        match result {
            Ok((recs, report)) => {
                let head: Vec<String> = report
                    .accuracy
                    .iter()
                    .take(3)
                    .map(|m| format!("{}={:.4}", m.label(), m.mean))
                    .collect();
                ctx.emit(
                    Stage::Evaluate,
                    Some(name),
                    None,
                    format!("{} users: {}", report.users.len(), head.join(" ")),
                );
                out.insert(name.clone(), Evaluated { recs, report });
            }
            Err(e) => {
                ctx.emit(Stage::Evaluate, Some(name), None, format!("failed: {e}"));
                failures.push(FailureRecord {
                    model: name.clone(),
                    stage: "evaluate".into(),
                    error: e,
                });
            }
        }
    }
    out
}

fn study_failure(e: &TuneError) -> String {
    match e {
        TuneError::NoEligibleTrial { trials, .. } => {
            let first = trials.iter().find_map(|t| t.error.as_deref().map(|m| (t.status, m)));
            match first {
                Some((status, msg)) => format!("{e}; e.g. {status:?}: {msg}"),
                None => {
                    let statuses: Vec<String> = trials.iter().map(|t| format!("{:?}", t.status)).collect();
                    format!("{e} (statuses: {})", statuses.join(", "))
                }
            }
        }
        other => other.to_string(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Train,
    Design,
}

fn run_tuned(cfg: &ExperimentConfig, hooks: &[&dyn PipelineHook], kind: Kind) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    // configuration problems surface before any work starts
    let mut specs = Vec::new();
    for (name, block) in &cfg.models {
        let mut spec = match kind {
            Kind::Train => {
                let mut s = StudySpec::new(name, block.family, cfg.search_space(name), cfg.seed);
                s.search = block.search.unwrap_or(cfg.tuning.search);
                s.scheduler = block.scheduler.clone().unwrap_or_else(|| cfg.tuning.scheduler.clone());
                s.early_stopping = block.early_stopping.or(cfg.tuning.early_stopping);
                s
            }
            Kind::Design => {
                let fixed = cfg.fixed_config(name)?;
                let mut s = StudySpec::new(
                    name,
                    block.family,
                    crate::tune::SearchSpace::fixed(&fixed.to_params()),
                    cfg.seed,
                );
                s.search = Search::Grid;
                s.scheduler = Scheduler::Fifo;
                s
            }
        };
        spec.workers = cfg.tuning.workers;
        spec.trial_timeout = cfg.trial_timeout();
        spec.budget = cfg.budget();
        spec.direction = cfg.tuning.direction;
        spec.configs()
            .map_err(|e| PipelineError::Config(format!("models.{name}: {e}")))?;
        if let Scheduler::Asha(a) = &spec.scheduler {
            a.validate()
                .map_err(|e| PipelineError::Config(format!("models.{name}: {e}")))?;
        }
        specs.push(spec);
    }

    let out_dir = cfg.reporting.output.clone();
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| PipelineError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let log_path = out_dir.join("study.log");
    let _ = std::fs::remove_file(&log_path);

    let mut ctx = Ctx::new(cfg, hooks);
    let mut info = RunInfo {
        pipeline: match kind {
            Kind::Train => "train",
            Kind::Design => "design",
        }
        .into(),
        engine_version: crate::ENGINE_VERSION.into(),
        config_hash: cfg.digest(),
        seed: cfg.seed,
        ..RunInfo::default()
    };
    let mut failures = Vec::new();
    let prepared = match prepare(cfg, &mut ctx, &mut info) {
        Ok(p) => p,
        Err(e) => return finish_fatal(ctx, info, &out_dir, e),
    };
    let sp = &prepared.split;
    let trains: Vec<Dataset> = if sp.folds.is_empty() {
        vec![sp.train.clone()]
    } else {
        sp.folds.iter().map(|f| f.train.clone()).collect()
    };
    let objective = Validation::new(cfg, sp);

    let mut studies = BTreeMap::new();
    for mut spec in specs {
        ctx.stage(&format!("tune:{}", spec.name));
        spec.log_path = Some(log_path.clone());
        let forward = Forward { ctx: &ctx };
        match run_study(&spec, &trains, &objective, &forward) {
            Ok(r) => {
                studies.insert(spec.name.clone(), r);
            }
            Err(e) => failures.push(FailureRecord {
                model: spec.name.clone(),
                stage: "tune".into(),
                error: study_failure(&e),
            }),
        }
    }

    ctx.stage("evaluate");
    let models: BTreeMap<String, TrainedModel> =
        studies.iter().map(|(n, s)| (n.clone(), s.best_model.clone())).collect();
    let seeds: BTreeMap<String, u64> = studies.iter().map(|(n, s)| (n.clone(), s.best_trial().seed)).collect();
    let evaluated = evaluate_all(cfg, sp, &models, &seeds, &ctx, &mut failures);

    let mut best_params = BTreeMap::new();
    for (name, s) in &studies {
        let t = s.best_trial();
        best_params.insert(
            name.clone(),
            json!({
                "family": s.family,
                "trial_id": t.trial_id,
                "seed": t.seed,
                "status": t.status,
                "epochs": t.epochs,
                "params": t.config.to_params(),
                "validation": {
                    "metric": format!("{}@{}", cfg.tuning.metric, cfg.tuning.cutoff),
                    "value": t.metric(),
                },
            }),
        );
    }
    let checkpoints: Vec<(String, &TrainedModel)> = if cfg.reporting.checkpoints {
        models.iter().map(|(n, m)| (n.clone(), m)).collect()
    } else {
        Vec::new()
    };
    let study_log = log_path.exists().then_some(log_path);
    let outcome = write_stage(
        cfg,
        ctx,
        info,
        &out_dir,
        sp,
        evaluated,
        best_params,
        checkpoints,
        study_log,
        failures,
    )?;
    Ok(RunOutcome { studies, ..outcome })
}

#[allow(clippy::too_many_arguments)]
fn write_stage(
    cfg: &ExperimentConfig,
    mut ctx: Ctx<'_>,
    mut info: RunInfo,
    out_dir: &Path,
    sp: &SplitOutput,
    evaluated: BTreeMap<String, Evaluated>,
    best_params: BTreeMap<String, serde_json::Value>,
    checkpoints: Vec<(String, &TrainedModel)>,
    study_log: Option<PathBuf>,
    failures: Vec<FailureRecord>,
) -> Result<RunOutcome, PipelineError> {
    let significance = (evaluated.len() >= 2).then(|| {
        let reports: Vec<(String, &MetricReport)> = evaluated.iter().map(|(n, e)| (n.clone(), &e.report)).collect();
        significance_report(&reports, &cfg.evaluation.tests, &cfg.evaluation.corrections)
    });
    ctx.stage("write");
    ctx.emit(
        Stage::Write,
        None,
        None,
        format!("{} models to {}", evaluated.len(), out_dir.display()),
    );
    ctx.close_stage();
    let Ctx {
        monitor, stage_times, ..
    } = ctx;
    let energy = monitor.finish();
    info.stage_wall_s = stage_times;
    info.users_without_relevance = evaluated
        .iter()
        .map(|(n, e)| (n.clone(), e.report.skipped_users))
        .collect();
    info.failures = failures.clone();
    let mut metrics = Vec::new();
    let mut recommendations = Vec::new();
    let mut reports = BTreeMap::new();
    for (name, e) in evaluated {
        metrics.push((name.clone(), e.report.clone()));
        recommendations.push((name.clone(), e.recs));
        reports.insert(name, e.report);
    }
    let bundle = ArtifactBundle {
        run: info,
        user_map: Some(sp.train.user_map().clone()),
        item_map: Some(sp.train.item_map().clone()),
        metrics,
        significance,
        recommendations,
        best_params,
        checkpoints,
        study_log,
        energy: Some(energy),
    };
    let manifest = write_artifacts(&bundle, out_dir).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    Ok(RunOutcome {
        output: out_dir.to_path_buf(),
        manifest,
        failures,
        fatal: None,
        reports,
        studies: BTreeMap::new(),
    })
}

fn finish_fatal(ctx: Ctx<'_>, mut info: RunInfo, out_dir: &Path, err: String) -> Result<RunOutcome, PipelineError> {
    log::error!("{err}");
    let mut ctx = ctx;
    ctx.close_stage();
    let Ctx {
        monitor, stage_times, ..
    } = ctx;
    let stage = stage_times.last().map_or_else(|| "start".to_owned(), |s| s.0.clone());
    info.stage_wall_s = stage_times;
    info.failures.push(FailureRecord {
        model: String::new(),
        stage,
        error: err.clone(),
    });
    let bundle = ArtifactBundle {
        run: info,
        energy: Some(monitor.finish()),
        ..ArtifactBundle::default()
    };
    let manifest = write_artifacts(&bundle, out_dir).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    Ok(RunOutcome {
        output: out_dir.to_path_buf(),
        failures: manifest.run.failures.clone(),
        manifest,
        fatal: Some(err),
        reports: BTreeMap::new(),
        studies: BTreeMap::new(),
    })
}

/// Ingest, filter, split, tune every model, evaluate the winners on the test split,
/// compare them, and write all artifacts.
pub fn run_train_pipeline(cfg: &ExperimentConfig, hooks: &[&dyn PipelineHook]) -> Result<RunOutcome, PipelineError> {
    run_tuned(cfg, hooks, Kind::Train)
}

/// Like the train pipeline, but each model trains once with its fixed `params`.
pub fn run_design_pipeline(cfg: &ExperimentConfig, hooks: &[&dyn PipelineHook]) -> Result<RunOutcome, PipelineError> {
    run_tuned(cfg, hooks, Kind::Design)
}

/// Directory the eval pipeline writes to: `<output>/eval`.
pub fn eval_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.reporting.output.join("eval")
}

/// Checkpoints the eval pipeline reads, by model name.
pub fn eval_checkpoints(cfg: &ExperimentConfig) -> BTreeMap<String, PathBuf> {
    match &cfg.eval {
        Some(e) if !e.checkpoints.is_empty() => e.checkpoints.clone(),
        _ => cfg
            .models
            .keys()
            .map(|n| {
                (
                    n.clone(),
                    cfg.reporting.output.join("checkpoints").join(format!("{n}.wbck")),
                )
            })
            .collect(),
    }
}

/// Re-evaluates saved checkpoints on the configured split without training.
pub fn run_eval_pipeline(cfg: &ExperimentConfig, hooks: &[&dyn PipelineHook]) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    if matches!(cfg.split.strategy, SplitStrategy::KFold { .. }) {
        return Err(PipelineError::Config(
            "the eval pipeline needs a single test split; k-fold is not supported".into(),
        ));
    }
    let out_dir = eval_output_dir(cfg);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| PipelineError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut ctx = Ctx::new(cfg, hooks);
    let mut info = RunInfo {
        pipeline: "eval".into(),
        engine_version: crate::ENGINE_VERSION.into(),
        config_hash: cfg.digest(),
        seed: cfg.seed,
        ..RunInfo::default()
    };
    let prepared = match prepare(cfg, &mut ctx, &mut info) {
        Ok(p) => p,
        Err(e) => return finish_fatal(ctx, info, &out_dir, e),
    };
    let sp = &prepared.split;
    ctx.stage("evaluate");
    let digest = sp.train.id_maps_digest();
    let mut models = BTreeMap::new();
    for (name, path) in eval_checkpoints(cfg) {
        match load_checkpoint(&path, Some(&digest)) {
            Ok(m) => {
                models.insert(name, m);
            }
            Err(e) => {
                let msg = format!("checkpoint {} for `{name}`: {e}", path.display());
                return finish_fatal(ctx, info, &out_dir, msg);
            }
        }
    }
    let mut failures = Vec::new();
    let evaluated = evaluate_all(cfg, sp, &models, &BTreeMap::new(), &ctx, &mut failures);
    write_stage(
        cfg,
        ctx,
        info,
        &out_dir,
        sp,
        evaluated,
        BTreeMap::new(),
        Vec::new(),
        None,
        failures,
    )
}
