use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::asha::{asha_decide, early_stop, AshaConfig, AshaDecision, AshaLogEntry, Direction};
use super::seed::derive_seed;
use super::space::{expand_grid, sample_random, SearchSpace};
use super::TuneError;
use crate::ingest::Dataset;
use crate::models::{Deadline, Family, ModelConfig, ModelError, ModelTrainer, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Pending,
    Running,
    StoppedByScheduler,
    StoppedEarly,
    Completed,
    Failed,
    TimeLimitExceeded,
}

impl TrialStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, TrialStatus::Pending | TrialStatus::Running)
    }

    /// Statuses whose final metric may win the study.
    pub fn is_eligible(self) -> bool {
        matches!(self, TrialStatus::Completed | TrialStatus::StoppedEarly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub epoch: usize,
    pub value: f64,
}

/// One configuration's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: usize,
    pub model: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub status: TrialStatus,
    pub history: Vec<HistoryPoint>,
    /// Epochs trained (per fold).
    pub epochs: usize,
    pub wall_time_s: f64,
    /// Energy-accounting stage this trial belongs to.
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trial {
    /// Validation metric at the last evaluation.
    pub fn metric(&self) -> Option<f64> {
        self.history.last().map(|h| h.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Search {
    Grid,
    Random { trials: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Scheduler {
    Fifo,
    Asha(AshaConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopping {
    pub patience: usize,
    #[serde(default)]
    pub min_delta: f64,
}

/// Everything that defines a study except the data.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub name: String,
    pub family: Family,
    pub space: SearchSpace,
    pub search: Search,
    pub scheduler: Scheduler,
    pub workers: usize,
    pub trial_timeout: Option<Duration>,
    /// Wall-clock budget for the whole study; trials not started in time stay pending.
    pub budget: Option<Duration>,
    pub early_stopping: Option<EarlyStopping>,
    pub direction: Direction,
    pub seed: u64,
    /// Line-delimited JSON trial records are appended here.
    pub log_path: Option<PathBuf>,
}

impl StudySpec {
    pub fn new(name: &str, family: Family, space: SearchSpace, seed: u64) -> Self {
        Self {
            name: name.to_owned(),
            family,
            space,
            search: Search::Grid,
            scheduler: Scheduler::Fifo,
            workers: 1,
            trial_timeout: None,
            budget: None,
            early_stopping: None,
            direction: Direction::Maximize,
            seed,
            log_path: None,
        }
    }

    pub fn configs(&self) -> Result<Vec<ModelConfig>, TuneError> {
        match self.search {
            Search::Grid => expand_grid(self.family, &self.space),
            Search::Random { trials } => sample_random(self.family, &self.space, trials, self.seed),
        }
    }

    /// Seed handed to trial `trial_id`.
    pub fn trial_seed(&self, trial_id: usize) -> u64 {
        derive_seed(self.seed, &format!("trial:{}", self.name), trial_id as u64)
    }
}

/// Validation score of a model trained on fold `fold`.
pub trait Objective: Sync {
    fn score(&self, fold: usize, model: &TrainedModel) -> Result<f64, String>;
}

impl<F> Objective for F
where
    F: Fn(usize, &TrainedModel) -> Result<f64, String> + Sync,
{
    fn score(&self, fold: usize, model: &TrainedModel) -> Result<f64, String> {
        self(fold, model)
    }
}

/// Callbacks from worker threads at trial boundaries.
pub trait StudyObserver: Sync {
    fn trial_started(&self, _name: &str, _trial_id: usize, _config: &ModelConfig) {}
    fn trial_finished(&self, _trial: &Trial) {}
}

impl StudyObserver for () {}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub name: String,
    pub family: Family,
    /// Ordered by trial id.
    pub trials: Vec<Trial>,
    pub best: usize,
    /// The best trial's model on the first training fold.
    pub best_model: TrainedModel,
    pub asha_log: Vec<AshaLogEntry>,
    pub wall_time_s: f64,
}

impl StudyResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }

    pub fn total_epochs(&self) -> usize {
        self.trials.iter().map(|t| t.epochs).sum()
    }
}

struct Shared<'a> {
    spec: &'a StudySpec,
    asha: Option<AshaConfig>,
    trains: &'a [Dataset],
    objective: &'a dyn Objective,
    observer: &'a dyn StudyObserver,
    study_deadline: Option<Instant>,
    rungs: Mutex<(Vec<Vec<f64>>, Vec<AshaLogEntry>)>,
    best: Mutex<Option<(f64, usize, TrainedModel)>>,
    log: Mutex<Option<File>>,
}

impl Shared<'_> {
    fn better(&self, a: (f64, usize), b: (f64, usize)) -> bool {
        self.spec.direction.better(a.0, b.0) || (a.0 == b.0 && a.1 < b.1)
    }

    fn offer_best(&self, value: f64, id: usize, model: TrainedModel) {
        let mut best = self.best.lock().unwrap();
        if best.as_ref().is_none_or(|(v, i, _)| self.better((value, id), (*v, *i))) {
            *best = Some((value, id, model));
        }
    }

    fn append_log(&self, t: &Trial) {
        let mut log = self.log.lock().unwrap();
        if let Some(f) = log.as_mut() {
            let line = serde_json::to_string(t).expect("trial serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("study log write failed: {e}");
            }
        }
    }

    fn deadline(&self, start: Instant) -> Deadline {
        let trial = self.spec.trial_timeout.and_then(|d| start.checked_add(d));
        match (trial, self.study_deadline) {
            (Some(a), Some(b)) => Deadline::at(a.min(b)),
            (Some(a), None) | (None, Some(a)) => Deadline::at(a),
            (None, None) => Deadline::none(),
        }
    }

    fn evaluate(&self, trainers: &[ModelTrainer]) -> Result<(f64, TrainedModel), String> {
        let mut first = None;
        let mut sum = 0.0;
        for (f, t) in trainers.iter().enumerate() {
            let m = t.model().ok_or("no model after training")?;
            sum += self.objective.score(f, &m)?;
            if f == 0 {
                first = Some(m);
            }
        }
        let value = sum / trainers.len() as f64;
        if !value.is_finite() {
            return Err(format!("non-finite validation metric {value}"));
        }
        Ok((value, first.expect("at least one fold")))
    }

    fn run_trial(&self, trial_id: usize, config: ModelConfig) -> Trial {
        let spec = self.spec;
        let start = Instant::now();
        let mut trial = Trial {
            trial_id,
            model: spec.name.clone(),
            seed: spec.trial_seed(trial_id),
            config,
            status: TrialStatus::Running,
            history: Vec::new(),
            epochs: 0,
            wall_time_s: 0.0,
            stage: format!("tune:{}", spec.name),
            error: None,
        };
        self.observer.trial_started(&spec.name, trial_id, &trial.config);
        let deadline = self.deadline(start);
        let outcome = self.train(&mut trial, &deadline);
        trial.status = match outcome {
            Ok(s) => s,
            Err(TrialFailure::Model(ModelError::TimeLimitExceeded)) => TrialStatus::TimeLimitExceeded,
            Err(TrialFailure::Model(e)) => {
                trial.error = Some(e.to_string());
                TrialStatus::Failed
            }
            Err(TrialFailure::Objective(e)) => {
                trial.error = Some(e);
                TrialStatus::Failed
            }
        };
        trial.wall_time_s = start.elapsed().as_secs_f64();
        self.append_log(&trial);
        self.observer.trial_finished(&trial);
        trial
    }

    fn train(&self, trial: &mut Trial, deadline: &Deadline) -> Result<TrialStatus, TrialFailure> {
        let mut trainers = self
            .trains
            .iter()
            .map(|d| ModelTrainer::new(&trial.config, d, trial.seed))
            .collect::<Result<Vec<_>, _>>()?;
        let mut target = trainers[0].total_epochs();
        if let Some(a) = &self.asha {
            target = target.min(a.max_budget);
        }
        let every_epoch = self.spec.early_stopping.is_some();
        for epoch in 1..=target {
            for t in trainers.iter_mut() {
                t.step(deadline)?;
            }
            trial.epochs = epoch;
            let rung = self.asha.as_ref().and_then(|a| a.rung_of(epoch));
            if !(epoch == target || every_epoch || rung.is_some()) {
                continue;
            }
            let (value, model) = self.evaluate(&trainers).map_err(TrialFailure::Objective)?;
            deadline.check()?;
            trial.history.push(HistoryPoint { epoch, value });

            if let (Some(a), Some(r)) = (&self.asha, rung) {
                let decision = {
                    let mut guard = self.rungs.lock().unwrap();
                    let (records, log) = &mut *guard;
                    records[r].push(value);
                    let d = asha_decide(records, r, value, a);
                    log.push(AshaLogEntry {
                        trial_id: trial.trial_id,
                        rung: r,
                        epochs: epoch,
                        value,
                        records: records[r].clone(),
                        decision: d,
                    });
                    d
                };
                if decision == AshaDecision::Stop && epoch < target {
                    return Ok(TrialStatus::StoppedByScheduler);
                }
            }
            if let Some(es) = &self.spec.early_stopping {
                let sign = match self.spec.direction {
                    Direction::Maximize => 1.0,
                    Direction::Minimize => -1.0,
                };
                let h: Vec<f64> = trial.history.iter().map(|p| sign * p.value).collect();
                if epoch < target && early_stop(&h, es.patience, es.min_delta) {
                    self.offer_best(value, trial.trial_id, model);
                    return Ok(TrialStatus::StoppedEarly);
                }
            }
            if epoch == target {
                self.offer_best(value, trial.trial_id, model);
            }
        }
        Ok(TrialStatus::Completed)
    }
}

enum TrialFailure {
    Model(ModelError),
    Objective(String),
}

impl From<ModelError> for TrialFailure {
    fn from(e: ModelError) -> Self {
        TrialFailure::Model(e)
    }
}

/// Runs every configuration of `spec` on a pool of `spec.workers` threads.
///
/// `trains` holds one training set per fold; a trial's validation metric is the mean of
/// `objective` over folds. Trial seeds depend only on the study seed, name and trial id,
/// so FIFO results do not depend on the worker count.
pub fn run_study(
    spec: &StudySpec,
    trains: &[Dataset],
    objective: &dyn Objective,
    observer: &dyn StudyObserver,
) -> Result<StudyResult, TuneError> {
    if spec.workers < 1 {
        return Err(TuneError::InvalidStudy("workers must be >= 1".into()));
    }
    if trains.is_empty() {
        return Err(TuneError::InvalidStudy("no training folds".into()));
    }
    let asha = match &spec.scheduler {
        Scheduler::Fifo => None,
        Scheduler::Asha(a) => {
            a.validate()?;
            Some(AshaConfig {
                direction: spec.direction,
                ..a.clone()
            })
        }
    };
    if let Some(es) = &spec.early_stopping {
        if es.patience < 1 || !es.min_delta.is_finite() || es.min_delta < 0.0 {
            return Err(TuneError::InvalidStudy(
                "early stopping needs patience >= 1 and min_delta >= 0".into(),
            ));
        }
    }
    let configs = spec.configs()?;
    if configs.is_empty() {
        return Err(TuneError::InvalidStudy("the search produced no configurations".into()));
    }
    let log = match &spec.log_path {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| TuneError::Io(p.clone(), e))?,
        ),
        None => None,
    };
    let start = Instant::now();
    let n_rungs = asha.as_ref().map_or(0, |a| a.rungs().len());
    let shared = Shared {
        spec,
        asha,
        trains,
        objective,
        observer,
        study_deadline: spec.budget.and_then(|b| start.checked_add(b)),
        rungs: Mutex::new((vec![Vec::new(); n_rungs], Vec::new())),
        best: Mutex::new(None),
        log: Mutex::new(log),
    };
    let slots: Vec<Mutex<Option<Trial>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..spec.workers.min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                if shared.study_deadline.is_some_and(|d| Instant::now() >= d) {
                    continue;
                }
                let t = shared.run_trial(i, configs[i].clone());
                *slots[i].lock().unwrap() = Some(t);
            });
        }
    });
    let trials: Vec<Trial> = slots
        .into_iter()
        .zip(configs)
        .enumerate()
        .map(|(i, (slot, config))| {
            slot.into_inner().unwrap().unwrap_or_else(|| Trial {
                trial_id: i,
                model: spec.name.clone(),
                seed: spec.trial_seed(i),
                config,
                status: TrialStatus::Pending,
                history: Vec::new(),
                epochs: 0,
                wall_time_s: 0.0,
                stage: format!("tune:{}", spec.name),
                error: None,
            })
        })
        .collect();
    let (_, asha_log) = shared.rungs.into_inner().unwrap();
    match shared.best.into_inner().unwrap() {
        Some((_, best, best_model)) => Ok(StudyResult {
            name: spec.name.clone(),
            family: spec.family,
            trials,
            best,
            best_model,
            asha_log,
            wall_time_s: start.elapsed().as_secs_f64(),
        }),
        None => Err(TuneError::NoEligibleTrial {
            name: spec.name.clone(),
            trials: Box::new(trials),
        }),
    }
}
