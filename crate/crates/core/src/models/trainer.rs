use std::time::{Duration, Instant};

use super::{
    fit_bprmf, fit_ease, fit_itemknn, fit_mostpop, fit_random, fit_userknn, BprTrainer, ModelConfig, ModelError,
    TrainedModel,
};
use crate::ingest::Dataset;

/// Wall-clock limit polled by long-running fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Deadline {
    at: Option<Instant>,
}

impl Deadline {
    pub fn none() -> Self {
        Self { at: None }
    }

    pub fn after(limit: Duration) -> Self {
        Self {
            at: Instant::now().checked_add(limit),
        }
    }

    pub fn at(instant: Instant) -> Self {
        Self { at: Some(instant) }
    }

    pub fn expired(&self) -> bool {
        self.at.is_some_and(|t| Instant::now() >= t)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.expired() {
            Err(ModelError::TimeLimitExceeded)
        } else {
            Ok(())
        }
    }
}

/// Fits any family. `seed` backs the stochastic families when their config has none.
pub fn fit(config: &ModelConfig, train: &Dataset, seed: u64, deadline: &Deadline) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    deadline.check()?;
    let m = match config {
        ModelConfig::MostPop => fit_mostpop(train),
        ModelConfig::Random { seed: s } => fit_random(train, s.unwrap_or(seed)),
        ModelConfig::ItemKnn(p) => fit_itemknn(train, p, deadline)?,
        ModelConfig::UserKnn(p) => fit_userknn(train, p, deadline)?,
        ModelConfig::Ease(p) => fit_ease(train, p, deadline)?,
        ModelConfig::BprMf(p) => fit_bprmf(train, p, seed, deadline)?,
    };
    deadline.check()?;
    Ok(m)
}

#[allow(clippy::large_enum_variant)]
enum Stage {
    OneShot {
        config: ModelConfig,
        train: Dataset,
        seed: u64,
        model: Option<TrainedModel>,
    },
    Iterative(Box<BprTrainer>),
}

/// Uniform epoch-stepping view over every family.
///
/// Closed-form and neighbourhood models take a single "epoch"; BPR-MF takes one step
/// per SGD epoch, which lets a scheduler allocate budget in epochs.
pub struct ModelTrainer {
    stage: Stage,
}

impl ModelTrainer {
    pub fn new(config: &ModelConfig, train: &Dataset, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let stage = match config {
            ModelConfig::BprMf(p) => Stage::Iterative(Box::new(BprTrainer::new(train, p, seed)?)),
            other => Stage::OneShot {
                config: other.clone(),
                train: train.clone(),
                seed,
                model: None,
            },
        };
        Ok(Self { stage })
    }

    pub fn total_epochs(&self) -> usize {
        match &self.stage {
            Stage::OneShot { .. } => 1,
            Stage::Iterative(t) => t.total_epochs(),
        }
    }

    pub fn epochs_done(&self) -> usize {
        match &self.stage {
            Stage::OneShot { model, .. } => usize::from(model.is_some()),
            Stage::Iterative(t) => t.epochs_done(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done() >= self.total_epochs()
    }

    /// Advances by one epoch; a no-op once finished.
    pub fn step(&mut self, deadline: &Deadline) -> Result<(), ModelError> {
        if self.is_finished() {
            return Ok(());
        }
        match &mut self.stage {
            Stage::OneShot {
                config,
                train,
                seed,
                model,
            } => *model = Some(fit(config, train, *seed, deadline)?),
            Stage::Iterative(t) => {
                t.train_epoch(deadline)?;
            }
        }
        Ok(())
    }

    /// The model at the current epoch, or `None` before the first step.
    pub fn model(&self) -> Option<TrainedModel> {
        match &self.stage {
            Stage::OneShot { model, .. } => model.clone(),
            Stage::Iterative(t) => (t.epochs_done() > 0).then(|| t.model()),
        }
    }
}
