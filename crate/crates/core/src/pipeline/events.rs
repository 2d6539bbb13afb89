use std::collections::HashSet;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Filter,
    Split,
    TrialStart,
    TrialEnd,
    Evaluate,
    Write,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Split => "split",
            Stage::TrialStart => "trial-start",
            Stage::TrialEnd => "trial-end",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        }
    }

    /// Position in the pipeline; trial starts and ends share one.
    fn order(self) -> u8 {
        match self {
            Stage::Ingest => 0,
            Stage::Filter => 1,
            Stage::Split => 2,
            Stage::TrialStart | Stage::TrialEnd => 3,
            Stage::Evaluate => 4,
            Stage::Write => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    pub summary: String,
}

/// Stage-boundary callback. Trial events arrive from tuning worker threads.
pub trait PipelineHook: Sync {
    fn on_event(&self, event: &PipelineEvent);
}

impl<F: Fn(&PipelineEvent) + Sync> PipelineHook for F {
    fn on_event(&self, event: &PipelineEvent) {
        self(event)
    }
}

/// Hook that keeps every event in arrival order.
#[derive(Debug, Default)]
pub struct EventRecorder {
    events: Mutex<Vec<PipelineEvent>>,
}

impl EventRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<PipelineEvent> {
        self.events.lock().expect("recorder lock").clone()
    }
}

impl PipelineHook for EventRecorder {
    fn on_event(&self, event: &PipelineEvent) {
        self.events.lock().expect("recorder lock").push(event.clone());
    }
}

/// Checks that stages never go backwards and that every trial start has exactly one
/// matching end.
pub fn validate_trace(events: &[PipelineEvent]) -> Result<(), String> {
    let mut open: HashSet<(Option<&str>, Option<usize>)> = HashSet::new();
    let mut last = 0u8;
    for (i, e) in events.iter().enumerate() {
        if e.stage.order() < last {
            return Err(format!("event {i} ({}) arrives after a later stage", e.stage.name()));
        }
        last = e.stage.order();
        let key = (e.model.as_deref(), e.trial);
        match e.stage {
            Stage::TrialStart if !open.insert(key) => {
                return Err(format!("event {i}: trial {key:?} started twice"));
            }
            Stage::TrialEnd if !open.remove(&key) => {
                return Err(format!("event {i}: trial {key:?} ended without a start"));
            }
            _ => {}
        }
    }
    match open.iter().next() {
        Some(k) => Err(format!("trial {k:?} never ended")),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(stage: Stage, trial: Option<usize>) -> PipelineEvent {
        PipelineEvent {
            stage,
            model: trial.map(|_| "m".to_owned()),
            trial,
            summary: String::new(),
        }
    }

    #[test]
    fn valid_and_invalid_traces() {
        let good = vec![
            ev(Stage::Ingest, None),
            ev(Stage::Split, None),
            ev(Stage::TrialStart, Some(0)),
            ev(Stage::TrialStart, Some(1)),
            ev(Stage::TrialEnd, Some(1)),
            ev(Stage::TrialEnd, Some(0)),
            ev(Stage::Evaluate, None),
            ev(Stage::Write, None),
        ];
        validate_trace(&good).unwrap();
        let mut unmatched = good.clone();
        unmatched.remove(4);
        assert!(validate_trace(&unmatched).is_err());
        let mut backwards = good.clone();
        backwards.swap(0, 1);
        assert!(validate_trace(&backwards).is_err());
    }
}
