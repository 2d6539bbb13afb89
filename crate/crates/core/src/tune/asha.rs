use serde::{Deserialize, Serialize};

use super::TuneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }
}

fn default_eta() -> u32 {
    2
}

/// Successive-halving schedule in epochs: rungs sit at `min_budget · etaᵏ ≤ max_budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AshaConfig {
    #[serde(default = "default_eta")]
    pub eta: u32,
    pub min_budget: usize,
    pub max_budget: usize,
    #[serde(default)]
    pub direction: Direction,
}

impl AshaConfig {
    pub fn new(eta: u32, min_budget: usize, max_budget: usize) -> Self {
        Self {
            eta,
            min_budget,
            max_budget,
            direction: Direction::Maximize,
        }
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        if self.eta < 2 {
            return Err(TuneError::InvalidScheduler("eta must be >= 2".into()));
        }
        if self.min_budget < 1 || self.min_budget > self.max_budget {
            return Err(TuneError::InvalidScheduler(format!(
                "need 1 <= min_budget <= max_budget, got {} and {}",
                self.min_budget, self.max_budget
            )));
        }
        Ok(())
    }

    /// Epoch budgets of the rungs, ascending.
    pub fn rungs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut b = self.min_budget;
        while b <= self.max_budget {
            out.push(b);
            b *= self.eta as usize;
        }
        out
    }

    pub fn rung_of(&self, epochs: usize) -> Option<usize> {
        self.rungs().iter().position(|&b| b == epochs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AshaDecision {
    Promote,
    Stop,
    /// Top rung: the trial runs to completion.
    Continue,
}

/// Asynchronous promotion rule.
///
/// `rung_records[rung]` must already contain `value`. With `n` results at the rung,
/// the trial is promoted iff fewer than `max(1, ⌊n/η⌋)` results are strictly better,
/// so the first result at a rung is promoted.
pub fn asha_decide(rung_records: &[Vec<f64>], rung: usize, value: f64, cfg: &AshaConfig) -> AshaDecision {
    if rung + 1 >= cfg.rungs().len() {
        return AshaDecision::Continue;
    }
    let records = &rung_records[rung];
    let slots = (records.len() / cfg.eta as usize).max(1);
    let better = records.iter().filter(|&&r| cfg.direction.better(r, value)).count();
    if better < slots {
        AshaDecision::Promote
    } else {
        AshaDecision::Stop
    }
}

/// One scheduler decision with the rung state it was taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AshaLogEntry {
    pub trial_id: usize,
    pub rung: usize,
    pub epochs: usize,
    pub value: f64,
    /// Results recorded at this rung when deciding, in arrival order, including `value`.
    pub records: Vec<f64>,
    pub decision: AshaDecision,
}

/// Replays a decision log: rung states must evolve by appending, and every decision
/// must follow from the state it records.
pub fn validate_asha_log(log: &[AshaLogEntry], cfg: &AshaConfig) -> Result<(), String> {
    let rungs = cfg.rungs();
    let mut state: Vec<Vec<f64>> = vec![Vec::new(); rungs.len()];
    for (k, e) in log.iter().enumerate() {
        if e.rung >= rungs.len() || rungs[e.rung] != e.epochs {
            return Err(format!(
                "entry {k}: rung {} does not sit at {} epochs",
                e.rung, e.epochs
            ));
        }
        if e.epochs > cfg.max_budget {
            return Err(format!("entry {k}: {} epochs exceed the budget", e.epochs));
        }
        state[e.rung].push(e.value);
        if state[e.rung] != e.records {
            return Err(format!("entry {k}: recorded rung state diverges from the replay"));
        }
        let want = asha_decide(&state, e.rung, e.value, cfg);
        if want != e.decision {
            return Err(format!("entry {k}: logged {:?}, rule gives {want:?}", e.decision));
        }
        if e.decision == AshaDecision::Promote {
            let slots = (e.records.len() / cfg.eta as usize).max(1);
            let better = e.records.iter().filter(|&&r| cfg.direction.better(r, e.value)).count();
            if better >= slots {
                return Err(format!("entry {k}: promotion outside the top {slots}"));
            }
        }
        if e.rung > 0 {
            let promoted = log[..k]
                .iter()
                .any(|p| p.trial_id == e.trial_id && p.rung + 1 == e.rung && p.decision == AshaDecision::Promote);
            if !promoted {
                return Err(format!(
                    "entry {k}: trial {} reached rung {} without promotion",
                    e.trial_id, e.rung
                ));
            }
        }
    }
    Ok(())
}

/// True iff the last `patience` evaluations brought no improvement larger than
/// `min_delta` over the best value before them (higher is better).
pub fn early_stop(history: &[f64], patience: usize, min_delta: f64) -> bool {
    let Some((&first, rest)) = history.split_first() else {
        return false;
    };
    let mut best = first;
    let mut stale = 0usize;
    for &v in rest {
        if v > best + min_delta {
            best = v;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    patience > 0 && stale >= patience
}
