//! Ranking metrics over recommendation lists, catalog exposure metrics and
//! significance testing with multiple-comparison corrections.

mod exposure;
mod metrics;
mod significance;
mod stats;

pub use exposure::{compute_exposure, short_head, DEFAULT_SHORT_HEAD_SHARE, SYSTEM_METRICS};
pub use metrics::{compute_accuracy, AccuracyMetric, MetricReport, MetricValues, RelevanceJudgments, SystemMetric};
pub use significance::{significance_report, Comparison, Correction, SignificanceReport, StatTest};
pub use stats::{
    adjust_bh, adjust_bonferroni, average_ranks, mann_whitney_u, paired_t_test, wilcoxon_signed_rank, Method,
    TestResult, MANN_WHITNEY_EXACT_MAX, WILCOXON_EXACT_MAX,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("cutoff must be at least 1")]
    InvalidCutoff,
    #[error("cutoff {k} exceeds recommendation list length {list}")]
    CutoffAboveList { k: usize, list: usize },
    #[error("no user has a relevant test item")]
    NoEvaluatedUsers,
    #[error("recommendation set is empty")]
    EmptyRecommendations,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}
