//! Declarative experiments: a strict TOML config, the train / design / eval pipelines
//! and stage hooks.

mod config;
mod events;
mod run;

pub use config::{
    CatalogConfig, DatasetConfig, EvalInputs, EvaluationConfig, ExperimentConfig, ModelBlock, ReportingConfig,
    SplitConfig, TuningConfig,
};
pub use events::{validate_trace, EventRecorder, PipelineEvent, PipelineHook, Stage};
pub use run::{
    eval_checkpoints, eval_output_dir, run_design_pipeline, run_eval_pipeline, run_train_pipeline, RunOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl PipelineError {
    /// Process exit code: 1 for config errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Runtime(_) => 2,
        }
    }
}
