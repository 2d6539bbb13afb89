//! Random search over BPR-MF, once with FIFO and once with ASHA, on a pool of workers.

use std::path::PathBuf;

use warpbench::eval::{compute_accuracy, AccuracyMetric, RelevanceJudgments};
use warpbench::ingest::{build_dataset, load_interactions, DedupPolicy, Schema};
use warpbench::models::{recommend, Family, ParamValue, TrainedModel};
use warpbench::prep::{split, SplitMode, SplitSpec, SplitStrategy};
use warpbench::tune::{run_study, validate_asha_log, AshaConfig, Domain, Scheduler, Search, SearchSpace, StudySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/ratings.tsv");
    let data = build_dataset(
        load_interactions(&path, &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let parts = split(
        &data,
        &SplitSpec::new(
            SplitStrategy::LeaveKOut {
                mode: SplitMode::Temporal,
                k: 2,
                validation_k: 2,
            },
            5,
        ),
    )?;
    let validation = parts.validation.clone().expect("validation_k > 0");
    let judgments = RelevanceJudgments::from_dataset(&validation, None);
    let users = judgments.users();

    let objective = |_fold: usize, m: &TrainedModel| -> Result<f64, String> {
        let recs = recommend(m, &users, 10, true).map_err(|e| e.to_string())?;
        let report = compute_accuracy(&recs, &judgments, &[10], &[AccuracyMetric::Ndcg]).map_err(|e| e.to_string())?;
        Ok(report.accuracy[0].mean)
    };

    let space = SearchSpace::new()
        .with(
            "factors",
            Domain::Categorical(vec![ParamValue::Int(8), ParamValue::Int(32)]),
        )
        .with(
            "learning_rate",
            Domain::Real {
                low: 0.005,
                high: 0.2,
                log: true,
            },
        )
        .with(
            "regularization",
            Domain::Real {
                low: 0.0,
                high: 0.05,
                log: false,
            },
        )
        .with("epochs", Domain::Categorical(vec![ParamValue::Int(16)]));
    let mut spec = StudySpec::new("bpr", Family::BprMf, space, 11);
    spec.search = Search::Random { trials: 12 };
    spec.workers = 4;

    for scheduler in [Scheduler::Fifo, Scheduler::Asha(AshaConfig::new(2, 2, 16))] {
        spec.scheduler = scheduler.clone();
        let result = run_study(&spec, std::slice::from_ref(&parts.train), &objective, &())?;
        let best = result.best_trial();
        println!(
            "{:<5} {:>3} epochs in {:.2}s  best trial {} nDCG@10 {:.4}  {:?}",
            if matches!(scheduler, Scheduler::Fifo) {
                "fifo"
            } else {
                "asha"
            },
            result.total_epochs(),
            result.wall_time_s,
            best.trial_id,
            best.metric().unwrap_or(f64::NAN),
            best.config
        );
        for t in &result.trials {
            println!("    trial {:>2} {:?} after {} epochs", t.trial_id, t.status, t.epochs);
        }
        if let Scheduler::Asha(cfg) = &scheduler {
            validate_asha_log(&result.asha_log, cfg)?;
            println!(
                "    promotion log replays cleanly ({} decisions)",
                result.asha_log.len()
            );
        }
    }
    Ok(())
}
