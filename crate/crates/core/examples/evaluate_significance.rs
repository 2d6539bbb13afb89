//! Accuracy and exposure metrics for three models, then pairwise significance tests.

use std::path::PathBuf;

use warpbench::eval::{
    compute_accuracy, compute_exposure, significance_report, AccuracyMetric, Correction, MetricReport,
    RelevanceJudgments, StatTest, DEFAULT_SHORT_HEAD_SHARE,
};
use warpbench::ingest::{build_dataset, load_interactions, DedupPolicy, Schema};
use warpbench::models::{fit, recommend, Deadline, Family, ModelConfig, ParamValue};
use warpbench::prep::{split, SplitMode, SplitSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/ratings.tsv");
    let data = build_dataset(
        load_interactions(&path, &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let parts = split(&data, &SplitSpec::holdout(SplitMode::Random, &[0.8, 0.2], 3))?;
    // ratings of 4 and 5 count as relevant
    let judgments = RelevanceJudgments::from_dataset(&parts.test, Some(4.0));
    let users = judgments.users();
    let ks = [5, 10, 20];

    let models = [
        ("pop", Family::MostPop, vec![]),
        ("itemknn", Family::ItemKnn, vec![("neighbors", ParamValue::Int(25))]),
        ("ease", Family::Ease, vec![("l2", ParamValue::Real(200.0))]),
    ];
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    for (name, family, p) in models {
        let cfg = ModelConfig::from_params(family, &p.into_iter().map(|(k, v)| (k.to_string(), v)).collect())?;
        let model = fit(&cfg, &parts.train, 1, &Deadline::none())?;
        let recs = recommend(&model, &users, 20, true)?;
        let mut report = compute_accuracy(&recs, &judgments, &ks, &AccuracyMetric::ALL)?;
        for k in ks {
            report
                .system
                .extend(compute_exposure(&recs, &parts.train, k, DEFAULT_SHORT_HEAD_SHARE)?);
        }
        reports.push((name.to_string(), report));
    }

    println!(
        "{:<8} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "model", "P@10", "R@10", "nDCG@10", "MRR@10", "cov@10"
    );
    for (name, r) in &reports {
        let v = |m| r.get(m, 10).unwrap().mean;
        println!(
            "{name:<8} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            v(AccuracyMetric::Precision),
            v(AccuracyMetric::Recall),
            v(AccuracyMetric::Ndcg),
            v(AccuracyMetric::Mrr),
            r.system_value("ItemCoverage", 10).unwrap()
        );
    }
    let (_, pop) = &reports[0];
    println!(
        "pop exposure @10: Gini {:.3}  ARP {:.1}  APLT {:.3}",
        pop.system_value("Gini", 10).unwrap(),
        pop.system_value("ARP", 10).unwrap(),
        pop.system_value("APLT", 10).unwrap()
    );

    let borrowed: Vec<(String, &MetricReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    let sig = significance_report(
        &borrowed,
        &[StatTest::PairedT, StatTest::Wilcoxon, StatTest::MannWhitney],
        &[Correction::Bonferroni, Correction::BenjaminiHochberg],
    );
    println!("\nnDCG@10 comparisons ({} tests in total)", sig.comparisons.len());
    for c in sig
        .comparisons
        .iter()
        .filter(|c| c.metric == AccuracyMetric::Ndcg && c.k == 10)
    {
        let r = c.result.as_ref().expect("enough users");
        println!(
            "  {:>7} vs {:<7} {:<12} stat {:>10.3}  p {:.2e}  bonferroni {:.2e}  bh {:.2e}",
            c.model_a,
            c.model_b,
            c.test.name(),
            r.statistic,
            r.p_value,
            r.adjusted["bonferroni"],
            r.adjusted["benjamini-hochberg"]
        );
    }
    Ok(())
}
