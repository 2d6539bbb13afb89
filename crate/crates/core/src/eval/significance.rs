use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::metrics::{AccuracyMetric, MetricReport};
use super::stats::{adjust_bh, adjust_bonferroni, mann_whitney_u, paired_t_test, wilcoxon_signed_rank, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatTest {
    PairedT,
    Wilcoxon,
    MannWhitney,
}

impl StatTest {
    pub const ALL: [StatTest; 3] = [StatTest::PairedT, StatTest::Wilcoxon, StatTest::MannWhitney];

    pub fn name(self) -> &'static str {
        match self {
            StatTest::PairedT => "paired-t",
            StatTest::Wilcoxon => "wilcoxon",
            StatTest::MannWhitney => "mann-whitney",
        }
    }

    fn paired(self) -> bool {
        !matches!(self, StatTest::MannWhitney)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    Bonferroni,
    #[serde(alias = "bh", alias = "fdr")]
    BenjaminiHochberg,
}

impl Correction {
    pub fn name(self) -> &'static str {
        match self {
            Correction::Bonferroni => "bonferroni",
            Correction::BenjaminiHochberg => "benjamini-hochberg",
        }
    }

    pub fn apply(self, p: &[f64]) -> Vec<f64> {
        match self {
            Correction::Bonferroni => adjust_bonferroni(p),
            Correction::BenjaminiHochberg => adjust_bh(p),
        }
    }
}

/// One test between two models on one metric at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub metric: AccuracyMetric,
    pub k: usize,
    pub test: StatTest,
    pub mean_a: f64,
    pub mean_b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TestResult>,
    /// Why no result was produced (e.g. fewer than two shared users).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub models: Vec<String>,
    pub corrections: Vec<Correction>,
    pub comparisons: Vec<Comparison>,
}

impl SignificanceReport {
    pub fn find(&self, a: &str, b: &str, metric: AccuracyMetric, k: usize, test: StatTest) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| {
            c.metric == metric
                && c.k == k
                && c.test == test
                && ((c.model_a == a && c.model_b == b) || (c.model_a == b && c.model_b == a))
        })
    }
}

fn aligned(a: &MetricReport, b: &MetricReport, va: &[f64], vb: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pos: HashMap<u32, usize> = b.users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    a.users
        .iter()
        .enumerate()
        .filter_map(|(i, u)| pos.get(u).map(|&j| (va[i], vb[j])))
        .unzip()
}

/// Every unordered model pair, for every accuracy metric@K present in both reports and
/// every requested test. Paired tests use the users evaluated in both reports.
/// Corrections are applied within each (metric, K, test) family across model pairs.
pub fn significance_report(
    reports: &[(String, &MetricReport)],
    tests: &[StatTest],
    corrections: &[Correction],
) -> SignificanceReport {
    let mut comparisons = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let (na, ra) = &reports[i];
            let (nb, rb) = &reports[j];
            for ma in &ra.accuracy {
                let Some(mb) = rb.get(ma.metric, ma.k) else {
                    continue;
                };
                let paired = aligned(ra, rb, &ma.per_user, &mb.per_user);
                for &test in tests {
                    let outcome = if test.paired() {
                        match test {
                            StatTest::PairedT => paired_t_test(&paired.0, &paired.1),
                            _ => wilcoxon_signed_rank(&paired.0, &paired.1),
                        }
                    } else {
                        mann_whitney_u(&ma.per_user, &mb.per_user)
                    };
                    let (result, error) = match outcome {
                        Ok(r) => (Some(r), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    comparisons.push(Comparison {
                        model_a: na.clone(),
                        model_b: nb.clone(),
                        metric: ma.metric,
                        k: ma.k,
                        test,
                        mean_a: ma.mean,
                        mean_b: mb.mean,
                        result,
                        error,
                    });
                }
            }
        }
    }

    let mut families: BTreeMap<(AccuracyMetric, usize, StatTest), Vec<usize>> = BTreeMap::new();
    for (idx, c) in comparisons.iter().enumerate() {
        if c.result.is_some() {
            families.entry((c.metric, c.k, c.test)).or_default().push(idx);
        }
    }
    for members in families.values() {
        let raw: Vec<f64> = members
            .iter()
            .map(|&i| comparisons[i].result.as_ref().map_or(1.0, |r| r.p_value))
            .collect();
        for &corr in corrections {
            for (&i, adj) in members.iter().zip(corr.apply(&raw)) {
                if let Some(r) = comparisons[i].result.as_mut() {
                    r.adjusted.insert(corr.name().to_owned(), adj);
                }
            }
        }
    }

    SignificanceReport {
        models: reports.iter().map(|(n, _)| n.clone()).collect(),
        corrections: corrections.to_vec(),
        comparisons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::MetricValues;

    fn report(users: Vec<u32>, vals: Vec<f64>) -> MetricReport {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        MetricReport {
            users,
            skipped_users: 0,
            accuracy: vec![MetricValues {
                metric: AccuracyMetric::Ndcg,
                k: 10,
                per_user: vals,
                mean,
            }],
            system: Vec::new(),
        }
    }

    #[test]
    fn two_models_one_comparison_per_metric_and_test() {
        let a = report(vec![0, 1, 2, 3, 4], vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = report(vec![0, 1, 2, 3, 4], vec![0.0; 5]);
        let rep = significance_report(
            &[("a".into(), &a), ("b".into(), &b)],
            &StatTest::ALL,
            &[Correction::Bonferroni],
        );
        assert_eq!(rep.comparisons.len(), 3);
        let t = rep.find("b", "a", AccuracyMetric::Ndcg, 10, StatTest::PairedT).unwrap();
        let r = t.result.as_ref().unwrap();
        assert!((r.statistic - 4.2426).abs() < 1e-4);
        // single comparison per family: correction is the identity
        assert_eq!(r.adjusted["bonferroni"], r.p_value);
    }

    #[test]
    fn paired_alignment_uses_shared_users() {
        let a = report(vec![0, 1, 2], vec![0.5, 1.0, 0.0]);
        let b = report(vec![2, 0], vec![0.0, 0.5]);
        let rep = significance_report(&[("a".into(), &a), ("b".into(), &b)], &[StatTest::PairedT], &[]);
        let r = rep.comparisons[0].result.as_ref().unwrap();
        assert_eq!(r.n, 2);
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn corrections_within_family() {
        let base = report(vec![0, 1, 2, 3, 4, 5], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let up = report(vec![0, 1, 2, 3, 4, 5], vec![0.3, 0.3, 0.6, 0.5, 0.9, 0.8]);
        let far = report(vec![0, 1, 2, 3, 4, 5], vec![1.0, 0.9, 1.0, 0.8, 1.0, 1.0]);
        let rep = significance_report(
            &[("x".into(), &base), ("y".into(), &up), ("z".into(), &far)],
            &[StatTest::PairedT],
            &[Correction::Bonferroni, Correction::BenjaminiHochberg],
        );
        assert_eq!(rep.comparisons.len(), 3);
        for c in &rep.comparisons {
            let r = c.result.as_ref().unwrap();
            assert!((r.adjusted["bonferroni"] - (3.0 * r.p_value).min(1.0)).abs() < 1e-15);
            assert!(r.adjusted["benjamini-hochberg"] <= r.adjusted["bonferroni"]);
            assert!(r.adjusted["benjamini-hochberg"] >= r.p_value);
        }
    }

    #[test]
    fn too_few_shared_users_is_recorded() {
        let a = report(vec![0], vec![1.0]);
        let b = report(vec![0], vec![0.0]);
        let rep = significance_report(&[("a".into(), &a), ("b".into(), &b)], &[StatTest::PairedT], &[]);
        assert!(rep.comparisons[0].result.is_none());
        assert!(rep.comparisons[0].error.is_some());
    }
}
