use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::EvalError;

/// Largest number of non-zero differences for which Wilcoxon is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;
/// Largest combined sample size for which Mann-Whitney is enumerated exactly.
pub const MANN_WHITNEY_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApproximation,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: Method,
    /// Zero variance or no usable differences; the p-value follows a fixed rule.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// Adjusted p-values by correction name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub adjusted: BTreeMap<String, f64>,
}

fn result(test: &str, statistic: f64, p: f64, n: usize, method: Method) -> TestResult {
    TestResult {
        test: test.to_owned(),
        statistic,
        p_value: p.clamp(0.0, 1.0),
        n,
        method,
        degenerate: false,
        df: None,
        adjusted: BTreeMap::new(),
    }
}

fn std_normal_two_sided(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).min(1.0)
}

/// Average ranks (1-based) of `v`, plus the tie-group sizes.
pub fn average_ranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

fn check_paired(a: &[f64], b: &[f64]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

/// Two-sided paired Student t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TestResult, EvalError> {
    check_paired(a, b)?;
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples { need: 2, got: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    let mut r = if var == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        let mut r = result("paired-t", t, p, n, Method::StudentT);
        r.degenerate = true;
        r
    } else {
        let t = mean / (var.sqrt() / nf.sqrt());
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        result("paired-t", t, 2.0 * dist.sf(t.abs()), n, Method::StudentT)
    };
    r.df = Some(df);
    Ok(r)
}

/// Number of subsets of `weights` with each total (weights are non-negative integers).
fn subset_sum_counts(weights: &[usize]) -> Vec<f64> {
    let total: usize = weights.iter().sum();
    let mut c = vec![0.0; total + 1];
    c[0] = 1.0;
    let mut reach = 0;
    for &w in weights {
        for s in (0..=reach).rev() {
            if c[s] != 0.0 {
                c[s + w] += c[s];
            }
        }
        reach += w;
    }
    c
}

/// Two-sided Wilcoxon signed-rank test on `a - b`. Zero differences are dropped and
/// tied magnitudes get average ranks; `statistic` is `min(W+, W-)`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult, EvalError> {
    check_paired(a, b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&x| x != 0.0).collect();
    let n = d.len();
    if n == 0 {
        let mut r = result("wilcoxon", 0.0, 1.0, 0, Method::Exact);
        r.degenerate = true;
        return Ok(r);
    }
    let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = average_ranks(&mags);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);
    if n <= WILCOXON_EXACT_MAX {
        // doubled ranks are integers even with ties
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = subset_sum_counts(&doubled);
        let limit = (2.0 * w).round() as usize;
        let tail: f64 = counts[..=limit].iter().sum();
        let p = 2.0 * tail / 2f64.powi(n as i32);
        Ok(result("wilcoxon", w, p.min(1.0), n, Method::Exact))
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        Ok(result(
            "wilcoxon",
            w,
            std_normal_two_sided(z),
            n,
            Method::NormalApproximation,
        ))
    }
}

/// Two-sided Mann-Whitney U test for independent samples; `statistic` is
/// `min(U_a, U_b)`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::TooFewSamples { need: 1, got: 0 });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let (na, nb) = (a.len(), b.len());
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = average_ranks(&all);
    let ra: f64 = ranks[..na].iter().sum();
    let ua = ra - (na * (na + 1)) as f64 / 2.0;
    let u = ua.min((na * nb) as f64 - ua);
    let n = na + nb;
    if n <= MANN_WHITNEY_EXACT_MAX {
        // counts[k][s]: size-k subsets of the doubled ranks summing to s
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![vec![0.0f64; total + 1]; na + 1];
        counts[0][0] = 1.0;
        for &w in &doubled {
            for k in (0..na).rev() {
                for s in (0..=total - w).rev() {
                    let c = counts[k][s];
                    if c != 0.0 {
                        counts[k + 1][s + w] += c;
                    }
                }
            }
        }
        let obs = (2.0 * ra).round() as usize;
        let all_subsets: f64 = counts[na].iter().sum();
        let lower: f64 = counts[na][..=obs].iter().sum();
        let upper: f64 = counts[na][obs..].iter().sum();
        let p = 2.0 * lower.min(upper) / all_subsets;
        Ok(result("mann-whitney", u, p.min(1.0), n, Method::Exact))
    } else {
        let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
        let mean = naf * nbf / 2.0;
        let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
        let var = naf * nbf / 12.0 * ((nf + 1.0) - tie);
        if var <= 0.0 {
            let mut r = result("mann-whitney", u, 1.0, n, Method::NormalApproximation);
            r.degenerate = true;
            return Ok(r);
        }
        let z = ((ua - mean).abs() - 0.5).max(0.0) / var.sqrt();
        Ok(result(
            "mann-whitney",
            u,
            std_normal_two_sided(z),
            n,
            Method::NormalApproximation,
        ))
    }
}

/// `min(1, m·p)`, order preserved.
pub fn adjust_bonferroni(p: &[f64]) -> Vec<f64> {
    let m = p.len() as f64;
    p.iter().map(|&x| (m * x).min(1.0)).collect()
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn adjust_bh(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let v = (m as f64 * p[i] / (rank + 1) as f64).min(1.0);
        running = running.min(v);
        out[i] = running;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn t_test_golden() {
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert!((r.statistic - 4.242640687).abs() < 1e-8);
        assert_eq!(r.df, Some(4.0));
        assert!((r.p_value - 0.0132356).abs() < 1e-6, "{}", r.p_value);
        let s = paired_t_test(&[0.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.statistic, -r.statistic);
        assert_eq!(s.p_value, r.p_value);
    }

    #[test]
    fn t_test_degenerate() {
        let same = paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(same.degenerate);
        assert_eq!(same.p_value, 1.0);
        let shift = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!(shift.degenerate);
        assert_eq!(shift.p_value, 0.0);
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn wilcoxon_golden() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.25).abs() < 1e-15);
        assert_eq!(r.method, Method::Exact);
        let scaled = wilcoxon_signed_rank(&[10.0, 200.0, 3000.0], &[0.0; 3]).unwrap();
        assert_eq!(scaled.p_value, r.p_value);
        let zero = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.p_value, 1.0);
        let big: Vec<f64> = (1..=30)
            .map(|x| x as f64 * if x % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        let approx = wilcoxon_signed_rank(&big, &[0.0; 30]).unwrap();
        assert_eq!(approx.method, Method::NormalApproximation);
    }

    #[test]
    fn mann_whitney_golden() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        let same = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.statistic, 4.5);
        assert_eq!(same.p_value, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn corrections_golden() {
        let p = [0.01, 0.02, 0.03, 0.04, 0.05];
        for v in adjust_bh(&p) {
            assert!((v - 0.05).abs() < 1e-15);
        }
        assert_eq!(adjust_bonferroni(&[0.01, 0.5, 0.1, 0.1, 0.1])[..2], [0.05, 1.0]);
        assert_eq!(adjust_bh(&[0.3]), vec![0.3]);
        assert_eq!(adjust_bonferroni(&[0.3]), vec![0.3]);
    }

    fn brute_wilcoxon(d: &[f64]) -> f64 {
        let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
        let mags: Vec<f64> = nz.iter().map(|x| x.abs()).collect();
        let (ranks, _) = average_ranks(&mags);
        let total: f64 = ranks.iter().sum();
        let wp: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
        let w = wp.min(total - wp);
        let n = nz.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if s <= w + 1e-9 {
                hits += 1;
            }
        }
        (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
    }

    fn choose_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        if n < k {
            return vec![];
        }
        let mut with = choose_subsets(n - 1, k - 1);
        with.iter_mut().for_each(|s| s.push(n - 1));
        with.extend(choose_subsets(n - 1, k));
        with
    }

    fn brute_mann_whitney(a: &[f64], b: &[f64]) -> f64 {
        let all: Vec<f64> = a.iter().chain(b).copied().collect();
        let (ranks, _) = average_ranks(&all);
        let obs: f64 = ranks[..a.len()].iter().sum();
        let sums: Vec<f64> = choose_subsets(all.len(), a.len())
            .iter()
            .map(|s| s.iter().map(|&i| ranks[i]).sum())
            .collect();
        let lo = sums.iter().filter(|&&s| s <= obs + 1e-9).count() as f64;
        let hi = sums.iter().filter(|&&s| s >= obs - 1e-9).count() as f64;
        (2.0 * lo.min(hi) / sums.len() as f64).min(1.0)
    }

    proptest! {
        #[test]
        fn wilcoxon_exact_matches_enumeration(d in proptest::collection::vec(-3i32..4, 1..12)) {
            let a: Vec<f64> = d.iter().map(|&x| x as f64).collect();
            let r = wilcoxon_signed_rank(&a, &vec![0.0; a.len()]).unwrap();
            if !r.degenerate {
                prop_assert!((r.p_value - brute_wilcoxon(&a)).abs() < 1e-12);
            }
        }

        #[test]
        fn mann_whitney_exact_matches_enumeration(
            a in proptest::collection::vec(0i32..6, 1..7),
            b in proptest::collection::vec(0i32..6, 1..7),
        ) {
            let a: Vec<f64> = a.iter().map(|&x| x as f64).collect();
            let b: Vec<f64> = b.iter().map(|&x| x as f64).collect();
            let r = mann_whitney_u(&a, &b).unwrap();
            prop_assert!((r.p_value - brute_mann_whitney(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn correction_dominance(p in proptest::collection::vec(0.0f64..1.0, 1..30)) {
            let bh = adjust_bh(&p);
            let bf = adjust_bonferroni(&p);
            for i in 0..p.len() {
                prop_assert!(bh[i] <= bf[i] + 1e-15);
                prop_assert!(bh[i] >= p[i] - 1e-15);
            }
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&x, &y| p[x].total_cmp(&p[y]));
            for w in idx.windows(2) {
                prop_assert!(bh[w[0]] <= bh[w[1]] + 1e-15);
            }
        }

        #[test]
        fn exact_and_approximation_agree_near_threshold(
            d in proptest::collection::vec(-1.0f64..1.0, 25),
        ) {
            // exact at n = 25 versus the normal approximation for the same data
            let exact = wilcoxon_signed_rank(&d, &[0.0; 25]).unwrap();
            let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
            let (ranks, ties) = average_ranks(&nz.iter().map(|x| x.abs()).collect::<Vec<_>>());
            let n = nz.len() as f64;
            let wp: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
            let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
            let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie;
            let z = ((wp - n * (n + 1.0) / 4.0).abs() - 0.5).max(0.0) / var.sqrt();
            prop_assert!((exact.p_value - std_normal_two_sided(z)).abs() < 0.02);
        }
    }
}
