use super::{EvalError, SystemMetric};
use crate::ingest::Dataset;
use crate::models::RecommendationList;

/// Share of interactions covered by the short head when splitting items for APLT.
pub const DEFAULT_SHORT_HEAD_SHARE: f64 = 0.8;

pub const SYSTEM_METRICS: [&str; 7] = [
    "ItemCoverage",
    "UserCoverage",
    "Gini",
    "ShannonEntropy",
    "EPC",
    "ARP",
    "APLT",
];

/// Items in the smallest popularity-sorted prefix (descending count, ties by index)
/// whose interactions reach `share` of the total.
pub fn short_head(train: &Dataset, share: f64) -> Vec<bool> {
    let counts = train.item_degrees();
    let total: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut head = vec![false; counts.len()];
    let target = share * total as f64;
    let mut acc = 0usize;
    for i in order {
        if acc as f64 >= target {
            break;
        }
        head[i] = true;
        acc += counts[i];
    }
    head
}

/// Catalog-level exposure metrics over the first `k` positions of every list.
pub fn compute_exposure(
    recs: &RecommendationList,
    train: &Dataset,
    k: usize,
    short_head_share: f64,
) -> Result<Vec<SystemMetric>, EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidCutoff);
    }
    let n_items = train.n_items();
    let mut rec_counts = vec![0usize; n_items];
    let mut slots = 0usize;
    for l in &recs.lists {
        for s in l.items.iter().take(k) {
            rec_counts[s.item as usize] += 1;
            slots += 1;
        }
    }
    if slots == 0 {
        return Err(EvalError::EmptyRecommendations);
    }
    let pop = train.item_degrees();
    let max_pop = pop.iter().copied().max().unwrap_or(0).max(1) as f64;
    let head = short_head(train, short_head_share);

    let distinct = rec_counts.iter().filter(|&&c| c > 0).count();
    let users_with_list = recs.lists.iter().filter(|l| !l.items.is_empty()).count();

    let mut sorted = rec_counts.clone();
    sorted.sort_unstable();
    let n = n_items as f64;
    let gini = sorted
        .iter()
        .enumerate()
        .map(|(i, &c)| (2.0 * (i + 1) as f64 - n - 1.0) * c as f64)
        .sum::<f64>()
        / (n * slots as f64);

    let entropy = -rec_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / slots as f64;
            p * p.log2()
        })
        .sum::<f64>();

    let mut epc = 0.0;
    let mut arp = 0.0;
    let mut tail = 0usize;
    for (i, &c) in rec_counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        epc += c as f64 * (1.0 - pop[i] as f64 / max_pop);
        arp += c as f64 * pop[i] as f64;
        if !head[i] {
            tail += c;
        }
    }
    let slots_f = slots as f64;
    let values = [
        distinct as f64 / n,
        users_with_list as f64 / recs.lists.len() as f64,
        gini,
        entropy,
        epc / slots_f,
        arp / slots_f,
        tail as f64 / slots_f,
    ];
    Ok(SYSTEM_METRICS
        .iter()
        .zip(values)
        .map(|(name, value)| SystemMetric {
            name: (*name).to_owned(),
            k,
            value,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, DedupPolicy, RawInteraction};
    use crate::models::{ItemScore, UserRecommendations};

    fn recs(lists: &[&[u32]]) -> RecommendationList {
        RecommendationList {
            k: 10,
            filter_seen: false,
            lists: lists
                .iter()
                .enumerate()
                .map(|(u, items)| UserRecommendations {
                    user: u as u32,
                    items: items.iter().map(|&item| ItemScore { item, score: 0.0 }).collect(),
                })
                .collect(),
        }
    }

    fn train(counts: &[usize]) -> Dataset {
        let mut r = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for u in 0..c {
                r.push(RawInteraction::implicit(format!("u{u}"), format!("i{i}")));
            }
        }
        build_dataset(r, DedupPolicy::Error).unwrap()
    }

    fn get(m: &[SystemMetric], name: &str) -> f64 {
        m.iter().find(|x| x.name == name).unwrap().value
    }

    #[test]
    fn uniform_exposure() {
        let t = train(&[3, 2, 1, 1]);
        let m = compute_exposure(&recs(&[&[0, 1], &[2, 3]]), &t, 10, 0.8).unwrap();
        assert!(get(&m, "Gini").abs() < 1e-15);
        assert!((get(&m, "ShannonEntropy") - 2.0).abs() < 1e-15);
        assert_eq!(get(&m, "ItemCoverage"), 1.0);
    }

    #[test]
    fn single_popular_item() {
        let t = train(&[5, 1, 1, 1]);
        let m = compute_exposure(&recs(&[&[0], &[0], &[0]]), &t, 10, 0.8).unwrap();
        assert_eq!(get(&m, "ItemCoverage"), 0.25);
        assert_eq!(get(&m, "APLT"), 0.0);
        assert_eq!(get(&m, "EPC"), 0.0);
        assert_eq!(get(&m, "ARP"), 5.0);
    }

    #[test]
    fn hand_gini() {
        // catalog of 2 items recommended 1 and 3 times
        let t = train(&[1, 1]);
        let m = compute_exposure(&recs(&[&[0, 1], &[1], &[1]]), &t, 10, 0.8).unwrap();
        assert!((get(&m, "Gini") - 0.25).abs() < 1e-15);
    }

    #[test]
    fn short_head_prefix() {
        // counts 6,2,1,1 (total 10): 6 < 8, 6+2 = 8 reaches 80%
        let t = train(&[6, 2, 1, 1]);
        assert_eq!(short_head(&t, 0.8), vec![true, true, false, false]);
        let m = compute_exposure(&recs(&[&[2, 0], &[3, 1]]), &t, 10, 0.8).unwrap();
        assert_eq!(get(&m, "APLT"), 0.5);
    }

    #[test]
    fn cutoff_and_empty() {
        let t = train(&[1, 1]);
        assert!(matches!(
            compute_exposure(&recs(&[&[]]), &t, 5, 0.8),
            Err(EvalError::EmptyRecommendations)
        ));
        let m = compute_exposure(&recs(&[&[0, 1], &[]]), &t, 1, 0.8).unwrap();
        assert_eq!(get(&m, "ItemCoverage"), 0.5);
        assert_eq!(get(&m, "UserCoverage"), 0.5);
    }
}
