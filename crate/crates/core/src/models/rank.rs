use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item: u32,
    pub score: f64,
}

/// Higher score first, then lower item index.
#[inline]
fn ranking_order(a: &ItemScore, b: &ItemScore) -> Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
}

/// Exact top-`k` of `scores`, skipping the items in `excluded` (sorted ascending).
/// Returns `min(k, eligible)` entries in ranking order.
pub fn top_k(scores: &[f64], k: usize, excluded: &[u32]) -> Vec<ItemScore> {
    debug_assert!(excluded.windows(2).all(|w| w[0] < w[1]));
    let mut skip = excluded.iter().peekable();
    let mut cands: Vec<ItemScore> = Vec::with_capacity(scores.len() - excluded.len().min(scores.len()));
    for (i, &score) in scores.iter().enumerate() {
        let i = i as u32;
        if skip.peek() == Some(&&i) {
            skip.next();
            continue;
        }
        cands.push(ItemScore { item: i, score });
    }
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, ranking_order);
        cands.truncate(k);
    }
    cands.sort_unstable_by(ranking_order);
    cands
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_by_index() {
        let out = top_k(&[1.0, 2.0, 2.0, 0.5], 3, &[]);
        let ids: Vec<u32> = out.iter().map(|s| s.item).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    #[test]
    fn exclusion() {
        let out = top_k(&[3.0, 2.0, 1.0], 5, &[0, 2]);
        assert_eq!(out, vec![ItemScore { item: 1, score: 2.0 }]);
    }

    proptest! {
        #[test]
        fn matches_full_sort(
            scores in proptest::collection::vec(-5i32..5, 1..60),
            k in 1usize..70,
            mask in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let excluded: Vec<u32> = (0..scores.len() as u32).filter(|&i| mask[i as usize]).collect();
            let mut oracle: Vec<(u32, f64)> = scores
                .iter()
                .enumerate()
                .filter(|(i, _)| !mask[*i])
                .map(|(i, &s)| (i as u32, s))
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            oracle.truncate(k);
            let got: Vec<(u32, f64)> = top_k(&scores, k, &excluded).iter().map(|s| (s.item, s.score)).collect();
            prop_assert_eq!(got, oracle);
        }
    }
}
