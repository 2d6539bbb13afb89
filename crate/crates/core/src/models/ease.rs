use super::linalg::{gram_lower, spd_inverse};
use super::{Deadline, EaseParams, ModelConfig, ModelError, ModelState, TrainedModel};
use crate::ingest::Dataset;

/// Closed-form EASE^R.
///
/// With `G = XᵀX + l2·I` and `P = G⁻¹`, the item-item weights are
/// `B = I - P·diag(1 / diag(P))`, i.e. `B[i][j] = -P[i][j] / P[j][j]` off the diagonal
/// and exactly zero on it.
pub fn fit_ease(train: &Dataset, params: &EaseParams, deadline: &Deadline) -> Result<TrainedModel, ModelError> {
    ModelConfig::Ease(params.clone()).validate()?;
    let n = train.n_items();
    if n > params.max_items {
        return Err(ModelError::DenseCapExceeded {
            items: n,
            cap: params.max_items,
        });
    }
    if train.matrix().values().iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Factorization("non-finite interaction value".into()));
    }
    let gram = gram_lower(train.matrix(), params.l2);
    deadline.check()?;
    let expired = || deadline.expired();
    let p = spd_inverse(gram, n, &expired)
        .map_err(ModelError::Factorization)?
        .ok_or(ModelError::TimeLimitExceeded)?;
    let diag: Vec<f64> = (0..n).map(|j| p[j * n + j]).collect();
    let mut weights = p;
    for (i, row) in weights.chunks_mut(n.max(1)).enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            *w = if i == j { 0.0 } else { -*w / diag[j] };
        }
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(ModelError::Factorization("non-finite weights".into()));
    }
    deadline.check()?;
    Ok(TrainedModel::new(
        ModelConfig::Ease(params.clone()),
        ModelState::Ease { weights },
        train,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, DedupPolicy, RawInteraction};
    use crate::models::{recommend_from_items, DEFAULT_EASE_MAX_ITEMS};

    fn two_items() -> Dataset {
        // X = [[1, 1], [1, 0]]
        build_dataset(
            vec![
                RawInteraction::implicit("u0", "i0"),
                RawInteraction::implicit("u0", "i1"),
                RawInteraction::implicit("u1", "i0"),
            ],
            DedupPolicy::Error,
        )
        .unwrap()
    }

    fn weights(m: &TrainedModel) -> &[f64] {
        match m.state() {
            ModelState::Ease { weights } => weights,
            _ => unreachable!(),
        }
    }

    fn params(l2: f64) -> EaseParams {
        EaseParams {
            l2,
            max_items: DEFAULT_EASE_MAX_ITEMS,
        }
    }

    #[test]
    fn hand_derived_two_by_two() {
        let m = fit_ease(&two_items(), &params(1.0), &Deadline::none()).unwrap();
        let b = weights(&m);
        let want = [0.0, 1.0 / 3.0, 0.5, 0.0];
        for (x, y) in b.iter().zip(want) {
            assert!((x - y).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn huge_l2_shrinks_to_zero() {
        let m = fit_ease(&two_items(), &params(1e9), &Deadline::none()).unwrap();
        assert!(weights(&m).iter().all(|w| w.abs() < 1e-6));
    }

    #[test]
    fn sequence_reads_weight_row() {
        let m = fit_ease(&two_items(), &params(1.0), &Deadline::none()).unwrap();
        let out = recommend_from_items(&m, &["i0"], 5).unwrap();
        assert_eq!(out.items.len(), 1);
        assert_eq!(out.items[0].item, 1);
        assert!((out.items[0].score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cap_enforced() {
        let p = EaseParams { l2: 1.0, max_items: 1 };
        assert!(matches!(
            fit_ease(&two_items(), &p, &Deadline::none()),
            Err(ModelError::DenseCapExceeded { items: 2, cap: 1 })
        ));
    }
}
