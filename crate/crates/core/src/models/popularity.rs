use rand::Rng;

use super::{ModelConfig, ModelState, TrainedModel};
use crate::ingest::Dataset;
use crate::tune::seed::derived_rng;

/// Scores every item by its training interaction count, for every user.
pub fn fit_mostpop(train: &Dataset) -> TrainedModel {
    let popularity = train.item_degrees().into_iter().map(|c| c as f64).collect();
    TrainedModel::new(ModelConfig::MostPop, ModelState::MostPop { popularity }, train)
}

/// Uniform random scores, drawn per user from a stream derived from `seed`.
pub fn fit_random(train: &Dataset, seed: u64) -> TrainedModel {
    TrainedModel::new(
        ModelConfig::Random { seed: Some(seed) },
        ModelState::Random { seed },
        train,
    )
}

pub(super) fn random_scores(seed: u64, user: u32, out: &mut [f64]) {
    let mut rng = derived_rng(seed, "random-scores", u64::from(user));
    out.iter_mut().for_each(|s| *s = rng.random::<f64>());
}
