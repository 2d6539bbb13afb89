use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::linalg::dot;
use super::{BprParams, Deadline, ModelConfig, ModelError, ModelState, TrainedModel};
use crate::ingest::Dataset;
use crate::tune::seed::derived_rng;

const INIT_STD: f64 = 0.01;
const NEGATIVE_RETRIES: usize = 100;

/// Gradient of the single-triple loss
/// `L = -ln σ(x̂_ui - x̂_uj) + reg/2 · (|p_u|² + |q_i|² + |q_j|² + b_i² + b_j²)`
/// with `x̂_ui = <p_u, q_i> + b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BprGradient {
    pub loss: f64,
    pub d_user: Vec<f64>,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
    pub d_pos_bias: f64,
    pub d_neg_bias: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn bpr_triple_gradient(pu: &[f64], qi: &[f64], qj: &[f64], bi: f64, bj: f64, reg: f64) -> BprGradient {
    let x = dot(pu, qi) + bi - dot(pu, qj) - bj;
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let loss = softplus(-x) + 0.5 * reg * (sq(pu) + sq(qi) + sq(qj) + bi * bi + bj * bj);
    // dL/dx
    let g = -sigmoid(-x);
    BprGradient {
        loss,
        d_user: pu
            .iter()
            .zip(qi.iter().zip(qj))
            .map(|(&p, (&a, &b))| g * (a - b) + reg * p)
            .collect(),
        d_pos: pu.iter().zip(qi).map(|(&p, &a)| g * p + reg * a).collect(),
        d_neg: pu.iter().zip(qj).map(|(&p, &b)| -g * p + reg * b).collect(),
        d_pos_bias: g + reg * bi,
        d_neg_bias: -g + reg * bj,
    }
}

/// Epoch-at-a-time BPR-MF trainer; the scheduler can stop it between epochs.
#[derive(Debug, Clone)]
pub struct BprTrainer {
    params: BprParams,
    seed: u64,
    train: Dataset,
    rng: ChaCha8Rng,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    item_bias: Vec<f64>,
    pairs: Vec<(u32, u32)>,
    epochs_done: usize,
    last_loss: Option<f64>,
}

impl BprTrainer {
    /// `seed` is used when `params.seed` is absent.
    pub fn new(train: &Dataset, params: &BprParams, seed: u64) -> Result<Self, ModelError> {
        let mut params = params.clone();
        let seed = *params.seed.get_or_insert(seed);
        ModelConfig::BprMf(params.clone()).validate()?;
        let f = params.factors;
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut init = derived_rng(seed, "bprmf-init", 0);
        let user_factors = (0..train.n_users() * f).map(|_| normal.sample(&mut init)).collect();
        let item_factors = (0..train.n_items() * f).map(|_| normal.sample(&mut init)).collect();
        let pairs = train.interactions().map(|e| (e.user, e.item)).collect();
        Ok(Self {
            rng: derived_rng(seed, "bprmf-sgd", 0),
            seed,
            user_factors,
            item_factors,
            item_bias: vec![0.0; train.n_items()],
            pairs,
            train: train.clone(),
            params,
            epochs_done: 0,
            last_loss: None,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn total_epochs(&self) -> usize {
        self.params.epochs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Mean triple loss of the last finished epoch.
    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Runs one pass over the observed pairs in a freshly shuffled order, sampling one
    /// unseen item per pair. Returns the mean loss.
    pub fn train_epoch(&mut self, deadline: &Deadline) -> Result<f64, ModelError> {
        let f = self.params.factors;
        let lr = self.params.learning_rate;
        let reg = self.params.regularization;
        let n_items = self.train.n_items() as u32;
        let epoch = self.epochs_done + 1;
        self.pairs.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut used = 0usize;
        for (step, &(u, i)) in self.pairs.iter().enumerate() {
            if step % 4096 == 0 {
                deadline.check()?;
            }
            let seen = self.train.user_items(u as usize);
            let mut neg = None;
            for _ in 0..NEGATIVE_RETRIES {
                let j = self.rng.random_range(0..n_items);
                if seen.binary_search(&j).is_err() {
                    neg = Some(j);
                    break;
                }
            }
            let Some(j) = neg else { continue };
            let (u, i, j) = (u as usize, i as usize, j as usize);
            let g = bpr_triple_gradient(
                &self.user_factors[u * f..(u + 1) * f],
                &self.item_factors[i * f..(i + 1) * f],
                &self.item_factors[j * f..(j + 1) * f],
                self.item_bias[i],
                self.item_bias[j],
                reg,
            );
            if !g.loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            total += g.loss;
            used += 1;
            for k in 0..f {
                self.user_factors[u * f + k] -= lr * g.d_user[k];
                self.item_factors[i * f + k] -= lr * g.d_pos[k];
                self.item_factors[j * f + k] -= lr * g.d_neg[k];
            }
            self.item_bias[i] -= lr * g.d_pos_bias;
            self.item_bias[j] -= lr * g.d_neg_bias;
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(total.is_finite() && finite(&self.user_factors) && finite(&self.item_factors) && finite(&self.item_bias)) {
            return Err(ModelError::Diverged { epoch });
        }
        let mean = if used == 0 { 0.0 } else { total / used as f64 };
        self.epochs_done = epoch;
        self.last_loss = Some(mean);
        Ok(mean)
    }

    /// A model holding the current parameters.
    pub fn model(&self) -> TrainedModel {
        let mut params = self.params.clone();
        params.epochs = self.epochs_done.max(1);
        TrainedModel::new(
            ModelConfig::BprMf(params),
            ModelState::BprMf {
                factors: self.params.factors,
                user_factors: self.user_factors.clone(),
                item_factors: self.item_factors.clone(),
                item_bias: self.item_bias.clone(),
            },
            &self.train,
        )
    }
}

/// Trains BPR-MF for `params.epochs` epochs.
pub fn fit_bprmf(
    train: &Dataset,
    params: &BprParams,
    seed: u64,
    deadline: &Deadline,
) -> Result<TrainedModel, ModelError> {
    let mut t = BprTrainer::new(train, params, seed)?;
    while t.epochs_done() < t.total_epochs() {
        t.train_epoch(deadline)?;
    }
    Ok(t.model())
}
