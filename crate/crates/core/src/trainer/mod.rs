//! Training a linear projection head from dialog-text features into the frozen
//! image embedding space.
//!
//! Each mini-batch projects its features, L2-normalizes them, and scores them
//! against the batch's positive image embeddings; every other positive in the
//! batch acts as a negative. The head is updated with Adam plus decoupled
//! weight decay, and the learning rate decays exponentially per epoch down to
//! a floor.

// Negated comparisons below also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod checkpoint;
pub mod loss;

pub use checkpoint::{read_checkpoint, write_checkpoint, write_history_csv, CHECKPOINT_MAGIC};
pub use loss::{hard_recall_at_k, recall_surrogate_loss, SurrogateLoss, SurrogateParams};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::EmbeddingCorpus;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("positive id {0:?} is not in the corpus")]
    UnknownPositive(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub decay: f64,
    pub lr_floor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    pub tau_rank: f64,
    pub tau_recall: f64,
    pub rank_margin: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            decay: 0.93,
            lr_floor: 1e-6,
            epochs: 36,
            batch_size: 512,
            k: 10,
            tau_rank: 0.05,
            tau_recall: 1.0,
            rank_margin: 0.5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    /// Small-batch settings for desk-scale runs on a linear head.
    pub fn desk() -> Self {
        Self { learning_rate: 2e-2, batch_size: 64, epochs: 50, ..Self::default() }
    }

    pub fn surrogate(&self) -> SurrogateParams {
        SurrogateParams { k: self.k, tau_rank: self.tau_rank, tau_recall: self.tau_recall, rank_margin: self.rank_margin }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.lr_floor > 0.0) {
            return bad("lr_floor must be positive");
        }
        if !(self.learning_rate > self.lr_floor) && self.learning_rate != 0.0 {
            return bad("learning_rate must exceed lr_floor");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad("decay must lie in (0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("optimizer constants out of range");
        }
        self.surrogate().validate()
    }
}

/// Learning rate for `epoch` (0-based): `max(learning_rate * decay^epoch, lr_floor)`.
///
/// A zero learning rate stays zero, which freezes the head.
pub fn lr_schedule(config: &TrainerConfig, epoch: usize) -> f64 {
    if config.learning_rate == 0.0 {
        return 0.0;
    }
    let exp = i32::try_from(epoch).unwrap_or(i32::MAX);
    (config.learning_rate * config.decay.powi(exp)).max(config.lr_floor)
}

/// `d_out x d_in` linear map; the only trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub weights: Array2<f64>,
}

impl ProjectionHead {
    /// Uniform init with variance `1 / d_in`.
    pub fn init(d_out: usize, d_in: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (3.0 / d_in.max(1) as f64).sqrt();
        Self { weights: Array2::from_shape_simple_fn((d_out, d_in), || rng.random_range(-a..a)) }
    }

    pub fn d_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.weights.ncols()
    }

    /// Projects and L2-normalizes each feature row.
    pub fn embed(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, TrainError> {
        let (q, _) = self.forward(features)?;
        Ok(q)
    }

    /// Normalized projections and the pre-normalization norms.
    fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>), TrainError> {
        if x.ncols() != self.d_in() {
            return Err(TrainError::Shape(format!("features have {} columns, head expects {}", x.ncols(), self.d_in())));
        }
        let mut z = x.dot(&self.weights.t());
        let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        if norms.iter().any(|&n| !(n > 0.0) || !n.is_finite()) {
            return Err(TrainError::NonFinite("projection has zero or non-finite norm".into()));
        }
        for (mut row, &n) in z.rows_mut().into_iter().zip(&norms) {
            row.mapv_inplace(|v| v / n);
        }
        Ok((z, norms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: ProjectionHead,
    pub history: Vec<EpochRecord>,
}

/// Image embeddings of `positives`, one row each, in f64.
pub fn positive_targets(corpus: &EmbeddingCorpus, positives: &[String]) -> Result<Array2<f64>, TrainError> {
    let dim = crate::index::Retriever::dim(corpus);
    let mut t = Array2::zeros((positives.len(), dim));
    for (mut row, id) in t.rows_mut().into_iter().zip(positives) {
        let v = corpus.vector(id).ok_or_else(|| TrainError::UnknownPositive(id.clone()))?;
        row.iter_mut().zip(v).for_each(|(dst, &src)| *dst = f64::from(src));
    }
    Ok(t)
}

/// Trains from [`ProjectionHead::init`] with the config seed.
pub fn train(
    features: ArrayView2<f64>,
    positives: &[String],
    corpus: &EmbeddingCorpus,
    config: &TrainerConfig,
) -> Result<TrainOutcome, TrainError> {
    let head = ProjectionHead::init(crate::index::Retriever::dim(corpus), features.ncols(), config.seed);
    train_from(head, features, positives, corpus, config)
}

pub fn train_from(
    mut head: ProjectionHead,
    features: ArrayView2<f64>,
    positives: &[String],
    corpus: &EmbeddingCorpus,
    config: &TrainerConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let n = features.nrows();
    if positives.len() != n {
        return Err(TrainError::Shape(format!("{n} feature rows but {} positives", positives.len())));
    }
    if head.d_in() != features.ncols() || head.d_out() != crate::index::Retriever::dim(corpus) {
        return Err(TrainError::Shape("head does not match features and corpus".into()));
    }
    let targets = positive_targets(corpus, positives)?;
    let batch = config.batch_size.min(n);
    if config.epochs > 0 && batch < 2 {
        return Err(TrainError::Shape("need at least two training pairs".into()));
    }
    let params = config.surrogate();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_ba7c);
    let mut order: Vec<usize> = (0..n).collect();
    let mut m = Array2::<f64>::zeros(head.weights.raw_dim());
    let mut v = Array2::<f64>::zeros(head.weights.raw_dim());
    let mut step = 0i32;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = lr_schedule(config, epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (bi, idx) in order.chunks(batch).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let x = features.select(Axis(0), idx);
            let t = targets.select(Axis(0), idx);
            let (q, norms) = head.forward(x.view())?;
            let out = recall_surrogate_loss(q.view(), t.view(), &params).map_err(|e| match e {
                TrainError::NonFinite(m) => TrainError::NonFinite(format!("epoch {epoch}, batch {bi}: {m}")),
                other => other,
            })?;
            // Back through normalization: dL/dz = (g - (g.q) q) / |z|.
            let mut gz = out.grad;
            for ((mut g, qrow), &nz) in gz.rows_mut().into_iter().zip(q.rows()).zip(&norms) {
                let proj = g.dot(&qrow);
                g.scaled_add(-proj, &qrow);
                g.mapv_inplace(|val| val / nz);
            }
            let grad_w = gz.t().dot(&x);

            step += 1;
            let (b1, b2) = (config.beta1, config.beta2);
            m.zip_mut_with(&grad_w, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            v.zip_mut_with(&grad_w, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
            let wd = config.weight_decay;
            ndarray::Zip::from(&mut head.weights).and(&m).and(&v).for_each(|w, &m, &v| {
                let update = (m / c1) / ((v / c2).sqrt() + config.eps);
                *w -= lr * (update + wd * *w);
            });

            loss_sum += out.loss * idx.len() as f64;
            seen += idx.len();
        }
        let mean_loss = loss_sum / seen.max(1) as f64;
        if !mean_loss.is_finite() {
            return Err(TrainError::NonFinite(format!("epoch {epoch} mean loss is {mean_loss}")));
        }
        tracing::debug!(epoch, lr, mean_loss, "epoch done");
        history.push(EpochRecord { epoch, lr, mean_loss });
    }
    Ok(TrainOutcome { head, history })
}

/// Hard Recall@K of `features` treated as one batch against their positives.
pub fn in_batch_recall(
    head: &ProjectionHead,
    features: ArrayView2<f64>,
    positives: &[String],
    corpus: &EmbeddingCorpus,
    k: usize,
) -> Result<f64, TrainError> {
    let q = head.embed(features)?;
    let t = positive_targets(corpus, positives)?;
    Ok(hard_recall_at_k(q.view(), t.view(), k))
}

/// Synthetic training pairs: each feature is a fixed random linear mixing of
/// an image embedding plus Gaussian-like noise. Images are drawn uniformly
/// with replacement.
pub fn synthetic_pairs(
    corpus: &EmbeddingCorpus,
    n: usize,
    d_in: usize,
    noise: f64,
    seed: u64,
) -> (Array2<f64>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = crate::index::Retriever::dim(corpus);
    let scale = (3.0 / d as f64).sqrt();
    let mixing = Array2::from_shape_simple_fn((d_in, d), || rng.random_range(-scale..scale));
    let ids: Vec<String> = (0..n).map(|_| corpus.ids()[rng.random_range(0..corpus.ids().len())].clone()).collect();
    let targets = positive_targets(corpus, &ids).expect("ids drawn from corpus");
    let mut x = targets.dot(&mixing.t());
    // Sum of uniforms: cheap, bounded, roughly normal.
    x.mapv_inplace(|val| val + noise * ((0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() / 2.0));
    (x, ids)
}
