//! Smooth Recall@K surrogate over a batch with in-batch negatives.
//!
//! For queries `q_b` and targets `t_j`, with scores `s_bj = q_b · t_j`:
//!
//! ```text
//! r_b = 1 + Σ_{j≠b} σ((s_bj − s_bb) / tau_rank)        smoothed rank of the positive
//! R_b = σ((K + margin − r_b) / tau_recall)              smoothed top-K membership
//! L   = 1 − mean_b R_b
//! ```
//!
//! The gradient is taken with respect to the query rows exactly as passed in;
//! normalization of the queries is the caller's concern. Targets are constants.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub k: usize,
    pub tau_rank: f64,
    pub tau_recall: f64,
    /// Offset added to K inside the recall sigmoid. At 0.5 the zero-temperature
    /// limit is exactly the hard `rank <= K` indicator; at 0 a positive sitting
    /// exactly at rank K counts one half.
    pub rank_margin: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self { k: 10, tau_rank: 0.05, tau_recall: 1.0, rank_margin: 0.5 }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.k == 0 {
            return Err(TrainError::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.tau_rank > 0.0 && self.tau_recall > 0.0) {
            return Err(TrainError::InvalidConfig("temperatures must be positive".into()));
        }
        if !self.rank_margin.is_finite() {
            return Err(TrainError::InvalidConfig("rank_margin must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateLoss {
    pub loss: f64,
    /// dL/dq, same shape as the queries.
    pub grad: Array2<f64>,
    /// Smoothed rank of each positive.
    pub ranks: Array1<f64>,
    /// Smoothed recall of each element.
    pub recalls: Array1<f64>,
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_batch(queries: &ArrayView2<f64>, targets: &ArrayView2<f64>) -> Result<(), TrainError> {
    if queries.dim() != targets.dim() {
        return Err(TrainError::Shape(format!("queries {:?} vs targets {:?}", queries.dim(), targets.dim())));
    }
    if queries.nrows() < 2 {
        return Err(TrainError::Shape("batch needs at least two rows".into()));
    }
    if queries.iter().chain(targets.iter()).any(|x| !x.is_finite()) {
        return Err(TrainError::NonFinite("loss inputs contain NaN or infinity".into()));
    }
    Ok(())
}

pub fn recall_surrogate_loss(
    queries: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    params: &SurrogateParams,
) -> Result<SurrogateLoss, TrainError> {
    params.validate()?;
    check_batch(&queries, &targets)?;
    let scores = queries.dot(&targets.t());
    let (loss, ranks, recalls, dscores) = loss_from_scores(scores.view(), params)?;
    let grad = dscores.dot(&targets);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite("surrogate gradient is not finite".into()));
    }
    Ok(SurrogateLoss { loss, grad, ranks, recalls })
}

/// Loss, smoothed ranks, smoothed recalls and dL/dS.
pub type ScoreTerms = (f64, Array1<f64>, Array1<f64>, Array2<f64>);

/// The surrogate as a function of the `B x B` score matrix (positives on the
/// diagonal).
pub fn loss_from_scores(
    scores: ArrayView2<f64>,
    params: &SurrogateParams,
) -> Result<ScoreTerms, TrainError> {
    params.validate()?;
    let b = scores.nrows();
    if b < 2 || scores.ncols() != b {
        return Err(TrainError::Shape(format!("score matrix must be square with B >= 2, got {:?}", scores.dim())));
    }
    let k = params.k as f64 + params.rank_margin;
    let mut ranks = Array1::zeros(b);
    let mut recalls = Array1::zeros(b);
    // dr_b/ds_bj for j != b.
    let mut dscores = Array2::<f64>::zeros((b, b));
    for i in 0..b {
        let pos = scores[[i, i]];
        let mut r = 1.0;
        for j in 0..b {
            if j == i {
                continue;
            }
            let s = sigmoid((scores[[i, j]] - pos) / params.tau_rank);
            r += s;
            dscores[[i, j]] = s * (1.0 - s) / params.tau_rank;
        }
        ranks[i] = r;
        recalls[i] = sigmoid((k - r) / params.tau_recall);
    }
    let loss = 1.0 - recalls.mean().expect("non-empty batch");
    if !loss.is_finite() {
        return Err(TrainError::NonFinite("surrogate loss is not finite".into()));
    }
    // dL/dr_b = R_b (1 - R_b) / (B tau_recall); dr_b/ds_bb = -sum_j dr_b/ds_bj.
    for i in 0..b {
        let dl_dr = recalls[i] * (1.0 - recalls[i]) / (params.tau_recall * b as f64);
        let mut row = dscores.row_mut(i);
        let total: f64 = row.sum();
        row.mapv_inplace(|w| w * dl_dr);
        row[i] = -dl_dr * total;
    }
    Ok((loss, ranks, recalls, dscores))
}

/// Hard in-batch rank of each positive: 1 + number of other targets scoring
/// strictly higher than the positive.
pub fn hard_ranks(queries: ArrayView2<f64>, targets: ArrayView2<f64>) -> Vec<usize> {
    let scores = queries.dot(&targets.t());
    scores
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| 1 + row.iter().enumerate().filter(|&(j, &s)| j != i && s > row[i]).count())
        .collect()
}

/// Fraction of batch elements whose positive has hard in-batch rank `<= k`.
pub fn hard_recall_at_k(queries: ArrayView2<f64>, targets: ArrayView2<f64>, k: usize) -> f64 {
    let ranks = hard_ranks(queries, targets);
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}
