//! Ranking and scoring statistics: NDCG with graded linear relevance, RMSE, PLCC, SRCC, KRCC.

use serde::Serialize;

use crate::error::{GqaError, Result};
use crate::scalar::Scalar;

/// Graded relevance of the item whose ideal (1-based) position is `pos` in a list of `k`:
/// 1.0 at the top, 0.5 at the bottom, linear in between.
pub fn relevance<T: Scalar>(pos: usize, k: usize) -> T {
    assert!(k >= 2 && (1..=k).contains(&pos), "relevance({pos}, {k}) out of range");
    T::lit(0.5) + T::lit(0.5) * T::lit((k - pos) as f64) / T::lit((k - 1) as f64)
}

/// A predicted ordering of list items.
///
/// Item ids are their ideal (0-based) positions; `order[p]` is the item placed
/// at predicted position `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ranking {
    order: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Ranking> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(GqaError::InvalidArgument(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Ranking { order })
    }

    pub fn identity(k: usize) -> Ranking {
        Ranking { order: (0..k).collect() }
    }

    /// Orders items by score, best first; equal scores keep ascending item id.
    pub fn from_scores<T: Scalar>(scores: &[T], higher_is_better: bool) -> Ranking {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            let ord = scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal);
            let ord = if higher_is_better { ord.reverse() } else { ord };
            ord.then(a.cmp(&b))
        });
        Ranking { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(p, &i)| p == i)
    }
}

fn dcg<T: Scalar>(order: &[usize]) -> T {
    let k = order.len();
    order
        .iter()
        .enumerate()
        .map(|(p, &item)| relevance::<T>(item + 1, k) / T::lit((p as f64 + 2.0).log2()))
        .sum()
}

/// DCG of the predicted ranking divided by the DCG of the ideal ranking.
pub fn ndcg<T: Scalar>(ranking: &Ranking) -> Result<T> {
    let k = ranking.len();
    if k < 2 {
        return Err(GqaError::InvalidArgument(format!("NDCG needs at least 2 items, got {k}")));
    }
    let ideal: Vec<usize> = (0..k).collect();
    Ok(dcg::<T>(ranking.order()) / dcg::<T>(&ideal))
}

fn check_pairs<T: Scalar>(pred: &[T], truth: &[T]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(GqaError::InvalidArgument(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.len() < 2 {
        return Err(GqaError::InvalidArgument("need at least 2 score pairs".into()));
    }
    Ok(())
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::lit(xs.len() as f64)
}

pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_pairs(pred, truth)?;
    let sq: T = pred.iter().zip(truth).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok((sq / T::lit(pred.len() as f64)).sqrt())
}

/// Pearson linear correlation on raw scores.
pub fn plcc<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_pairs(pred, truth)?;
    let (mp, mt) = (mean(pred), mean(truth));
    let mut cov = T::zero();
    let mut vp = T::zero();
    let mut vt = T::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        cov += (p - mp) * (t - mt);
        vp += (p - mp) * (p - mp);
        vt += (t - mt) * (t - mt);
    }
    if vp <= T::zero() || vt <= T::zero() {
        return Err(GqaError::UndefinedCorrelation("zero variance"));
    }
    Ok(cov / (vp.sqrt() * vt.sqrt()))
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let avg = T::lit((start + end + 1) as f64 / 2.0);
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson on tie-averaged ranks.
pub fn srcc<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_pairs(pred, truth)?;
    plcc(&average_ranks(pred), &average_ranks(truth))
}

/// Kendall's tau-b.
pub fn krcc<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_pairs(pred, truth)?;
    let n = pred.len();
    let (mut concordant, mut discordant, mut tie_p, mut tie_t) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dp = pred[i] - pred[j];
            let dt = truth[i] - truth[j];
            let (zp, zt) = (dp == T::zero(), dt == T::zero());
            match (zp, zt) {
                (true, true) => {}
                (true, false) => tie_p += 1,
                (false, true) => tie_t += 1,
                (false, false) => {
                    if (dp > T::zero()) == (dt > T::zero()) {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
        }
    }
    let denom_p = (concordant + discordant + tie_p) as f64;
    let denom_t = (concordant + discordant + tie_t) as f64;
    if denom_p == 0.0 || denom_t == 0.0 {
        return Err(GqaError::UndefinedCorrelation("all pairs tied"));
    }
    Ok(T::lit((concordant - discordant) as f64 / (denom_p * denom_t).sqrt()))
}

/// The four scoring statistics, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreStats {
    pub rmse: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub srcc: f64,
}

impl ScoreStats {
    pub fn compute<T: Scalar>(pred: &[T], truth: &[T]) -> Result<ScoreStats> {
        Ok(ScoreStats {
            rmse: rmse(pred, truth)?.as_f64(),
            plcc: plcc(pred, truth)?.as_f64(),
            krcc: krcc(pred, truth)?.as_f64(),
            srcc: srcc(pred, truth)?.as_f64(),
        })
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}
