//! Plackett-Luce list-wise loss.

use crate::scalar::Scalar;

/// `log(exp(a) + exp(b))`.
fn logaddexp<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Suffix log-sum-exps along `order`: entry `i` covers `s[order[i..]]`.
fn suffix_lse<T: Scalar>(scores: &[T], order: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); order.len()];
    let mut acc = T::neg_infinity();
    for i in (0..order.len()).rev() {
        acc = logaddexp(scores[order[i]], acc);
        out[i] = acc;
    }
    out
}

/// Negative log-likelihood of the ground-truth order under Plackett-Luce.
///
/// `scores[j]` is the score of item `j`; `order[0]` is the best item.
pub fn listmle_loss<T: Scalar>(scores: &[T], order: &[usize]) -> T {
    assert_eq!(scores.len(), order.len());
    let lse = suffix_lse(scores, order);
    order.iter().zip(&lse).map(|(&j, &l)| l - scores[j]).sum()
}

/// Gradient of [`listmle_loss`] with respect to `scores`.
pub fn listmle_grad<T: Scalar>(scores: &[T], order: &[usize]) -> Vec<T> {
    let lse = suffix_lse(scores, order);
    let mut grad = vec![T::zero(); scores.len()];
    // item at position j receives softmax mass from every suffix i <= j
    for (pos, &j) in order.iter().enumerate() {
        let mass: T = lse[..=pos].iter().map(|&l| (scores[j] - l).exp()).sum();
        grad[j] = mass - T::one();
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores() {
        assert!((listmle_loss(&[0.3f64, 0.3], &[0, 1]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(listmle_grad(&[1.0f64, 1.0], &[0, 1]), vec![-0.5, 0.5]);
    }

    #[test]
    fn three_item_example() {
        let direct = -((2f64.exp() / (2f64.exp() + 1f64.exp() + 1.0)).ln() + (1f64.exp() / (1f64.exp() + 1.0)).ln());
        let got = listmle_loss(&[2.0f64, 1.0, 0.0], &[0, 1, 2]);
        assert!((got - direct).abs() < 1e-14);
        assert!((got - 0.7209).abs() < 1e-4);
    }

    #[test]
    fn order_permutes_items() {
        let s = [0.1f64, 2.0, -0.5];
        let a = listmle_loss(&s, &[1, 0, 2]);
        let b = listmle_loss(&[2.0, 0.1, -0.5], &[0, 1, 2]);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let l = listmle_loss(&[1000.0f64, 999.0, 998.0], &[0, 1, 2]);
        assert!((l - listmle_loss(&[2.0, 1.0, 0.0], &[0, 1, 2])).abs() < 1e-9);
        assert!(listmle_grad(&[800.0f32, -800.0], &[0, 1]).iter().all(|g| g.is_finite()));
    }
}
