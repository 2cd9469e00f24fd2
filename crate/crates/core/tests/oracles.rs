use rand::Rng;

use gqa_core::distort::{generate_list, DistortionType};
use gqa_core::eval::{krcc, plcc, rmse, srcc, ScoreStats};
use gqa_core::metrics::pseudo_mos;
use gqa_core::shapes::{desk_reference, Shape};
use gqa_core::Seed;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// 1-based ranks, ties get the mean of the positions they span.
fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Kendall tau-b by counting all pairs.
fn tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1.0;
            } else if dy == 0.0 {
                ty += 1.0;
            } else if dx * dy > 0.0 {
                conc += 1.0;
            } else {
                disc += 1.0;
            }
        }
    }
    (conc - disc) / ((conc + disc + tx) * (conc + disc + ty)).sqrt()
}

#[test]
fn correlations_match_direct_formulas_on_fifty_pairs() {
    let mut rng = Seed(50).rng(0);
    for trial in 0..20 {
        // coarse rounding on odd trials produces ties
        let round = |v: f64| if trial % 2 == 1 { (v * 4.0).round() / 4.0 } else { v };
        let truth: Vec<f64> = (0..50).map(|_| round(rng.random_range(0.0..1.0))).collect();
        let pred: Vec<f64> = truth.iter().map(|t| round(0.7 * t + rng.random_range(-0.3..0.3))).collect();

        let want_rmse = (pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 50.0).sqrt();
        let want_plcc = pearson(&pred, &truth);
        let want_srcc = pearson(&fractional_ranks(&pred), &fractional_ranks(&truth));
        let want_krcc = tau_b(&pred, &truth);

        assert!((rmse(&pred, &truth).unwrap() - want_rmse).abs() < 1e-9);
        assert!((plcc(&pred, &truth).unwrap() - want_plcc).abs() < 1e-9);
        assert!((srcc(&pred, &truth).unwrap() - want_srcc).abs() < 1e-9, "trial {trial}");
        assert!((krcc(&pred, &truth).unwrap() - want_krcc).abs() < 1e-9, "trial {trial}");

        let stats = ScoreStats::compute(&pred, &truth).unwrap();
        assert_eq!(stats.plcc, plcc(&pred, &truth).unwrap());
    }
}

#[test]
fn gaussian_noise_lowers_pseudo_mos_level_by_level() {
    let reference = desk_reference(Shape::BumpySphere, Seed(8)).unwrap();
    assert!(reference.len() >= 5000);
    let list = generate_list(&reference, DistortionType::Gn, 10, Seed(9)).unwrap();
    let mos: Vec<f64> = list.items.iter().map(|item| pseudo_mos(&reference, &item.cloud).unwrap()).collect();
    assert_eq!(mos[0], 1.0);
    assert!(mos.windows(2).all(|w| w[1] < w[0]), "{mos:?}");
}
