use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample size whose null distribution is computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a − b`.
    pub w_plus: f64,
    /// Pairs with a non-zero difference.
    pub n: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired scores. Zero differences
/// are dropped and tied magnitudes share average ranks. Up to
/// [`WILCOXON_EXACT_MAX`] pairs the null distribution is enumerated
/// exactly; above that the tie-corrected normal approximation is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("paired samples differ in length".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        log::warn!("all paired differences are zero; p = 1");
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
        });
    }
    if n < 6 {
        log::warn!("only {n} non-zero differences; the p-value cannot reach conventional levels");
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let (p_value, exact) = if n <= WILCOXON_EXACT_MAX {
        (exact_p_value(&ranks, w_plus), true)
    } else {
        (normal_p_value(&magnitudes, &ranks, w_plus), false)
    };
    Ok(WilcoxonResult {
        w_plus,
        n,
        p_value,
        exact,
    })
}

/// Null distribution by dynamic programming over doubled (integer) ranks.
fn exact_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = 2f64.powi(ranks.len() as i32);
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
    let upper: f64 = counts[w..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_p_value(magnitudes: &[f64], ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w_plus - mean) / var.sqrt();
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
/// `Ok(None)` when either input is constant (the coefficient is undefined).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("spearman inputs differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidInput("spearman needs at least 3 points".into()));
    }
    Ok(pearson(&average_ranks(xs), &average_ranks(ys)))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Relative error reduction in percent, `100 (new − base) / (100 − base)`.
/// Undefined (`None`) when the baseline is already perfect.
pub fn error_reduction(acc_baseline: f64, acc_new: f64) -> Option<f64> {
    (acc_baseline < 100.0).then(|| 100.0 * (acc_new - acc_baseline) / (100.0 - acc_baseline))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_scores_give_p_one() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n, 0);
    }

    #[test]
    fn consistent_dominance_is_significant() {
        let a: Vec<f64> = (1..=10).map(|i| 90.0 + i as f64 * 0.3).collect();
        let b: Vec<f64> = (1..=10).map(|i| 89.0 + i as f64 * 0.1).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.w_plus, 55.0);
        // Only the all-positive assignment reaches W+ = 55: p = 2 / 2^10.
        assert_relative_eq!(r.p_value, 2.0 / 1024.0, epsilon = 1e-15);
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn textbook_table_value() {
        // n = 8, W+ = 3: the exact lower tail P(W+ ≤ 3) is 5/256.
        let a = [1.0, 2.0, -3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let d: Vec<f64> = a.iter().map(|x| -x).collect();
        let zeros = [0.0; 8];
        let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
        assert_eq!(r.w_plus, 3.0);
        assert_relative_eq!(r.p_value, 2.0 * 5.0 / 256.0, epsilon = 1e-15);
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.11).cos() * 0.5).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn spearman_extremes_and_constant() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(spearman(&xs, &[2.0, 4.0, 8.0, 16.0]).unwrap().unwrap(), 1.0);
        assert_relative_eq!(spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap().unwrap(), -1.0);
        assert_eq!(spearman(&xs, &[1.0; 4]).unwrap(), None);
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn error_reduction_examples() {
        assert_eq!(error_reduction(90.0, 95.0), Some(50.0));
        assert_eq!(error_reduction(87.5, 87.5), Some(0.0));
        assert_eq!(error_reduction(90.0, 88.0), Some(-20.0));
        assert_eq!(error_reduction(100.0, 99.0), None);
    }

    proptest! {
        #[test]
        fn swapping_samples_keeps_p(a in prop::collection::vec(0i32..20, 6..15), b in prop::collection::vec(0i32..20, 15)) {
            let a: Vec<f64> = a.iter().map(|&x| x as f64).collect();
            let b: Vec<f64> = b[..a.len()].iter().map(|&x| x as f64).collect();
            let p = wilcoxon_signed_rank(&a, &b).unwrap().p_value;
            let q = wilcoxon_signed_rank(&b, &a).unwrap().p_value;
            prop_assert!((p - q).abs() < 1e-12);
            prop_assert!(p > 0.0 && p <= 1.0);
        }

        #[test]
        fn reduction_sign_follows_difference(base in 0.0f64..99.9, new in 0.0f64..100.0) {
            let r = error_reduction(base, new).unwrap();
            prop_assert_eq!(r > 0.0, new > base);
        }
    }
}
