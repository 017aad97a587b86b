//! Deterministic reductions, moment summaries and correlation estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise summation with a fixed split order, so the result depends only on the input order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

pub fn mean(x: &[f64]) -> f64 {
    pairwise_sum(x) / x.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub count: usize,
    pub mean: f64,
    pub se_mean: f64,
    pub variance: f64,
    pub se_variance: f64,
    pub second_moment: f64,
    pub se_second_moment: f64,
}

/// Sample mean, unbiased variance and raw second moment with standard errors.
pub fn summarize(x: &[f64]) -> Result<MomentSummary> {
    let n = x.len();
    if n < 2 {
        return Err(Error::domain("moment summary needs at least two samples"));
    }
    let nf = n as f64;
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - m).collect();
    let m2 = pairwise_sum(&dev.iter().map(|d| d * d).collect::<Vec<_>>()) / nf;
    let m4 = pairwise_sum(&dev.iter().map(|d| d.powi(4)).collect::<Vec<_>>()) / nf;
    let s2 = m2 * nf / (nf - 1.0);
    let var_of_var = ((m4 - s2 * s2 * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0);
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let sq_mean = mean(&sq);
    let sq_var = pairwise_sum(&sq.iter().map(|s| (s - sq_mean).powi(2)).collect::<Vec<_>>()) / (nf - 1.0);
    Ok(MomentSummary {
        count: n,
        mean: m,
        se_mean: (s2 / nf).sqrt(),
        variance: s2,
        se_variance: var_of_var.sqrt(),
        second_moment: sq_mean,
        se_second_moment: (sq_var / nf).sqrt(),
    })
}

fn pearson(sxx: f64, syy: f64, sxy: f64) -> Result<f64> {
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::UndefinedCorrelation("zero variance in one of the samples".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation of paired samples with its jackknife standard error.
pub fn estimate_correlation(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::domain("correlation needs samples of equal length"));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::domain("correlation needs at least two pairs"));
    }
    let (mx, my) = (mean(x), mean(y));
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let products = |a: &[f64], b: &[f64]| pairwise_sum(&a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>());
    let (sxx, syy, sxy) = (products(&dx, &dx), products(&dy, &dy), products(&dx, &dy));
    let rho = pearson(sxx, syy, sxy)?;
    if n < 3 {
        return Ok((rho, f64::NAN));
    }
    // leave-one-out moments from the full sums
    let nf = n as f64;
    let (sx, sy) = (pairwise_sum(&dx), pairwise_sum(&dy));
    let mut loo = Vec::with_capacity(n);
    for i in 0..n {
        let m = nf - 1.0;
        let (ax, ay) = (sx - dx[i], sy - dy[i]);
        let cxx = sxx - dx[i] * dx[i] - ax * ax / m;
        let cyy = syy - dy[i] * dy[i] - ay * ay / m;
        let cxy = sxy - dx[i] * dy[i] - ax * ay / m;
        loo.push(pearson(cxx, cyy, cxy)?);
    }
    let mean_loo = mean(&loo);
    let ss = pairwise_sum(&loo.iter().map(|r| (r - mean_loo).powi(2)).collect::<Vec<_>>());
    Ok((rho, ((nf - 1.0) / nf * ss).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_pairs_give_exactly_one() {
        let x = [0.3, -1.2, 2.5, 0.7, 1.1];
        let (r, _) = estimate_correlation(&x, &x).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn constant_sample_is_undefined() {
        assert!(matches!(
            estimate_correlation(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn summary_of_known_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.second_moment - 7.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pairwise_sum_close_to_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
            let naive: f64 = v.iter().sum();
            prop_assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
        }

        #[test]
        fn correlation_is_bounded(v in proptest::collection::vec((-10f64..10.0, -10f64..10.0), 5..50)) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Ok((r, _)) = estimate_correlation(&x, &y) {
                prop_assert!(r.abs() <= 1.0 + 1e-12);
            }
        }
    }
}
