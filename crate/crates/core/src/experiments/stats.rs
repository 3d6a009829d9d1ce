//! Batch-means standard errors and least-squares slopes.

use crate::error::{invalid, Result};

pub const DEFAULT_BATCHES: usize = 10;

/// Mean with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { mean: 0.0, se: 0.0 };
}

/// Contiguous index ranges of `n` items split into `batches` near-equal
/// batches (the first `n % batches` get one extra item).
fn batch_ranges(n: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    let (q, r) = (n / batches, n % batches);
    let mut start = 0;
    (0..batches)
        .map(|b| {
            let len = q + usize::from(b < r);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

/// Grand mean and batch-means standard error. Batches are contiguous in
/// replica order, so the result depends only on the input order.
pub fn batch_means(values: &[f64], batches: usize) -> Result<Estimate> {
    if batches < 2 {
        return Err(invalid("batch means need at least 2 batches"));
    }
    if values.len() < batches {
        return Err(invalid(format!("{} values cannot fill {batches} batches", values.len())));
    }
    let means: Vec<f64> = batch_ranges(values.len(), batches)
        .into_iter()
        .map(|r| {
            let len = r.len() as f64;
            values[r].iter().sum::<f64>() / len
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (batches - 1) as f64;
    Ok(Estimate { mean, se: (var / batches as f64).sqrt() })
}

/// Splits `values` into the batches used by [`batch_means`].
pub fn batches_of<T>(values: &[T], batches: usize) -> Vec<&[T]> {
    batch_ranges(values.len(), batches).into_iter().map(|r| &values[r]).collect()
}

/// Two-sided 97.5% Student-t quantile; the normal value beyond 30 degrees
/// of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    const T: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => T[df - 1],
        _ => 1.960,
    }
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("line fit needs two or more paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("line fit needs distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok(LineFit { slope, intercept: my - slope * mx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn batch_means_of_constant_has_zero_se() {
        let e = batch_means(&[2.5; 37], 10).unwrap();
        assert_eq!(e, Estimate { mean: 2.5, se: 0.0 });
        assert!(batch_means(&[1.0; 9], 10).is_err());
        assert!(batch_means(&[1.0; 9], 1).is_err());
    }

    #[test]
    fn batch_means_known_values() {
        // Batch means 0..9: sample sd of 0..9 is sqrt(55/6).
        let v: Vec<f64> = (0..10).flat_map(|b| [b as f64; 3]).collect();
        let e = batch_means(&v, 10).unwrap();
        assert!((e.mean - 4.5).abs() < 1e-15);
        assert!((e.se - (55.0f64 / 6.0 / 10.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn line_fit_exact() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 3.0).abs() < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(fit_line(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn quantiles() {
        assert_eq!(t_quantile_975(9), 2.262);
        assert_eq!(t_quantile_975(1000), 1.96);
        assert!(t_quantile_975(0).is_infinite());
    }

    proptest! {
        #[test]
        fn batches_partition_input(n in 10usize..500, b in 2usize..10) {
            let v: Vec<usize> = (0..n).collect();
            let parts = batches_of(&v, b);
            prop_assert_eq!(parts.len(), b);
            let flat: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
            prop_assert_eq!(&flat, &v);
            let (lo, hi) = (parts.iter().map(|p| p.len()).min().unwrap(), parts.iter().map(|p| p.len()).max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
