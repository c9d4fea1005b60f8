//! Order-independent summary statistics for replicate values.

use serde::Serialize;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance; `NaN` for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of already sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = (len - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Summary of one tracked statistic over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased standard deviation.
    pub sd: f64,
    /// Normal-theory standard error of `sd`, `sd / sqrt(2 (count - 1))`.
    pub sd_se: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

impl Summary {
    pub fn from_values(xs: &[f64]) -> Self {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let sd = variance(xs).sqrt();
        let sd_se = if xs.len() >= 2 {
            sd / (2.0 * (xs.len() - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        Summary {
            count: xs.len(),
            mean: mean(xs),
            sd,
            sd_se,
            q025: quantile_sorted(&sorted, 0.025),
            q500: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }

    /// `true` when the standard deviation could not be estimated (fewer than two replicates).
    pub fn sd_undefined(&self) -> bool {
        self.count < 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), 249_750.0);
    }

    #[test]
    fn variance_and_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert!(variance(&[1.0]).is_nan());
        let s = Summary::from_values(&[3.0]);
        assert!(s.sd_undefined() && s.sd.is_nan());
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [40.0f64, 80.0, 160.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [40.0f64, 80.0, 160.0]
            .iter()
            .map(|v| v.powf(-0.5).ln())
            .collect();
        assert!((ols_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
