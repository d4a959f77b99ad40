//! Order-fixed reductions and Monte Carlo summaries.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        let mut s = 0.0;
        for v in x {
            s += v;
        }
        return s;
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// A Monte Carlo point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl EstimateWithError {
    /// Sample mean and SD/√reps; both sums are pairwise so the result does not
    /// depend on the thread count that produced `samples`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let reps = samples.len();
        assert!(reps >= 1, "no samples");
        let mean = pairwise_sum(samples) / reps as f64;
        let stderr = if reps > 1 {
            let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (reps - 1) as f64 / reps as f64).sqrt()
        } else {
            0.0
        };
        EstimateWithError { value: mean, stderr, reps }
    }

    pub fn exact(value: f64, reps: usize) -> Self {
        EstimateWithError { value, stderr: 0.0, reps }
    }

    /// z-score against a fixed target (see [`z`] for the zero-error case).
    pub fn zscore(&self, target: f64) -> f64 {
        z(self.value - target, self.stderr)
    }
}

/// Ratio of means `E[a]/E[b]` with a delta-method standard error; `a` and `b`
/// are paired samples.
pub fn ratio_of_means(a: &[f64], b: &[f64]) -> EstimateWithError {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ea = EstimateWithError::from_samples(a);
    let eb = EstimateWithError::from_samples(b);
    let r = ea.value / eb.value;
    let resid: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - r * y).collect();
    let er = EstimateWithError::from_samples(&resid);
    EstimateWithError { value: r, stderr: er.stderr / eb.value.abs(), reps: n }
}

/// z-score of a difference with standard error `se`. Zero difference with zero
/// error gives 0; a non-zero difference with zero error gives ±∞.
pub fn z(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Pooled z-score for two independent estimates.
pub fn joint_z(a: &EstimateWithError, b: &EstimateWithError) -> f64 {
    z(a.value - b.value, (a.stderr * a.stderr + b.stderr * b.stderr).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_sums() {
        let x: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&x), 500500.0);
        let e = EstimateWithError::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(EstimateWithError::from_samples(&[3.0]).stderr, 0.0);
    }

    #[test]
    fn ratio_delta_method() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        let r = ratio_of_means(&a, &b);
        assert!((r.value - 0.5).abs() < 1e-15);
        assert!(r.stderr < 1e-15);
    }
}
