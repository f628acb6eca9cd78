//! Order-stable Monte-Carlo reductions.

/// Pairwise (tree) summation in index order. The result depends only on the
/// order of `xs`, never on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean computed relative to the first sample, so that a constant sequence
/// returns that constant exactly.
pub fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    let dev: Vec<f64> = xs.iter().map(|x| x - x0).collect();
    x0 + pairwise_sum(&dev) / xs.len() as f64
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_err: f64::NAN, count: 0 };
        }
        let mean = shifted_mean(xs);
        if n == 1 {
            return Self { mean, std_err: 0.0, count: 1 };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self { mean, std_err: (var / n as f64).sqrt(), count: n }
    }

    /// `(self − other) / sqrt(se₁² + se₂² + floor²)`; zero when both agree exactly.
    pub fn z_score(&self, other: &MeanEstimate, floor: f64) -> f64 {
        let diff = self.mean - other.mean;
        if diff == 0.0 {
            return 0.0;
        }
        diff / (self.std_err.powi(2) + other.std_err.powi(2) + floor * floor).sqrt()
    }
}

/// Least-squares slope of `log(err)` against `log(dt)`.
pub fn observed_order(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499500.0);
    }

    #[test]
    fn mean_and_error() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std_err - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let single = MeanEstimate::from_samples(&[7.0]);
        assert_eq!(single.std_err, 0.0);
    }

    #[test]
    fn z_score_of_identical_estimates_is_zero() {
        let a = MeanEstimate { mean: 1.0, std_err: 0.0, count: 3 };
        assert_eq!(a.z_score(&a, 0.0), 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let dts = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts.iter().map(|d: &f64| 3.0 * d.powf(1.5)).collect();
        assert!((observed_order(&dts, &errs) - 1.5).abs() < 1e-12);
    }
}
