//! Sample moments with standard errors and the two-sample Kolmogorov-Smirnov test.

/// Running sums for mean and variance of a sample.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    values: Vec<f64>,
}

impl Moments {
    #[allow(clippy::should_implement_trait)]
    pub fn from_iter(it: impl IntoIterator<Item = f64>) -> Self {
        Self { values: it.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        self.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    pub fn mean_se(&self) -> f64 {
        (self.variance() / self.values.len() as f64).sqrt()
    }

    /// Standard error of the variance from the sample fourth moment.
    pub fn variance_se(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        let m2 = self.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = self.values.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        ((m4 - m2 * m2).max(0.0) / n).sqrt()
    }
}

/// Sample covariance and its standard error.
pub fn covariance_with_se(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let products = Moments::from_iter(pairs.iter().map(|(x, y)| (x - mx) * (y - my)));
    (products.mean() * n / (n - 1.0), products.mean_se())
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsResult { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let m = Moments::from_iter([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
        let (c, _) = covariance_with_se(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]);
        assert!((c - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ks_detects_shift_and_accepts_identical() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) / 400.0).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.9);
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &c);
        assert!(r.p_value < 1e-6 && (r.statistic - 0.2).abs() < 0.01);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.05 and Q(1.63) ≈ 0.01
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }
}
