//! One-sample Kolmogorov–Smirnov test against the standard uniform.

use alloc::vec::Vec;

/// `sup |F_n(u) - u|` for a sample in `[0, 1]`.
pub fn ks_statistic_uniform(sample: &[f64]) -> f64 {
    let mut x: Vec<f64> = sample.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    x.iter().enumerate().fold(0.0f64, |acc, (i, &u)| {
        let u = u.clamp(0.0, 1.0);
        acc.max((i as f64 + 1.0) / n - u).max(u - i as f64 / n)
    })
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        let s: f64 = (1..=8)
            .map(|j| {
                let k = (2 * j - 1) as f64;
                libm::exp(-k * k * pi2 / (8.0 * lambda * lambda))
            })
            .sum();
        1.0 - libm::sqrt(2.0 * core::f64::consts::PI) / lambda * s
    } else {
        2.0 * (1..=20)
            .map(|j| {
                let j = j as f64;
                let sign = if j as u32 % 2 == 1 { 1.0 } else { -1.0 };
                sign * libm::exp(-2.0 * j * j * lambda * lambda)
            })
            .sum::<f64>()
    };
    p.clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' small-sample correction.
pub fn ks_p_value(n: usize, statistic: f64) -> f64 {
    let sn = libm::sqrt(n as f64);
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * statistic)
}

/// `(statistic, p-value)` of the sample against the standard uniform.
pub fn ks_uniform(sample: &[f64]) -> (f64, f64) {
    let d = ks_statistic_uniform(sample);
    (d, ks_p_value(sample.len(), d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_reference_points() {
        // classical critical values of the Kolmogorov distribution
        for (lambda, p) in [(1.2238, 0.10), (1.3581, 0.05), (1.6276, 0.01), (0.8276, 0.50)] {
            assert!((kolmogorov_survival(lambda) - p).abs() < 1e-3, "{lambda}");
        }
        // both series agree where they meet
        let a = kolmogorov_survival(1.18 - 1e-12);
        let b = kolmogorov_survival(1.18);
        assert!((a - b).abs() < 1e-10);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(10.0) < 1e-50);
    }

    #[test]
    fn statistic_small_cases() {
        assert!((ks_statistic_uniform(&[0.5]) - 0.5).abs() < 1e-15);
        assert!((ks_statistic_uniform(&[0.25, 0.75]) - 0.25).abs() < 1e-15);
        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic_uniform(&grid) - 0.005).abs() < 1e-12);
        assert!(ks_uniform(&grid).1 > 0.999);
        let skewed: Vec<f64> = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0).powi(2)).collect();
        assert!(ks_uniform(&skewed).1 < 1e-10);
    }
}
