//! Small numerically careful scalar helpers.

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(sum(exp(values)))` with the usual max shift. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn normal_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * LN_2PI
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// `log(Phi(b) - Phi(a))` for `a < b`, evaluated on the tail that keeps
/// precision.
pub fn log_normal_interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        // mirror into the lower tail
        return log_normal_interval(-b, -a);
    }
    let pa = normal_cdf(a);
    let pb = normal_cdf(b);
    (pb - pa).ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_without_overflow() {
        let v = log_sum_exp(&[-1000.0, -1001.0]);
        let expected = -1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn softplus_limits() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
    }

    #[test]
    fn normal_helpers() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let c = normal_cdf(1.959963984540054);
        assert!((c - 0.975).abs() < 1e-10, "{c:e}");
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        let direct = (normal_cdf(0.5) - normal_cdf(-0.3)).ln();
        assert!((log_normal_interval(-0.3, 0.5) - direct).abs() < 1e-12);
        assert!((log_normal_interval(0.3, 0.8) - (normal_cdf(0.8) - normal_cdf(0.3)).ln()).abs() < 1e-12);
        let tail = log_normal_interval(8.0, 9.0);
        assert!((tail - (normal_cdf(-8.0) - normal_cdf(-9.0)).ln()).abs() < 1e-9);
    }
}
