//! Small numerical helpers shared by the samplers and diagnostics.

/// `ln(e^a + e^b)` without overflow. `-inf` acts as the additive identity.
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let max = a.max(b);
    max + ((a - max).exp() + (b - max).exp()).ln()
}

/// `ln Σ e^{x_i}` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp_slice(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` normalisation.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let direct = (1.0f64.exp() + 2.0f64.exp()).ln();
        assert!((log_sum_exp(1.0, 2.0) - direct).abs() < 1e-15);
        assert!((log_sum_exp_slice(&[1.0, 2.0]) - direct).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, -3.0), -3.0);
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        let big = log_sum_exp(700.0, 700.0);
        assert!((big - (700.0 + 2f64.ln())).abs() < 1e-12);
        let small = log_sum_exp(-700.0, -800.0);
        assert!(small.is_finite());
        assert_eq!(log_sum_exp_slice(&[]), f64::NEG_INFINITY);
    }
}
