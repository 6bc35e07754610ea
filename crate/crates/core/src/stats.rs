//! Small statistics helpers shared by the detectors and the experiment harness.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// `z` such that `P(Z <= z) = p` for a standard normal `Z`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("probability", format!("{p} is outside (0, 1)")));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

/// Upper tail `P(Z > z)`, accurate far into the tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{p} is outside (0, 1)")))
    }
}

/// Area under the ROC curve via the Mann-Whitney statistic; ties count half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in positives {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (positives.len() * negatives.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_at_999() {
        assert!((normal_quantile(0.999).unwrap() - 3.0902).abs() < 1e-3);
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn sf_deep_tail() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        let p = normal_sf(10.0);
        assert!(p > 0.0 && p < 1e-20);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[2.0, 3.0], &[0.0, 1.0]), 1.0);
        assert_eq!(roc_auc(&[0.0], &[1.0]), 0.0);
        assert_eq!(roc_auc(&[1.0], &[1.0]), 0.5);
        assert_eq!(roc_auc(&[1.0, 3.0], &[2.0]), 0.5);
    }

    #[test]
    fn sd_small_sample() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
