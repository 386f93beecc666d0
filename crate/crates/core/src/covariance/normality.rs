use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

pub const MIN_SAMPLES: usize = 1000;
const Z_LIMIT: f64 = 4.0;
const P_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub samples: usize,
    pub target_variance: f64,
    pub sample_variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skewness_z: f64,
    pub kurtosis_z: f64,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub verdict: Verdict,
}

/// Moment z-scores and a Kolmogorov-Smirnov test against `N(0, target_variance)`.
pub fn normality_test(samples: &[f64], target_variance: f64) -> Result<NormalityReport> {
    let m = samples.len();
    if m < MIN_SAMPLES {
        return invalid(format!("normality test needs at least {MIN_SAMPLES} samples, got {m}"));
    }
    let mf = m as f64;
    let mean = samples.iter().sum::<f64>() / mf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= mf;
    m3 /= mf;
    m4 /= mf;
    let degenerate = target_variance < 1e-14 || m2 < 1e-14;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let skewness_z = skewness / (6.0 / mf).sqrt();
    let kurtosis_z = excess_kurtosis / (24.0 / mf).sqrt();
    let (ks_distance, ks_p_value) = if target_variance > 0.0 {
        ks_test(samples, target_variance.sqrt())
    } else {
        (1.0, 0.0)
    };
    let verdict = if degenerate {
        Verdict::NotApplicable
    } else if skewness_z.abs() <= Z_LIMIT && kurtosis_z.abs() <= Z_LIMIT && ks_p_value >= P_LIMIT {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(NormalityReport {
        samples: m,
        target_variance,
        sample_variance: m2,
        skewness,
        excess_kurtosis,
        skewness_z,
        kurtosis_z,
        ks_distance,
        ks_p_value,
        verdict,
    })
}

fn ks_test(samples: &[f64], sd: f64) -> (f64, f64) {
    let normal = Normal::new(0.0, sd).expect("positive standard deviation");
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max(f - i as f64 / m).max((i + 1) as f64 / m - f);
    }
    let sq = m.sqrt();
    (d, kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d))
}

/// `P(K > lambda) = 2 sum_{j >= 1} (-1)^{j-1} e^{-2 j^2 lambda^2}`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_rng, NoiseLaw};

    fn draws(law: NoiseLaw, m: usize) -> Vec<f64> {
        let mut rng = sample_rng(11, 0);
        (0..m).map(|_| law.draw(&mut rng)).collect()
    }

    #[test]
    fn gaussian_draws_pass() {
        let r = normality_test(&draws(NoiseLaw::Gaussian, 10_000), 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    }

    #[test]
    fn rademacher_draws_fail_on_kurtosis() {
        let r = normality_test(&draws(NoiseLaw::Rademacher, 10_000), 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.kurtosis_z < -35.0, "{}", r.kurtosis_z);
    }

    #[test]
    fn wrong_variance_fails_ks() {
        let r = normality_test(&draws(NoiseLaw::Gaussian, 10_000), 1.5).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.ks_p_value < 1e-6);
    }

    #[test]
    fn degenerate_variance_is_not_applicable() {
        let r = normality_test(&vec![0.0; 2000], 0.0).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
        assert!(normality_test(&[1.0; 10], 1.0).is_err());
    }

    #[test]
    fn survival_function_values() {
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 1e-3);
    }
}
