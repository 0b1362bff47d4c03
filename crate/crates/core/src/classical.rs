//! Analytic one-sided comparators and their power solvers.

use crate::stats::{normal_cdf, normal_quantile, student_t_quantile, summarize, SampleSummary};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
}

impl TestResult {
    fn new(statistic: f64, threshold: f64) -> Self {
        TestResult { statistic, threshold, reject: statistic > threshold }
    }
}

/// Known-variance z-test of H0: μ ≤ μ0.
pub fn z_test(sample: &[f64], mu0: f64, sigma: f64, alpha: f64) -> Result<TestResult> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let s = summarize(sample)?;
    z_test_from_mean(s.mean, s.n, mu0, sigma, alpha)
}

pub fn z_test_from_mean(mean: f64, n: usize, mu0: f64, sigma: f64, alpha: f64) -> Result<TestResult> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(TestResult::new((mean - mu0) * (n as f64).sqrt() / sigma, normal_quantile(1.0 - alpha)?))
}

/// Alternative mean at which the z-test has the requested power.
pub fn z_test_mu1_for_power(mu0: f64, sigma: f64, n: usize, alpha: f64, power: f64) -> Result<f64> {
    Ok(mu0 + sigma * (normal_quantile(1.0 - alpha)? + normal_quantile(power)?) / (n as f64).sqrt())
}

pub fn t_test_one_sample(sample: &[f64], mu0: f64, alpha: f64) -> Result<TestResult> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: sample.len() });
    }
    t_test_from_summary(&summarize(sample)?, mu0, alpha)
}

pub fn t_test_from_summary(s: &SampleSummary, mu0: f64, alpha: f64) -> Result<TestResult> {
    if s.n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: s.n });
    }
    if s.unbiased_sd == 0.0 {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let df = (s.n - 1) as f64;
    Ok(TestResult::new((s.mean - mu0) * (s.n as f64).sqrt() / s.unbiased_sd, student_t_quantile(1.0 - alpha, df)?))
}

/// Satterthwaite degrees of freedom for the Welch statistic.
pub fn welch_df(var_p: f64, n_p: usize, var_t: f64, n_t: usize) -> f64 {
    let (a, b) = (var_p / n_p as f64, var_t / n_t as f64);
    (a + b).powi(2) / (a * a / (n_p - 1) as f64 + b * b / (n_t - 1) as f64)
}

/// Welch approximate t-test of H0: μ_t ≤ μ_p.
pub fn welch_t_test(sample_p: &[f64], sample_t: &[f64], alpha: f64) -> Result<TestResult> {
    for s in [sample_p, sample_t] {
        if s.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: s.len() });
        }
    }
    welch_from_summaries(&summarize(sample_p)?, &summarize(sample_t)?, alpha)
}

pub fn welch_from_summaries(p: &SampleSummary, t: &SampleSummary, alpha: f64) -> Result<TestResult> {
    if p.n < 2 || t.n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: p.n.min(t.n) });
    }
    let (var_p, var_t) = (p.unbiased_sd.powi(2), t.unbiased_sd.powi(2));
    if var_p == 0.0 && var_t == 0.0 {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let se = (var_p / p.n as f64 + var_t / t.n as f64).sqrt();
    let df = welch_df(var_p, p.n, var_t, t.n);
    Ok(TestResult::new((t.mean - p.mean) / se, student_t_quantile(1.0 - alpha, df)?))
}

/// Treatment mean giving the requested normal-approximation Welch power,
/// found by bisection on the power curve.
pub fn welch_mu_t_for_power(mu_p: f64, sigma_p: f64, sigma_t: f64, n: usize, alpha: f64, power: f64) -> Result<f64> {
    if !(sigma_p > 0.0 && sigma_t > 0.0) || n == 0 {
        return Err(Error::Domain("welch power needs positive sigmas and n".into()));
    }
    if !(power > alpha && power < 1.0) {
        return Err(Error::Domain(format!("target power must lie in (alpha, 1), got {power}")));
    }
    let se = ((sigma_p * sigma_p + sigma_t * sigma_t) / n as f64).sqrt();
    let z = normal_quantile(1.0 - alpha)?;
    let power_at = |delta: f64| normal_cdf(delta / se - z);
    let (mut lo, mut hi) = (0.0, se);
    while power_at(hi) < power {
        hi *= 2.0;
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if power_at(mid) < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mu_p + 0.5 * (lo + hi))
}
