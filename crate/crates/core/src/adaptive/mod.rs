//! Two-stage binomial design with sample size reassessment.
//!
//! After stage 1 (`n1` patients per arm) the stage-2 size `n2` is chosen as
//! the smallest value in `[n2_min, n2_max]` whose conditional expected power
//! reaches `cep_target`, averaging conditional power over Beta priors centred
//! at the observed response rates with common variance `gamma`.

mod comparators;

pub use comparators::{bm_decision, bm_statistic, calibrate_bm, incta_decision, incta_statistic};

use crate::stats::{beta_from_moments, draw_beta, draw_binomial, normal_cdf, normal_quantile, BetaParams};
use crate::{Error, RandomStream, Result};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub n1: u32,
    pub n2_min: u32,
    pub n2_max: u32,
    pub cep_target: f64,
    pub gamma: f64,
    /// One-sided level.
    pub alpha: f64,
    pub cep_mc_iters: usize,
}

impl DesignParams {
    /// The re-designed MUSEC study: n1 = 85, n2 in [21, 340], CEP target 0.8, γ = 0.001.
    pub fn musec() -> Self {
        DesignParams { n1: 85, n2_min: 21, n2_max: 340, cep_target: 0.8, gamma: 0.001, alpha: 0.05, cep_mc_iters: 10_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2_min == 0 || self.n2_min > self.n2_max {
            return Err(Error::Config(format!(
                "design needs n1 >= 1 and 1 <= n2_min <= n2_max (got n1={}, n2 in [{}, {}])",
                self.n1, self.n2_min, self.n2_max
            )));
        }
        if !(self.cep_target > 0.0 && self.cep_target < 1.0) {
            return Err(Error::Config(format!("cep_target must lie in (0, 1), got {}", self.cep_target)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.cep_mc_iters == 0 {
            return Err(Error::Config("cep_mc_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// One simulated two-stage trial (counts per arm).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialPath {
    pub x_p1: u32,
    pub x_t1: u32,
    pub n2: u32,
    pub x_p2: u32,
    pub x_t2: u32,
}

impl TrialPath {
    pub fn validate(&self, design: &DesignParams) -> Result<()> {
        let ok = self.x_p1 <= design.n1
            && self.x_t1 <= design.n1
            && self.x_p2 <= self.n2
            && self.x_t2 <= self.n2
            && (design.n2_min..=design.n2_max).contains(&self.n2);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("trial path {self:?} violates the design bounds")))
        }
    }
}

/// Normal-approximation two-proportion statistic with pooled variance.
/// Defined as 0 when the pooled rate is 0 or 1.
pub fn proportion_stat(x_p: u32, x_t: u32, n: u32) -> f64 {
    let nf = n as f64;
    let pooled = (x_p + x_t) as f64 / (2.0 * nf);
    if n == 0 || pooled <= 0.0 || pooled >= 1.0 {
        return 0.0;
    }
    (x_t as f64 / nf - x_p as f64 / nf) / (2.0 * pooled * (1.0 - pooled) / nf).sqrt()
}

/// Conditional power of the final pooled test given the interim statistic,
/// with `z_alpha = Φ⁻¹(α)` (negative for α < 0.5).
pub fn conditional_power(m1: f64, n1: u32, n2: u32, pi_t: f64, pi_p: f64, alpha: f64) -> Result<f64> {
    if n2 == 0 {
        return Err(Error::Domain("n2 must be at least 1".into()));
    }
    let pi = 0.5 * (pi_t + pi_p);
    if !(pi > 0.0 && pi < 1.0) || !(0.0..=1.0).contains(&pi_t) || !(0.0..=1.0).contains(&pi_p) {
        return Err(Error::Domain(format!("conditional power needs rates in (0, 1), got ({pi_t}, {pi_p})")));
    }
    let z_alpha = normal_quantile(alpha)?;
    Ok(normal_cdf(cp_arg(m1, n1 as f64, n2 as f64, z_alpha, (pi_t - pi_p) / (2.0 * pi * (1.0 - pi)).sqrt())))
}

#[inline]
fn cp_arg(m1: f64, n1: f64, n2: f64, z_alpha: f64, drift: f64) -> f64 {
    (z_alpha * (n1 + n2).sqrt() + m1 * n1.sqrt()) / n2.sqrt() + drift * n2.sqrt()
}

/// Prior draws for one CEP integral, reusable across candidate `n2` values.
#[derive(Clone, Debug)]
pub struct CepIntegrand {
    m1: f64,
    n1: f64,
    z_alpha: f64,
    /// (π_t − π_p) / sqrt(2π(1−π)) per prior draw.
    drift: Vec<f64>,
}

const RATE_CLIP: f64 = 1e-9;

impl CepIntegrand {
    pub fn draw(
        m1: f64,
        n1: u32,
        prior_t: BetaParams,
        prior_p: BetaParams,
        alpha: f64,
        iters: usize,
        stream: &RandomStream,
    ) -> Result<Self> {
        if iters == 0 {
            return Err(Error::Domain("CEP needs at least one iteration".into()));
        }
        let z_alpha = normal_quantile(alpha)?;
        let mut rng = stream.rng();
        let drift = (0..iters)
            .map(|_| {
                let pi_p = draw_beta(&mut rng, prior_p).clamp(RATE_CLIP, 1.0 - RATE_CLIP);
                let pi_t = draw_beta(&mut rng, prior_t).clamp(RATE_CLIP, 1.0 - RATE_CLIP);
                let pi = 0.5 * (pi_t + pi_p);
                (pi_t - pi_p) / (2.0 * pi * (1.0 - pi)).sqrt()
            })
            .collect();
        Ok(CepIntegrand { m1, n1: n1 as f64, z_alpha, drift })
    }

    pub fn eval(&self, n2: u32) -> f64 {
        let n2 = n2 as f64;
        let base = (self.z_alpha * (self.n1 + n2).sqrt() + self.m1 * self.n1.sqrt()) / n2.sqrt();
        let root = n2.sqrt();
        self.drift.iter().map(|d| normal_cdf(base + d * root)).sum::<f64>() / self.drift.len() as f64
    }
}

/// Monte Carlo conditional expected power over independent Beta priors.
#[allow(clippy::too_many_arguments)]
pub fn conditional_expected_power(
    m1: f64,
    n1: u32,
    n2: u32,
    prior_t: BetaParams,
    prior_p: BetaParams,
    alpha: f64,
    iters: usize,
    stream: &RandomStream,
) -> Result<f64> {
    if n2 == 0 {
        return Err(Error::Domain("n2 must be at least 1".into()));
    }
    Ok(CepIntegrand::draw(m1, n1, prior_t, prior_p, alpha, iters, stream)?.eval(n2))
}

/// Beta prior centred at an observed stage-1 rate: the mean is clipped to
/// [1/(2 n1), 1 − 1/(2 n1)] and γ shrunk to 0.9·mean(1−mean) when infeasible.
pub fn interim_prior(responders: u32, n1: u32, gamma: f64) -> Result<BetaParams> {
    let lo = 1.0 / (2.0 * n1 as f64);
    let mean = (responders as f64 / n1 as f64).clamp(lo, 1.0 - lo);
    let variance = gamma.min(0.9 * mean * (1.0 - mean));
    beta_from_moments(mean, variance)
}

/// Smallest n2 in [n2_min, n2_max] with CEP ≥ target, else n2_max.
///
/// The prior draws are made once and shared by every candidate. The search
/// bisects when the endpoints bracket the target; when neither endpoint
/// reaches it, a stride-16 scan looks for an interior crossing first.
pub fn reassess_n2(m1: f64, stage1: (u32, u32), design: &DesignParams, stream: &RandomStream) -> Result<u32> {
    let (x_p1, x_t1) = stage1;
    if x_p1 > design.n1 || x_t1 > design.n1 {
        return Err(Error::Domain(format!("stage-1 counts {stage1:?} exceed n1 = {}", design.n1)));
    }
    let prior_p = interim_prior(x_p1, design.n1, design.gamma)?;
    let prior_t = interim_prior(x_t1, design.n1, design.gamma)?;
    let cep = CepIntegrand::draw(m1, design.n1, prior_t, prior_p, design.alpha, design.cep_mc_iters, stream)?;
    Ok(search_n2(|n2| cep.eval(n2) >= design.cep_target, design.n2_min, design.n2_max))
}

fn search_n2(reaches: impl Fn(u32) -> bool, lo: u32, hi: u32) -> u32 {
    if reaches(lo) {
        return lo;
    }
    if reaches(hi) {
        let (mut below, mut above) = (lo, hi);
        while above - below > 1 {
            let mid = below + (above - below) / 2;
            if reaches(mid) {
                above = mid;
            } else {
                below = mid;
            }
        }
        return above;
    }
    const STRIDE: u32 = 16;
    let mut prev = lo;
    let mut probe = lo + STRIDE;
    while probe < hi {
        if reaches(probe) {
            return (prev + 1..=probe).find(|&n| reaches(n)).unwrap_or(probe);
        }
        prev = probe;
        probe += STRIDE;
    }
    hi
}

/// A design plus the stream that seeds its CEP integrals.
///
/// Reassessment depends only on the stage-1 counts, so each of the
/// `(n1 + 1)²` cells is computed at most once, on the substream addressed by
/// the cell index, and cached. The rule is therefore a fixed function of the
/// interim data, identical for every replicate and thread.
#[derive(Debug)]
pub struct SsrDesign {
    params: DesignParams,
    cep_stream: RandomStream,
    table: Vec<OnceLock<u32>>,
}

impl SsrDesign {
    pub fn new(params: DesignParams, cep_stream: RandomStream) -> Result<Self> {
        params.validate()?;
        let cells = (params.n1 as usize + 1).pow(2);
        Ok(SsrDesign { params, cep_stream, table: (0..cells).map(|_| OnceLock::new()).collect() })
    }

    pub fn params(&self) -> &DesignParams {
        &self.params
    }

    pub fn cep_stream(&self) -> RandomStream {
        self.cep_stream
    }

    fn cell(&self, x_p1: u32, x_t1: u32) -> usize {
        x_p1 as usize * (self.params.n1 as usize + 1) + x_t1 as usize
    }

    /// Reassessed stage-2 size for the given stage-1 responder counts.
    pub fn n2_for(&self, x_p1: u32, x_t1: u32) -> u32 {
        assert!(x_p1 <= self.params.n1 && x_t1 <= self.params.n1, "stage-1 counts exceed n1");
        let idx = self.cell(x_p1, x_t1);
        *self.table[idx].get_or_init(|| {
            let m1 = proportion_stat(x_p1, x_t1, self.params.n1);
            reassess_n2(m1, (x_p1, x_t1), &self.params, &self.cep_stream.substream(idx as u64))
                .expect("validated design and in-range counts")
        })
    }

    /// Same design with a different stage-2 cap; the cache starts empty.
    pub fn with_n2_max(&self, n2_max: u32) -> Result<SsrDesign> {
        let mut params = self.params.clone();
        params.n2_max = n2_max;
        SsrDesign::new(params, self.cep_stream)
    }
}

/// Simulates one trial: stage-1 binomials, reassessment, stage-2 binomials.
pub fn simulate_trial(pi_p: f64, pi_t: f64, design: &SsrDesign, stream: &RandomStream) -> Result<TrialPath> {
    if !(0.0..=1.0).contains(&pi_p) || !(0.0..=1.0).contains(&pi_t) {
        return Err(Error::Domain(format!("response rates must lie in [0, 1], got ({pi_p}, {pi_t})")));
    }
    Ok(simulate_trial_with(pi_p, pi_t, design, &mut stream.rng()))
}

pub(crate) fn simulate_trial_with<R: rand::Rng + ?Sized>(pi_p: f64, pi_t: f64, design: &SsrDesign, rng: &mut R) -> TrialPath {
    let n1 = design.params.n1;
    let x_p1 = draw_binomial(rng, n1, pi_p);
    let x_t1 = draw_binomial(rng, n1, pi_t);
    let n2 = design.n2_for(x_p1, x_t1);
    let x_p2 = draw_binomial(rng, n2, pi_p);
    let x_t2 = draw_binomial(rng, n2, pi_t);
    TrialPath { x_p1, x_t1, n2, x_p2, x_t2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn proportion_stat_examples() {
        assert_eq!(proportion_stat(30, 30, 85), 0.0);
        assert!((proportion_stat(27, 40, 100) - 1.9476).abs() < 1e-3);
        assert_eq!(proportion_stat(0, 0, 85), 0.0);
        assert_eq!(proportion_stat(85, 85, 85), 0.0);
    }

    #[test]
    fn proportion_stat_antisymmetric() {
        for xp in 0..=30 {
            for xt in 0..=30 {
                assert_eq!(proportion_stat(xp, xt, 30), -proportion_stat(xt, xp, 30));
            }
        }
    }

    #[test]
    fn conditional_power_examples() {
        let cp = conditional_power(0.0, 85, 340, 0.3, 0.3, 0.05).unwrap();
        assert!((cp - normal_cdf(-1.8390)).abs() < 1e-4 && (cp - 0.0330).abs() < 1e-3, "{cp}");
        assert!((conditional_power(0.0, 85, 1_000_000, 0.45, 0.3, 0.05).unwrap() - 1.0).abs() < 1e-3);
        let at_null = conditional_power(0.0, 85, 1_000_000, 0.3, 0.3, 0.05).unwrap();
        assert!((at_null - 0.05).abs() < 1e-3, "{at_null}");
        let mut prev = 0.0;
        for i in -20..20 {
            let cp = conditional_power(i as f64 * 0.25, 85, 100, 0.35, 0.3, 0.05).unwrap();
            assert!(cp > prev);
            prev = cp;
        }
        assert!(conditional_power(0.0, 85, 100, 0.0, 0.0, 0.05).is_err());
    }

    #[test]
    fn cep_point_mass_reduces_to_cp() {
        let iters = 20_000;
        let prior_t = beta_from_moments(0.4, 1e-9).unwrap();
        let prior_p = beta_from_moments(0.27, 1e-9).unwrap();
        let cep = conditional_expected_power(0.8, 85, 120, prior_t, prior_p, 0.05, iters, &RandomStream::new(1, 1)).unwrap();
        let cp = conditional_power(0.8, 85, 120, 0.4, 0.27, 0.05).unwrap();
        assert!((cep - cp).abs() < 4.0 / (iters as f64).sqrt(), "{cep} vs {cp}");
        assert!((0.0..=1.0).contains(&cep));
    }

    #[test]
    fn reassessment_examples() {
        let d = DesignParams::musec();
        let s = RandomStream::new(2, 0);
        let fav = reassess_n2(proportion_stat(15, 45, 85), (15, 45), &d, &s).unwrap();
        assert_eq!(fav, 21);
        let null_like = reassess_n2(0.0, (25, 25), &d, &s).unwrap();
        assert_eq!(null_like, 340);
    }

    #[test]
    fn favorable_cell_clears_target_at_minimum() {
        let d = DesignParams::musec();
        let s = RandomStream::new(2, 0);
        let prior_p = interim_prior(15, 85, d.gamma).unwrap();
        let prior_t = interim_prior(45, 85, d.gamma).unwrap();
        let cep = conditional_expected_power(proportion_stat(15, 45, 85), 85, 21, prior_t, prior_p, 0.05, 10_000, &s).unwrap();
        assert!(cep >= 0.8);
        let prior = interim_prior(25, 85, d.gamma).unwrap();
        let cep = conditional_expected_power(0.0, 85, 340, prior, prior, 0.05, 10_000, &s).unwrap();
        assert!(cep < 0.8);
    }

    #[test]
    fn search_finds_smallest_crossing() {
        assert_eq!(search_n2(|n| n >= 100, 21, 340), 100);
        assert_eq!(search_n2(|_| true, 21, 340), 21);
        assert_eq!(search_n2(|_| false, 21, 340), 340);
        // hump: crossing only in the interior
        assert_eq!(search_n2(|n| (150..200).contains(&n), 21, 340), 150);
    }

    #[test]
    fn degenerate_trial() {
        let design = SsrDesign::new(DesignParams::musec(), RandomStream::new(3, 0)).unwrap();
        let path = simulate_trial(0.0, 0.0, &design, &RandomStream::new(4, 0)).unwrap();
        assert_eq!(path, TrialPath { x_p1: 0, x_t1: 0, n2: 340, x_p2: 0, x_t2: 0 });
    }

    #[test]
    fn reassessment_is_nonincreasing_in_interim_effect() {
        // fix placebo responders, increase treatment responders
        let design = SsrDesign::new(DesignParams::musec(), RandomStream::new(5, 0)).unwrap();
        let mut pairs = 0;
        let mut violations = 0;
        for x_p in [15u32, 23, 31] {
            let n2: Vec<u32> = (x_p..=x_p + 30).map(|x_t| design.n2_for(x_p, x_t)).collect();
            for w in n2.windows(2) {
                pairs += 1;
                if w[1] > w[0] + 2 {
                    violations += 1;
                }
            }
        }
        assert!(violations as f64 <= 0.01 * pairs as f64, "{violations}/{pairs}");
    }

    #[test]
    fn trial_paths_respect_bounds_and_replay() {
        let design = SsrDesign::new(DesignParams::musec(), RandomStream::new(6, 0)).unwrap();
        let base = RandomStream::new(7, 0);
        let a: Vec<TrialPath> = (0..300).into_par_iter().map(|i| simulate_trial(0.27, 0.4, &design, &base.substream(i)).unwrap()).collect();
        let b: Vec<TrialPath> = (0..300).map(|i| simulate_trial(0.27, 0.4, &design, &base.substream(i)).unwrap()).collect();
        assert_eq!(a, b);
        for p in &a {
            p.validate(design.params()).unwrap();
        }
    }
}
