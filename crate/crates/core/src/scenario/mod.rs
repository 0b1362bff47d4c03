//! Scenario definitions and the data builders for both network folds.
//!
//! A [`ScenarioSpec`] fixes the data law under the null and the training
//! alternatives. A [`Simulator`] wraps a spec (and, for the adaptive design,
//! its reassessment cache) and draws replicates on caller-supplied streams.
//!
//! Normal replicates are drawn through their sufficient statistics:
//! x̄ ~ N(μ, σ²/n) and Σ(x − x̄)² ~ σ² χ²(n − 1), independent. Every feature
//! the networks see is a function of these two quantities, so the law is the
//! same as drawing `n` raw observations.

mod dataset;

pub use dataset::{Dataset, LabeledExample};

use crate::adaptive::{simulate_trial_with, DesignParams, SsrDesign, TrialPath};
use crate::classical::{welch_mu_t_for_power, z_test_mu1_for_power};
use crate::stats::{draw_normal, normal_cdf, normal_quantile, summarize, SampleSummary};
use crate::{Error, RandomStream, Result};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Regular sequence of `points` values from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(start: f64, stop: f64, points: usize) -> Self {
        Grid { start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        regular_sequence(self.start, self.stop, self.points)
    }
}

pub fn regular_sequence(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points).map(|i| if i + 1 == points { stop } else { start + step * i as f64 }).collect()
        }
    }
}

/// Monte Carlo sizes: training draws per grid set under the null (`b0`) and
/// alternative (`b1`), number of critical-value inputs `l`, and null
/// replicates per critical input `b_prime`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub b0: usize,
    pub b1: usize,
    pub l: usize,
    pub b_prime: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// One-sample normal mean with σ known; statistic input is x̄.
    NormalKnownSigma { mu0: f64, mu1: f64, sigma: f64, n: usize },
    /// One-sample normal mean with σ unknown. The alternative for grid value
    /// σ_a is the mean giving the z-test power `alt_power`.
    NormalUnknownSigma { mu0: f64, sigma_grid: Grid, alt_power: f64, n: usize },
    /// Two normal arms with unequal variances, placebo mean `mu_p`. Every
    /// (σ_p, σ_t) pair on the grid is paired with each alternative power.
    BehrensFisher { mu_p: f64, sigma_grid: Grid, alt_powers: Vec<f64>, n: usize },
    /// Two-stage binomial trial with sample size reassessment; the
    /// alternative treatment rate gives `alt_power` at `alt_n` per group.
    AdaptiveBinomial { pi_grid: Grid, alt_power: f64, alt_n: usize, design: DesignParams, cep_seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub alpha: f64,
    pub counts: Counts,
    pub kind: ScenarioKind,
}

impl ScenarioSpec {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::NormalKnownSigma { .. } => "normal-known-sigma",
            ScenarioKind::NormalUnknownSigma { .. } => "normal-unknown-sigma",
            ScenarioKind::BehrensFisher { .. } => "behrens-fisher",
            ScenarioKind::AdaptiveBinomial { .. } => "adaptive-binomial",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        let c = &self.counts;
        if c.b0 == 0 || c.b_prime == 0 {
            return Err(Error::Config("b0 and b_prime must be at least 1".into()));
        }
        let grid_ok = |g: &Grid, lo: f64, hi: f64| g.points >= 1 && g.values().iter().all(|&v| v > lo && v < hi);
        match &self.kind {
            ScenarioKind::NormalKnownSigma { sigma, n, .. } => {
                if !(*sigma > 0.0) || *n < 2 {
                    return Err(Error::Config("known-sigma scenario needs sigma > 0 and n >= 2".into()));
                }
            }
            ScenarioKind::NormalUnknownSigma { sigma_grid, alt_power, n, .. } => {
                if !grid_ok(sigma_grid, 0.0, f64::INFINITY) || *n < 2 || !(*alt_power > 0.0 && *alt_power < 1.0) {
                    return Err(Error::Config("unknown-sigma scenario needs a positive sigma grid, n >= 2, power in (0, 1)".into()));
                }
                self.check_l(c.l)?;
            }
            ScenarioKind::BehrensFisher { sigma_grid, alt_powers, n, .. } => {
                if !grid_ok(sigma_grid, 0.0, f64::INFINITY) || *n < 2 || alt_powers.is_empty() {
                    return Err(Error::Config("Behrens-Fisher scenario needs a positive sigma grid, n >= 2 and alternative powers".into()));
                }
                if alt_powers.iter().any(|p| !(*p > self.alpha && *p < 1.0)) {
                    return Err(Error::Config("alternative powers must lie in (alpha, 1)".into()));
                }
                let side = (c.l as f64).sqrt().round() as usize;
                if side < 2 || side * side != c.l {
                    return Err(Error::Config(format!("Behrens-Fisher needs l to be a square >= 4, got {}", c.l)));
                }
            }
            ScenarioKind::AdaptiveBinomial { pi_grid, alt_power, alt_n, design, .. } => {
                if !grid_ok(pi_grid, 0.0, 1.0) || *alt_n == 0 || !(*alt_power > 0.0 && *alt_power < 1.0) {
                    return Err(Error::Config("adaptive scenario needs rates in (0, 1), alt_n >= 1, power in (0, 1)".into()));
                }
                design.validate()?;
                self.check_l(c.l)?;
            }
        }
        Ok(())
    }

    fn check_l(&self, l: usize) -> Result<()> {
        if l < 2 {
            return Err(Error::Config(format!("l must be at least 2, got {l}")));
        }
        Ok(())
    }

    /// Number of training sets A.
    pub fn set_count(&self) -> usize {
        match &self.kind {
            ScenarioKind::NormalKnownSigma { .. } => 1,
            ScenarioKind::NormalUnknownSigma { sigma_grid, .. } => sigma_grid.points,
            ScenarioKind::BehrensFisher { sigma_grid, alt_powers, .. } => sigma_grid.points.pow(2) * alt_powers.len(),
            ScenarioKind::AdaptiveBinomial { pi_grid, .. } => pi_grid.points,
        }
    }

    /// Multiplies every Monte Carlo count by `scale` (at least 1 each; `l`
    /// is a grid size and is left alone).
    pub fn scaled(&self, scale: f64) -> ScenarioSpec {
        let s = |v: usize| ((v as f64 * scale).round() as usize).max(1);
        let mut out = self.clone();
        out.counts.b0 = s(self.counts.b0);
        out.counts.b1 = if self.counts.b1 == 0 { 0 } else { s(self.counts.b1) };
        out.counts.b_prime = s(self.counts.b_prime);
        out
    }
}

/// Parameters of the data-generating law for one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Truth {
    Normal { mu: f64, sigma: f64 },
    TwoNormal { mu_p: f64, sigma_p: f64, mu_t: f64, sigma_t: f64 },
    Binary { pi_p: f64, pi_t: f64 },
}

impl Truth {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Truth::Normal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            Truth::TwoNormal { mu_p, sigma_p, mu_t, sigma_t } => mu_p.is_finite() && mu_t.is_finite() && sigma_p > 0.0 && sigma_t > 0.0,
            Truth::Binary { pi_p, pi_t } => (0.0..=1.0).contains(&pi_p) && (0.0..=1.0).contains(&pi_t),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameters {self:?}")))
        }
    }
}

/// Raw observed data for a decision.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    OneSample(Vec<f64>),
    TwoSample { placebo: Vec<f64>, treatment: Vec<f64> },
    Trial(TrialPath),
}

/// The sufficient summary of one replicate, from which both feature vectors
/// and the classical comparators are computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Summary {
    Mean { mean: f64, n: usize },
    OneSample(SampleSummary),
    TwoSample { placebo: SampleSummary, treatment: SampleSummary },
    Trial(TrialPath),
}

/// Draws data for one scenario. Cheap to clone; the adaptive reassessment
/// cache is shared between clones.
#[derive(Clone, Debug)]
pub struct Simulator {
    spec: ScenarioSpec,
    design: Option<Arc<SsrDesign>>,
}

impl Simulator {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let design = match &spec.kind {
            ScenarioKind::AdaptiveBinomial { design, cep_seed, .. } => {
                Some(Arc::new(SsrDesign::new(design.clone(), RandomStream::new(*cep_seed, 0).labeled("cep"))?))
            }
            _ => None,
        };
        Ok(Simulator { spec, design })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn design(&self) -> Option<&SsrDesign> {
        self.design.as_deref()
    }

    fn require_design(&self) -> Result<&SsrDesign> {
        self.design().ok_or_else(|| Error::Usage(format!("{} scenario has no adaptive design", self.spec.kind_name())))
    }

    /// Same adaptive scenario with a different stage-2 cap.
    pub fn with_n2_max(&self, n2_max: u32) -> Result<Simulator> {
        let mut spec = self.spec.clone();
        match &mut spec.kind {
            ScenarioKind::AdaptiveBinomial { design, .. } => design.n2_max = n2_max,
            _ => return Err(Error::Usage("only adaptive scenarios have n2_max".into())),
        }
        Simulator::new(spec)
    }

    pub fn statistic_names(&self) -> Vec<String> {
        let names: &[&str] = match self.spec.kind {
            ScenarioKind::NormalKnownSigma { .. } => &["mean"],
            ScenarioKind::NormalUnknownSigma { .. } => &["mean", "sd_mle"],
            ScenarioKind::BehrensFisher { .. } => &["diff", "sd_p_mle", "sd_t_mle"],
            ScenarioKind::AdaptiveBinomial { .. } => &["diff1", "diff2", "n2"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn critical_names(&self) -> Vec<String> {
        let names: &[&str] = match self.spec.kind {
            ScenarioKind::NormalKnownSigma { .. } => &[],
            ScenarioKind::NormalUnknownSigma { .. } => &["sd"],
            ScenarioKind::BehrensFisher { .. } => &["sd_p", "sd_t"],
            ScenarioKind::AdaptiveBinomial { .. } => &["pooled_rate1"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn statistic_dim(&self) -> usize {
        match self.spec.kind {
            ScenarioKind::NormalKnownSigma { .. } => 1,
            ScenarioKind::NormalUnknownSigma { .. } => 2,
            _ => 3,
        }
    }

    pub fn critical_dim(&self) -> usize {
        match self.spec.kind {
            ScenarioKind::NormalKnownSigma { .. } => 0,
            ScenarioKind::BehrensFisher { .. } => 2,
            _ => 1,
        }
    }

    /// `(null, alternative)` laws for each of the A training sets.
    pub fn training_truths(&self) -> Result<Vec<(Truth, Truth)>> {
        let alpha = self.spec.alpha;
        match &self.spec.kind {
            ScenarioKind::NormalKnownSigma { mu0, mu1, sigma, .. } => {
                Ok(vec![(Truth::Normal { mu: *mu0, sigma: *sigma }, Truth::Normal { mu: *mu1, sigma: *sigma })])
            }
            ScenarioKind::NormalUnknownSigma { mu0, sigma_grid, alt_power, n } => sigma_grid
                .values()
                .into_iter()
                .map(|sigma| {
                    let mu1 = z_test_mu1_for_power(*mu0, sigma, *n, alpha, *alt_power)?;
                    Ok((Truth::Normal { mu: *mu0, sigma }, Truth::Normal { mu: mu1, sigma }))
                })
                .collect(),
            ScenarioKind::BehrensFisher { mu_p, sigma_grid, alt_powers, n } => {
                let sigmas = sigma_grid.values();
                let mut out = Vec::with_capacity(self.spec.set_count());
                for &sigma_p in &sigmas {
                    for &sigma_t in &sigmas {
                        for &power in alt_powers {
                            let mu_t = welch_mu_t_for_power(*mu_p, sigma_p, sigma_t, *n, alpha, power)?;
                            out.push((
                                Truth::TwoNormal { mu_p: *mu_p, sigma_p, mu_t: *mu_p, sigma_t },
                                Truth::TwoNormal { mu_p: *mu_p, sigma_p, mu_t, sigma_t },
                            ));
                        }
                    }
                }
                Ok(out)
            }
            ScenarioKind::AdaptiveBinomial { pi_grid, alt_power, alt_n, .. } => pi_grid
                .values()
                .into_iter()
                .map(|pi_p| {
                    let pi_t = solve_pi_t(pi_p, *alt_power, *alt_n, alpha)?;
                    Ok((Truth::Binary { pi_p, pi_t: pi_p }, Truth::Binary { pi_p, pi_t }))
                })
                .collect(),
        }
    }

    /// Null law indexed by a critical-value input.
    pub fn null_truth(&self, critical_input: &[f64]) -> Result<Truth> {
        if critical_input.len() != self.critical_dim() {
            return Err(Error::Shape(format!(
                "critical input has {} values, scenario expects {}",
                critical_input.len(),
                self.critical_dim()
            )));
        }
        let truth = match &self.spec.kind {
            ScenarioKind::NormalKnownSigma { mu0, sigma, .. } => Truth::Normal { mu: *mu0, sigma: *sigma },
            ScenarioKind::NormalUnknownSigma { mu0, .. } => Truth::Normal { mu: *mu0, sigma: critical_input[0] },
            ScenarioKind::BehrensFisher { mu_p, .. } => {
                Truth::TwoNormal { mu_p: *mu_p, sigma_p: critical_input[0], mu_t: *mu_p, sigma_t: critical_input[1] }
            }
            ScenarioKind::AdaptiveBinomial { .. } => Truth::Binary { pi_p: critical_input[0], pi_t: critical_input[0] },
        };
        truth.validate()?;
        Ok(truth)
    }

    pub fn check_truth(&self, truth: &Truth) -> Result<()> {
        truth.validate()?;
        let matches = matches!(
            (&self.spec.kind, truth),
            (ScenarioKind::NormalKnownSigma { .. } | ScenarioKind::NormalUnknownSigma { .. }, Truth::Normal { .. })
                | (ScenarioKind::BehrensFisher { .. }, Truth::TwoNormal { .. })
                | (ScenarioKind::AdaptiveBinomial { .. }, Truth::Binary { .. })
        );
        if matches {
            Ok(())
        } else {
            Err(Error::Usage(format!("{truth:?} does not fit a {} scenario", self.spec.kind_name())))
        }
    }

    fn n(&self) -> usize {
        match self.spec.kind {
            ScenarioKind::NormalKnownSigma { n, .. }
            | ScenarioKind::NormalUnknownSigma { n, .. }
            | ScenarioKind::BehrensFisher { n, .. } => n,
            ScenarioKind::AdaptiveBinomial { .. } => 0,
        }
    }

    /// One replicate under `truth`. The truth must already be checked.
    pub fn draw<R: Rng + ?Sized>(&self, truth: &Truth, rng: &mut R) -> Summary {
        let n = self.n();
        match (*truth, &self.spec.kind) {
            (Truth::Normal { mu, sigma }, ScenarioKind::NormalKnownSigma { .. }) => {
                Summary::Mean { mean: draw_normal(rng, mu, sigma / (n as f64).sqrt()), n }
            }
            (Truth::Normal { mu, sigma }, _) => Summary::OneSample(draw_normal_summary(rng, mu, sigma, n)),
            (Truth::TwoNormal { mu_p, sigma_p, mu_t, sigma_t }, _) => {
                let placebo = draw_normal_summary(rng, mu_p, sigma_p, n);
                let treatment = draw_normal_summary(rng, mu_t, sigma_t, n);
                Summary::TwoSample { placebo, treatment }
            }
            (Truth::Binary { pi_p, pi_t }, _) => {
                Summary::Trial(simulate_trial_with(pi_p, pi_t, self.design.as_ref().expect("adaptive scenario"), rng))
            }
        }
    }

    /// `count` replicates; replicate `i` uses `stream.substream(i)`.
    pub fn draw_many(&self, truth: &Truth, count: usize, stream: &RandomStream) -> Result<Vec<Summary>> {
        self.check_truth(truth)?;
        Ok((0..count).into_par_iter().map(|i| self.draw(truth, &mut stream.substream(i as u64).rng())).collect())
    }

    /// Statistic-network inputs of `count` replicates, one row each.
    pub fn statistic_matrix(&self, truth: &Truth, count: usize, stream: &RandomStream) -> Result<Array2<f64>> {
        self.check_truth(truth)?;
        let dim = self.statistic_dim();
        let mut out = Array2::zeros((count, dim));
        out.as_slice_mut().expect("standard layout").par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
            let s = self.draw(truth, &mut stream.substream(i as u64).rng());
            self.statistic_features(&s, row);
        });
        Ok(out)
    }

    /// Summarizes observed data, checking it fits the scenario.
    pub fn summarize(&self, obs: &Observation) -> Result<Summary> {
        let n = self.n();
        let check_n = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::Usage(format!("scenario was fitted for n = {n}, observed {len}")))
            }
        };
        match (obs, &self.spec.kind) {
            (Observation::OneSample(x), ScenarioKind::NormalKnownSigma { .. }) => {
                check_n(x.len())?;
                Ok(Summary::Mean { mean: summarize(x)?.mean, n })
            }
            (Observation::OneSample(x), ScenarioKind::NormalUnknownSigma { .. }) => {
                check_n(x.len())?;
                Ok(Summary::OneSample(summarize(x)?))
            }
            (Observation::TwoSample { placebo, treatment }, ScenarioKind::BehrensFisher { .. }) => {
                check_n(placebo.len())?;
                check_n(treatment.len())?;
                Ok(Summary::TwoSample { placebo: summarize(placebo)?, treatment: summarize(treatment)? })
            }
            (Observation::Trial(path), ScenarioKind::AdaptiveBinomial { design, .. }) => {
                path.validate(design)?;
                Ok(Summary::Trial(*path))
            }
            _ => Err(Error::Usage(format!("observation does not fit a {} scenario", self.spec.kind_name()))),
        }
    }

    /// Statistic inputs: MLE plug-ins (divisor n) for spreads.
    pub fn statistic_features(&self, s: &Summary, out: &mut [f64]) {
        match *s {
            Summary::Mean { mean, .. } => out[0] = mean,
            Summary::OneSample(x) => {
                out[0] = x.mean;
                out[1] = x.mle_sd;
            }
            Summary::TwoSample { placebo, treatment } => {
                out[0] = treatment.mean - placebo.mean;
                out[1] = placebo.mle_sd;
                out[2] = treatment.mle_sd;
            }
            Summary::Trial(p) => {
                let n1 = self.design.as_ref().expect("adaptive scenario").params().n1 as f64;
                let n2 = p.n2 as f64;
                out[0] = (p.x_t1 as f64 - p.x_p1 as f64) / n1;
                out[1] = (p.x_t2 as f64 - p.x_p2 as f64) / n2;
                out[2] = n2;
            }
        }
    }

    /// Critical-value inputs: unbiased spreads, or the pooled stage-1 rate.
    pub fn critical_features(&self, s: &Summary, out: &mut [f64]) {
        match *s {
            Summary::Mean { .. } => {}
            Summary::OneSample(x) => out[0] = x.unbiased_sd,
            Summary::TwoSample { placebo, treatment } => {
                out[0] = placebo.unbiased_sd;
                out[1] = treatment.unbiased_sd;
            }
            Summary::Trial(p) => {
                let n1 = self.design.as_ref().expect("adaptive scenario").params().n1 as f64;
                out[0] = (p.x_p1 + p.x_t1) as f64 / (2.0 * n1);
            }
        }
    }
}

fn draw_normal_summary<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64, n: usize) -> SampleSummary {
    let nf = n as f64;
    let mean = draw_normal(rng, mu, sigma / nf.sqrt());
    let ss = sigma * sigma * ChiSquared::new(nf - 1.0).expect("n >= 2").sample(rng);
    SampleSummary { n, mean, mle_sd: (ss / nf).sqrt(), unbiased_sd: (ss / (nf - 1.0)).sqrt() }
}

/// First-fold training data: for each of the A sets, `b0` null rows
/// labelled 0 followed by `b1` alternative rows labelled 1.
pub fn gen_training(sim: &Simulator, stream: &RandomStream) -> Result<Dataset> {
    let truths = sim.training_truths()?;
    for (null, alt) in &truths {
        sim.check_truth(null)?;
        sim.check_truth(alt)?;
    }
    let (b0, b1) = (sim.spec.counts.b0, sim.spec.counts.b1);
    let per_set = b0 + b1;
    let streams: Vec<(RandomStream, RandomStream)> = (0..truths.len())
        .map(|a| {
            let s = stream.substream(a as u64);
            (s.labeled("null"), s.labeled("alt"))
        })
        .collect();
    let dim = sim.statistic_dim();
    let rows = truths.len() * per_set;
    let mut features = vec![0.0; rows * dim];
    let mut labels = vec![0.0; rows];
    features.par_chunks_mut(dim).zip(labels.par_iter_mut()).enumerate().for_each(|(r, (row, label))| {
        let (a, i) = (r / per_set, r % per_set);
        let (truth, s, y) = if i < b0 {
            (&truths[a].0, streams[a].0.substream(i as u64), 0.0)
        } else {
            (&truths[a].1, streams[a].1.substream((i - b0) as u64), 1.0)
        };
        let summary = sim.draw(truth, &mut s.rng());
        sim.statistic_features(&summary, row);
        *label = y;
    });
    Dataset::from_parts(sim.statistic_names(), features, labels)
}

fn require_kind(sim: &Simulator, kind: &'static str) -> Result<()> {
    if sim.spec.kind_name() == kind {
        Ok(())
    } else {
        Err(Error::Usage(format!("expected a {kind} scenario, got {}", sim.spec.kind_name())))
    }
}

pub fn gen_simple_known(sim: &Simulator, stream: &RandomStream) -> Result<Dataset> {
    require_kind(sim, "normal-known-sigma")?;
    gen_training(sim, stream)
}

pub fn gen_simple_unknown(sim: &Simulator, stream: &RandomStream) -> Result<Dataset> {
    require_kind(sim, "normal-unknown-sigma")?;
    gen_training(sim, stream)
}

pub fn gen_behrens_fisher(sim: &Simulator, stream: &RandomStream) -> Result<Dataset> {
    require_kind(sim, "behrens-fisher")?;
    gen_training(sim, stream)
}

pub fn gen_adaptive(sim: &Simulator, stream: &RandomStream) -> Result<Dataset> {
    require_kind(sim, "adaptive-binomial")?;
    sim.require_design()?;
    gen_training(sim, stream)
}

/// Normal-approximation power of the one-sided two-proportion test with
/// pooled null variance at `n` per group.
pub fn proportion_test_power(pi_p: f64, pi_t: f64, n: usize, alpha: f64) -> Result<f64> {
    let pi = 0.5 * (pi_p + pi_t);
    let sd = (2.0 * pi * (1.0 - pi)).sqrt();
    Ok(normal_cdf((pi_t - pi_p) * (n as f64).sqrt() / sd - normal_quantile(1.0 - alpha)?))
}

/// Smallest treatment rate above `pi_p` at which the proportion test
/// reaches `power`, to 1e-9.
pub fn solve_pi_t(pi_p: f64, power: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(pi_p > 0.0 && pi_p < 1.0) || !(power > 0.0 && power < 1.0) || n == 0 {
        return Err(Error::Domain(format!("solve_pi_t needs pi_p, power in (0, 1) and n >= 1 (got {pi_p}, {power}, {n})")));
    }
    let (mut lo, mut hi) = (pi_p, 1.0 - 1e-12);
    if proportion_test_power(pi_p, hi, n, alpha)? < power {
        return Err(Error::Infeasible(format!("no treatment rate below 1 gives power {power} from {pi_p} at n = {n}")));
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if proportion_test_power(pi_p, mid, n, alpha)? < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Inputs at which the critical-value labels are simulated, spanning the
/// nuisance range of the training grid.
pub fn gen_critical_inputs(spec: &ScenarioSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let l = spec.counts.l;
    Ok(match &spec.kind {
        ScenarioKind::NormalKnownSigma { .. } => Vec::new(),
        ScenarioKind::NormalUnknownSigma { sigma_grid: g, .. } | ScenarioKind::AdaptiveBinomial { pi_grid: g, .. } => {
            regular_sequence(g.start, g.stop, l).into_iter().map(|v| vec![v]).collect()
        }
        ScenarioKind::BehrensFisher { sigma_grid: g, .. } => {
            let side = regular_sequence(g.start, g.stop, (l as f64).sqrt().round() as usize);
            side.iter().flat_map(|&p| side.iter().map(move |&t| vec![p, t])).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known(b0: usize, b1: usize, mu1: f64) -> Simulator {
        Simulator::new(ScenarioSpec {
            alpha: 0.05,
            counts: Counts { b0, b1, l: 2, b_prime: 10 },
            kind: ScenarioKind::NormalKnownSigma { mu0: 0.0, mu1, sigma: 1.0, n: 50 },
        })
        .unwrap()
    }

    fn unknown(b: usize) -> Simulator {
        Simulator::new(ScenarioSpec {
            alpha: 0.05,
            counts: Counts { b0: b, b1: b, l: 100, b_prime: 10 },
            kind: ScenarioKind::NormalUnknownSigma { mu0: 0.0, sigma_grid: Grid::new(0.6, 2.4, 10), alt_power: 0.9, n: 100 },
        })
        .unwrap()
    }

    fn bf(b: usize) -> Simulator {
        Simulator::new(ScenarioSpec {
            alpha: 0.05,
            counts: Counts { b0: b, b1: b, l: 100, b_prime: 10 },
            kind: ScenarioKind::BehrensFisher { mu_p: 0.0, sigma_grid: Grid::new(0.8, 1.2, 5), alt_powers: vec![0.6, 0.8], n: 100 },
        })
        .unwrap()
    }

    fn adaptive(b: usize) -> Simulator {
        let mut design = DesignParams::musec();
        design.cep_mc_iters = 1000;
        Simulator::new(ScenarioSpec {
            alpha: 0.05,
            counts: Counts { b0: b, b1: b, l: 100, b_prime: 10 },
            kind: ScenarioKind::AdaptiveBinomial { pi_grid: Grid::new(0.05, 0.5, 46), alt_power: 0.85, alt_n: 170, design, cep_seed: 5 },
        })
        .unwrap()
    }

    fn column_mean(d: &Dataset, col: usize, rows: impl Iterator<Item = usize>) -> f64 {
        let v: Vec<f64> = rows.map(|i| d.row(i)[col]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn known_sigma_dataset() {
        let sim = known(1000, 1000, 0.414);
        let d = gen_simple_known(&sim, &RandomStream::new(1, 0)).unwrap();
        assert_eq!(d.len(), 2000);
        assert!((column_mean(&d, 0, 1000..2000) - 0.414).abs() < 0.02);
        let d = gen_simple_known(&known(50, 0, 0.414), &RandomStream::new(1, 0)).unwrap();
        assert!(d.labels().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn equal_means_are_indistinguishable() {
        let mut pass = 0;
        for rep in 0..20 {
            let d = gen_simple_known(&known(500, 500, 0.0), &RandomStream::new(100 + rep, 0)).unwrap();
            let a: Vec<f64> = (0..500).map(|i| d.row(i)[0]).collect();
            let b: Vec<f64> = (500..1000).map(|i| d.row(i)[0]).collect();
            if ks(a, b) < 1.358 * (2.0f64 / 500.0).sqrt() {
                pass += 1;
            }
        }
        assert!(pass >= 18, "{pass}");
    }

    #[test]
    fn unknown_sigma_dataset() {
        let sim = unknown(500);
        let d = gen_simple_unknown(&sim, &RandomStream::new(2, 0)).unwrap();
        assert_eq!(d.len(), 10 * 1000);
        assert_eq!(d.labels().iter().filter(|&&y| y == 1.0).count(), 5000);
        // third set has σ = 1
        let sd = column_mean(&d, 1, 2000..3000);
        assert!((sd - 0.9975).abs() < 0.01, "{sd}");
        assert!(d.features().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn behrens_fisher_dataset() {
        let sim = bf(1000);
        assert_eq!(sim.spec().set_count(), 50);
        let d = gen_behrens_fisher(&sim, &RandomStream::new(3, 0)).unwrap();
        assert_eq!(d.len(), 50 * 2000);
        // set index for (σ_p, σ_t) = (0.8, 1.2) at the first power
        let a = 4 * 2;
        let rows = a * 2000..a * 2000 + 1000;
        assert!(column_mean(&d, 0, rows.clone()).abs() < 3.0 * (2.0f64 / 100.0).sqrt() / 1000f64.sqrt());
        // E[σ̂_mle] = σ sqrt(2/n) Γ(n/2) / Γ((n-1)/2)
        use statrs::function::gamma::ln_gamma;
        let factor = (2.0f64 / 100.0).sqrt() * (ln_gamma(50.0) - ln_gamma(49.5)).exp();
        assert!((column_mean(&d, 1, rows.clone()) - 0.8 * factor).abs() < 0.005);
        assert!((column_mean(&d, 2, rows) - 1.2 * factor).abs() < 0.005);
    }

    #[test]
    fn adaptive_dataset() {
        let sim = adaptive(40);
        let d = gen_adaptive(&sim, &RandomStream::new(4, 0)).unwrap();
        assert_eq!(d.len(), 46 * 80);
        assert!((0..d.len()).all(|i| (21.0..=340.0).contains(&d.row(i)[2])));
        let null_rows = (0..d.len()).filter(|&i| d.labels()[i] == 0.0);
        assert!(column_mean(&d, 0, null_rows).abs() < 0.01);
    }

    #[test]
    fn summary_law_matches_raw_samples() {
        let sim = unknown(1);
        let truth = Truth::Normal { mu: 0.3, sigma: 1.7 };
        let base = RandomStream::new(6, 0);
        let direct: Vec<f64> = sim
            .draw_many(&truth, 4000, &base)
            .unwrap()
            .iter()
            .map(|s| match s {
                Summary::OneSample(x) => x.unbiased_sd,
                _ => unreachable!(),
            })
            .collect();
        let raw: Vec<f64> = (0..4000)
            .map(|i| {
                summarize(&crate::stats::sample_normal(&base.labeled("raw").substream(i), 0.3, 1.7, 100).unwrap()).unwrap().unbiased_sd
            })
            .collect();
        assert!(ks(direct, raw) < 1.628 * (2.0f64 / 4000.0).sqrt());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let sim = unknown(100);
        let a = gen_simple_unknown(&sim, &RandomStream::new(7, 0)).unwrap();
        let b = gen_simple_unknown(&sim, &RandomStream::new(7, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        assert!(matches!(gen_simple_known(&unknown(1), &RandomStream::new(0, 0)), Err(Error::Usage(_))));
    }

    #[test]
    fn pi_t_solver() {
        let pi_t = solve_pi_t(0.27, 0.85, 170, 0.05).unwrap();
        assert!((pi_t - 0.40).abs() < 0.01, "{pi_t}");
        assert!((solve_pi_t(0.27, 0.0501, 170, 0.05).unwrap() - 0.27).abs() < 1e-3);
        let mut prev = 0.27;
        for p in [0.2, 0.4, 0.6, 0.8, 0.95] {
            let v = solve_pi_t(0.27, p, 170, 0.05).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(matches!(solve_pi_t(0.9, 0.999999, 5, 0.05), Err(Error::Infeasible(_))));
    }

    #[test]
    fn critical_inputs() {
        let u = gen_critical_inputs(unknown(1).spec()).unwrap();
        assert_eq!(u.len(), 100);
        assert_eq!((u[0][0], u[99][0]), (0.6, 2.4));
        assert!((u[1][0] - u[0][0] - 1.8 / 99.0).abs() < 1e-12);
        let a = gen_critical_inputs(adaptive(1).spec()).unwrap();
        assert_eq!((a[0][0], a[99][0]), (0.05, 0.5));
        let b = gen_critical_inputs(bf(1).spec()).unwrap();
        assert_eq!(b.len(), 100);
        assert!(b.iter().all(|v| v.len() == 2));
    }

    #[test]
    fn observation_checks() {
        let sim = unknown(1);
        assert!(matches!(sim.summarize(&Observation::OneSample(vec![0.0; 10])), Err(Error::Usage(_))));
        assert!(sim.summarize(&Observation::OneSample((0..100).map(|i| i as f64).collect())).is_ok());
        assert!(matches!(sim.summarize(&Observation::TwoSample { placebo: vec![], treatment: vec![] }), Err(Error::Usage(_))));
    }
}
