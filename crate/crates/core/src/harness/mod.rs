//! Config-driven experiment runner: fit, validate, tabulate, cache.

mod asn;
mod heatmap;
mod reproduce;
mod table;

pub use asn::{asn_for_power, AsnOptions, AsnOutcome};
pub use heatmap::{heatmap_export, Heatmap, HeatmapCell};
pub use reproduce::{canned, exhibit_configs, reproduce, Exhibit, CANNED};
pub use table::{Metric, ResultRow, ResultsTable};

use crate::adaptive::{bm_decision, incta_decision};
use crate::classical::{t_test_from_summary, welch_from_summaries, z_test_from_mean};
use crate::neural::{Head, TrainConfig};
use crate::pipeline::{fit_test, load_bundle, save_bundle, CandidatePool, FitPlan, FittedTest};
use crate::scenario::{gen_training, ScenarioKind, ScenarioSpec, Simulator, Summary, Truth};
use crate::{Error, RandomStream, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Depth × width grid of candidate structures; the head is implied by the fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub dropout: f64,
}

impl PoolConfig {
    pub fn build(&self, input_dim: usize, head: Head) -> Result<CandidatePool> {
        CandidatePool::grid(input_dim, &self.depths, &self.widths, head, self.dropout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Comparator {
    ZTest,
    TTest,
    Welch,
    Incta,
    /// Pooled two-stage z-test at an adjusted nominal level.
    Bm {
        level: f64,
    },
}

impl Comparator {
    pub fn name(&self) -> &'static str {
        match self {
            Comparator::ZTest => "z-test",
            Comparator::TTest => "t-test",
            Comparator::Welch => "welch",
            Comparator::Incta => "incta",
            Comparator::Bm { .. } => "bm",
        }
    }

    fn check(&self, spec: &ScenarioSpec) -> Result<()> {
        let ok = matches!(
            (self, &spec.kind),
            (Comparator::ZTest, ScenarioKind::NormalKnownSigma { .. })
                | (Comparator::TTest, ScenarioKind::NormalUnknownSigma { .. })
                | (Comparator::Welch, ScenarioKind::BehrensFisher { .. })
                | (Comparator::Incta | Comparator::Bm { .. }, ScenarioKind::AdaptiveBinomial { .. })
        );
        if let Comparator::Bm { level } = self {
            if !(*level > 0.0 && *level < 0.5) {
                return Err(Error::Config(format!("bm level must lie in (0, 0.5), got {level}")));
            }
        }
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("comparator {} does not apply to a {} scenario", self.name(), spec.kind_name())))
        }
    }

    /// Decision on one replicate summary.
    pub fn decide(&self, spec: &ScenarioSpec, s: &Summary) -> Result<bool> {
        let alpha = spec.alpha;
        match (self, s, &spec.kind) {
            (Comparator::ZTest, Summary::Mean { mean, n }, ScenarioKind::NormalKnownSigma { mu0, sigma, .. }) => {
                Ok(z_test_from_mean(*mean, *n, *mu0, *sigma, alpha)?.reject)
            }
            (Comparator::TTest, Summary::OneSample(x), ScenarioKind::NormalUnknownSigma { mu0, .. }) => {
                Ok(t_test_from_summary(x, *mu0, alpha)?.reject)
            }
            (Comparator::Welch, Summary::TwoSample { placebo, treatment }, _) => {
                Ok(welch_from_summaries(placebo, treatment, alpha)?.reject)
            }
            (Comparator::Incta, Summary::Trial(p), ScenarioKind::AdaptiveBinomial { design, .. }) => incta_decision(p, design.n1, alpha),
            (Comparator::Bm { level }, Summary::Trial(p), ScenarioKind::AdaptiveBinomial { design, .. }) => {
                bm_decision(p, design.n1, *level)
            }
            _ => Err(Error::Usage(format!("comparator {} cannot decide this replicate", self.name()))),
        }
    }
}

/// A law at which rejection rates are estimated, with published values
/// keyed by method name (and `asn` for adaptive designs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub truth: Truth,
    #[serde(default)]
    pub published: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Validation replicates per point.
    pub b_val: usize,
    pub scenario: ScenarioSpec,
    pub statistic_pool: PoolConfig,
    pub critical_pool: PoolConfig,
    pub statistic_train: TrainConfig,
    pub critical_train: TrainConfig,
    #[serde(default)]
    pub comparators: Vec<Comparator>,
    #[serde(default)]
    pub points: Vec<ValidationPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.b_val == 0 || self.scenario.counts.b1 == 0 {
            return Err(Error::Config("b1 and b_val must be at least 1".into()));
        }
        self.statistic_train.validate()?;
        self.critical_train.validate()?;
        for pool in [&self.statistic_pool, &self.critical_pool] {
            pool.build(1, Head::LinearRegressor)?;
        }
        for c in &self.comparators {
            c.check(&self.scenario)?;
        }
        let sim = Simulator::new(self.scenario.clone())?;
        for p in &self.points {
            sim.check_truth(&p.truth)?;
        }
        Ok(())
    }

    /// Every Monte Carlo size (B0, B1, B′, B_val) multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Usage(format!("scale must lie in (0, 1], got {scale}")));
        }
        let mut out = self.clone();
        out.scenario = self.scenario.scaled(scale);
        out.b_val = ((self.b_val as f64 * scale).round() as usize).max(1);
        Ok(out)
    }

    /// Replaces the Monte Carlo sizes B0, B1, B′ and B_val.
    pub fn with_sizes(mut self, b0: usize, b1: usize, b_prime: usize, b_val: usize) -> Self {
        self.scenario.counts.b0 = b0;
        self.scenario.counts.b1 = b1;
        self.scenario.counts.b_prime = b_prime;
        self.b_val = b_val;
        self
    }

    pub fn plan<'a>(&'a self, statistic_pool: &'a CandidatePool, critical_pool: &'a CandidatePool) -> FitPlan<'a> {
        FitPlan {
            statistic_pool,
            statistic_config: &self.statistic_train,
            critical_pool,
            critical_config: &self.critical_train,
            seed: self.seed,
        }
    }

    pub fn pools(&self, sim: &Simulator) -> Result<(CandidatePool, CandidatePool)> {
        Ok((
            self.statistic_pool.build(sim.statistic_dim(), Head::LogitClassifier)?,
            self.critical_pool.build(sim.critical_dim().max(1), Head::LinearRegressor)?,
        ))
    }

    /// Hex SHA-256 of the whole config.
    pub fn hash(&self) -> String {
        digest(&serde_json::to_string(self).expect("config serializes"))
    }

    /// Hex SHA-256 of the fields the fitted networks depend on.
    pub fn fit_key(&self) -> String {
        let key = serde_json::json!({
            "version": crate::VERSION,
            "seed": self.seed,
            "scenario": self.scenario,
            "statistic_pool": self.statistic_pool,
            "critical_pool": self.critical_pool,
            "statistic_train": self.statistic_train,
            "critical_train": self.critical_train,
        });
        digest(&key.to_string())
    }
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Generates training data and fits both folds.
pub fn fit_experiment(config: &ExperimentConfig) -> Result<FittedTest> {
    let sim = Simulator::new(config.scenario.clone()).map_err(|e| e.at_stage("config"))?;
    let (sp, cp) = config.pools(&sim).map_err(|e| e.at_stage("config"))?;
    let root = RandomStream::new(config.seed, 0);
    log::info!("{}: generating {} training sets", config.name, config.scenario.set_count());
    let data = gen_training(&sim, &root.labeled("generate")).map_err(|e| e.at_stage("generate"))?;
    log::info!("{}: fitting on {} rows", config.name, data.len());
    fit_test(&sim, &config.plan(&sp, &cp), &data)
}

/// Loads the fitted test from the cache under `output_dir` when its key
/// matches, otherwise fits and stores it. Returns the test and whether it
/// came from the cache.
pub fn fit_cached(config: &ExperimentConfig) -> Result<(FittedTest, bool)> {
    let Some(out) = &config.output_dir else {
        return Ok((fit_experiment(config)?, false));
    };
    let dir = out.join("cache").join(config.fit_key());
    if dir.join("manifest.json").exists() {
        match load_bundle(&dir) {
            Ok(test) => return Ok((test, true)),
            Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", dir.display()),
        }
    }
    let test = fit_experiment(config)?;
    save_bundle(&test, &dir).map_err(|e| e.at_stage("cache"))?;
    Ok((test, false))
}

/// Whether `truth` is a null law of the scenario.
pub fn is_null(spec: &ScenarioSpec, truth: &Truth) -> bool {
    match (*truth, &spec.kind) {
        (Truth::Normal { mu, .. }, ScenarioKind::NormalKnownSigma { mu0, .. } | ScenarioKind::NormalUnknownSigma { mu0, .. }) => mu == *mu0,
        (Truth::TwoNormal { mu_p, mu_t, .. }, _) => mu_p == mu_t,
        (Truth::Binary { pi_p, pi_t }, _) => pi_p == pi_t,
        _ => false,
    }
}

/// Human-readable label of a validation law.
pub fn point_label(truth: &Truth) -> String {
    match *truth {
        Truth::Normal { mu, sigma } => format!("mu={mu} sigma={sigma}"),
        Truth::TwoNormal { mu_p, sigma_p, mu_t, sigma_t } => format!("sigma_p={sigma_p} sigma_t={sigma_t} mu_p={mu_p} mu_t={mu_t}"),
        Truth::Binary { pi_p, pi_t } => format!("pi_p={pi_p} pi_t={pi_t}"),
    }
}

/// Rejection rates of the fitted test and every comparator on the same
/// `b_val` replicates per point, with agreement and (adaptive) ASN rows.
pub fn validate(test: &FittedTest, config: &ExperimentConfig) -> Result<ResultsTable> {
    let sim = test.simulator();
    let spec = sim.spec();
    let stream = RandomStream::new(config.seed, 0).labeled("validate");
    let mut table = ResultsTable::default();
    for (k, point) in config.points.iter().enumerate() {
        let summaries = sim.draw_many(&point.truth, config.b_val, &stream.substream(k as u64))?;
        let point_name = point_label(&point.truth);
        let metric = if is_null(spec, &point.truth) { Metric::TypeI } else { Metric::Power };
        let mut row = |method: &str, metric: Metric, value: f64, se: f64| {
            let published = if metric == Metric::Agreement {
                None
            } else {
                point.published.get(if metric == Metric::Asn { "asn" } else { method }).copied()
            };
            table.rows.push(ResultRow {
                experiment: config.name.clone(),
                point: point_name.clone(),
                method: method.into(),
                metric,
                value,
                se,
                reps: summaries.len(),
                published,
            });
        };
        let dnn: Vec<bool> = test.decide_batch(&summaries)?.into_iter().map(|d| d.reject).collect();
        let rate = rate_of(&dnn);
        row("dnn", metric, rate, rate_se(rate, dnn.len()));
        for c in &config.comparators {
            let decisions = summaries.par_iter().map(|s| c.decide(spec, s)).collect::<Result<Vec<bool>>>()?;
            let rate = rate_of(&decisions);
            row(c.name(), metric, rate, rate_se(rate, decisions.len()));
            let agree = dnn.iter().zip(&decisions).filter(|(a, b)| a == b).count() as f64 / dnn.len() as f64;
            row(c.name(), Metric::Agreement, agree, rate_se(agree, dnn.len()));
        }
        if let Some(design) = sim.design() {
            let n1 = design.params().n1 as f64;
            let sizes: Vec<f64> = summaries
                .iter()
                .map(|s| match s {
                    Summary::Trial(p) => n1 + p.n2 as f64,
                    _ => unreachable!("adaptive scenarios draw trials"),
                })
                .collect();
            let (mean, se) = mean_se(&sizes);
            row("design", Metric::Asn, mean, se);
        }
    }
    Ok(table)
}

pub(crate) fn rate_of(decisions: &[bool]) -> f64 {
    decisions.iter().filter(|&&r| r).count() as f64 / decisions.len() as f64
}

/// Binomial Monte Carlo standard error `sqrt(p(1-p)/B)`.
pub fn rate_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub fit_key: String,
    pub seeds: BTreeMap<String, u64>,
    pub crate_version: String,
    pub workers: usize,
    pub cache_hit: bool,
    pub wall_seconds: f64,
    pub rows: usize,
}

#[derive(Debug)]
pub struct ExperimentRun {
    pub table: ResultsTable,
    pub test: FittedTest,
    pub manifest: RunManifest,
}

/// Generate, select, fit, calibrate and validate one config. With an
/// `output_dir` the fitted bundle is cached by fit key and the table,
/// config and run manifest are written there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    let started = Instant::now();
    config.validate().map_err(|e| e.at_stage("config"))?;
    let (test, cache_hit) = fit_cached(config)?;
    let table = validate(&test, config).map_err(|e| e.at_stage("validate"))?;
    let mut seeds = BTreeMap::from([
        ("experiment".to_string(), config.seed),
        ("statistic_train".to_string(), config.statistic_train.seed),
        ("critical_train".to_string(), config.critical_train.seed),
    ]);
    if let ScenarioKind::AdaptiveBinomial { cep_seed, .. } = config.scenario.kind {
        seeds.insert("cep".into(), cep_seed);
    }
    let manifest = RunManifest {
        name: config.name.clone(),
        config_hash: config.hash(),
        fit_key: config.fit_key(),
        seeds,
        crate_version: crate::VERSION.into(),
        workers: rayon::current_num_threads(),
        cache_hit,
        wall_seconds: started.elapsed().as_secs_f64(),
        rows: table.rows.len(),
    };
    if let Some(out) = &config.output_dir {
        write_outputs(out, config, &table, &manifest).map_err(|e| e.at_stage("write"))?;
    }
    Ok(ExperimentRun { table, test, manifest })
}

fn write_outputs(out: &Path, config: &ExperimentConfig, table: &ResultsTable, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(out)?;
    table.write_csv(&out.join(format!("{}.csv", config.name)))?;
    fs::write(out.join(format!("{}.config.toml", config.name)), config.to_toml()?)?;
    fs::write(out.join(format!("{}.manifest.json", config.name)), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}
