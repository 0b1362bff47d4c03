use super::{fit_cached, mean_se, rate_of, ExperimentConfig};
use crate::adaptive::{bm_decision, calibrate_bm, incta_decision};
use crate::pipeline::{recalibrate, CriticalValue, FittedTest};
use crate::scenario::{ScenarioKind, Simulator, Summary, Truth};
use crate::{Error, RandomStream, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsnOptions {
    /// Alternative at which power and ASN are measured.
    pub alt: Truth,
    pub target_power: f64,
    /// Accept an n2_max whose power is within this distance of the target.
    pub tolerance: f64,
    /// Largest n2_max tried.
    pub n2_cap: u32,
    /// Methods to search, from "dnn", "incta", "bm".
    pub methods: Vec<String>,
    /// Null rates over which the BM level is recalibrated for each design.
    pub bm_null_grid: Vec<f64>,
    /// Refit both networks at every candidate cap. When false only the
    /// critical network is refit and the statistic network is reused, which
    /// is much faster but leaves the statistic tuned to the original cap.
    pub refit_statistic: bool,
}

impl AsnOptions {
    pub fn new(alt: Truth, target_power: f64) -> Self {
        AsnOptions {
            alt,
            target_power,
            tolerance: 0.005,
            n2_cap: 1200,
            methods: vec!["dnn".into(), "bm".into(), "incta".into()],
            bm_null_grid: vec![0.17, 0.22, 0.27, 0.32, 0.37],
            refit_statistic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsnOutcome {
    pub method: String,
    pub n2_max: u32,
    pub power: f64,
    /// Per-group average sample size at `n2_max` under the alternative.
    pub asn: f64,
    pub asn_se: f64,
    pub reps: usize,
    /// False when even `n2_cap` falls short of the target; the other fields
    /// then describe the capped design.
    pub reached: bool,
}

struct Evaluation {
    power: f64,
    asn: f64,
    asn_se: f64,
}

struct Search<'a> {
    test: &'a FittedTest,
    config: &'a ExperimentConfig,
    opts: &'a AsnOptions,
    root: RandomStream,
    sims: HashMap<u32, Simulator>,
}

impl Search<'_> {
    fn fitted_cap(&self) -> u32 {
        self.test.simulator().design().expect("adaptive scenario").params().n2_max
    }

    fn sim(&mut self, n2_max: u32) -> Result<Simulator> {
        if let Some(s) = self.sims.get(&n2_max) {
            return Ok(s.clone());
        }
        let s = self.test.simulator().with_n2_max(n2_max)?;
        self.sims.insert(n2_max, s.clone());
        Ok(s)
    }

    fn evaluate(&mut self, method: &str, n2_max: u32) -> Result<Evaluation> {
        let sim = self.sim(n2_max)?;
        let design = sim.design().expect("adaptive scenario");
        let n1 = design.params().n1;
        let alpha = sim.spec().alpha;
        // the same alternative replicates for every method and cap
        let draws = sim.draw_many(&self.opts.alt, self.config.b_val, &self.root.labeled("alt"))?;
        let paths: Vec<_> = draws
            .iter()
            .map(|s| match s {
                Summary::Trial(p) => *p,
                _ => unreachable!("adaptive scenarios draw trials"),
            })
            .collect();
        let decisions: Vec<bool> = match method {
            "dnn" if n2_max == self.fitted_cap() => self.test.decide_batch(&draws)?.into_iter().map(|d| d.reject).collect(),
            "dnn" if self.opts.refit_statistic => {
                let mut config = self.config.clone();
                if let ScenarioKind::AdaptiveBinomial { design, .. } = &mut config.scenario.kind {
                    design.n2_max = n2_max;
                }
                let (test, _) = fit_cached(&config)?;
                test.decide_batch(&draws)?.into_iter().map(|d| d.reject).collect()
            }
            "dnn" => {
                let (sp, cp) = self.config.pools(&sim)?;
                let stream = self.root.labeled("calibrate").substream(n2_max as u64);
                let (net, _) = recalibrate(&self.test.statistic_net, &sim, &self.config.plan(&sp, &cp), &stream)?;
                let test = self.test.with_critical(CriticalValue::Network { net }, sim.clone())?;
                test.decide_batch(&draws)?.into_iter().map(|d| d.reject).collect()
            }
            "incta" => paths.iter().map(|p| incta_decision(p, n1, alpha)).collect::<Result<_>>()?,
            "bm" => {
                let stream = self.root.labeled("bm").substream(n2_max as u64);
                let level = calibrate_bm(design, &self.opts.bm_null_grid, alpha, self.config.b_val, &stream)?;
                paths.iter().map(|p| bm_decision(p, n1, level)).collect::<Result<_>>()?
            }
            other => return Err(Error::Usage(format!("unknown ASN method {other:?}"))),
        };
        let sizes: Vec<f64> = paths.iter().map(|p| (n1 + p.n2) as f64).collect();
        let (asn, asn_se) = mean_se(&sizes);
        let power = rate_of(&decisions);
        log::info!("asn search {method}: n2_max {n2_max} power {power:.4} asn {asn:.1}");
        Ok(Evaluation { power, asn, asn_se })
    }

    fn outcome(&self, method: &str, n2_max: u32, e: &Evaluation, reached: bool) -> AsnOutcome {
        AsnOutcome { method: method.into(), n2_max, power: e.power, asn: e.asn, asn_se: e.asn_se, reps: self.config.b_val, reached }
    }

    fn run(&mut self, method: &str) -> Result<AsnOutcome> {
        let target = self.opts.target_power;
        let tol = self.opts.tolerance;
        let cap = self.opts.n2_cap;
        let floor = self.test.simulator().design().expect("adaptive scenario").params().n2_min;
        if cap <= floor {
            let e = self.evaluate(method, floor)?;
            return Ok(self.outcome(method, floor, &e, e.power >= target - tol));
        }
        // start from the fitted cap, whose test is already at hand; a
        // reused statistic network has never seen n2 beyond it
        let mut lo = floor;
        let mut hi = self.fitted_cap().clamp(floor + 1, cap);
        let mut best = self.evaluate(method, hi)?;
        while best.power < target - tol && hi < cap {
            lo = hi;
            hi = (hi * 2).min(cap);
            best = self.evaluate(method, hi)?;
        }
        if best.power < target - tol {
            return Ok(self.outcome(method, hi, &best, false));
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let e = self.evaluate(method, mid)?;
            if (e.power - target).abs() <= tol {
                return Ok(self.outcome(method, mid, &e, true));
            }
            if e.power < target {
                lo = mid;
            } else {
                hi = mid;
                best = e;
            }
        }
        if lo == floor {
            let e = self.evaluate(method, floor)?;
            if e.power >= target - tol {
                return Ok(self.outcome(method, floor, &e, true));
            }
        }
        Ok(self.outcome(method, hi, &best, true))
    }
}

/// For each method, bisects the stage-2 cap until the simulated power at
/// `opts.alt` is within `opts.tolerance` of the target, and reports the
/// per-group ASN there. The bracket starts at the fitted design's cap and
/// doubles toward `opts.n2_cap` only while power falls short. The DNN is
/// refit (or only recalibrated, see [`AsnOptions::refit_statistic`]) and the
/// BM level recalibrated at every candidate cap. Refits go through
/// [`fit_cached`], so they are reused when the config has an output dir.
pub fn asn_for_power(test: &FittedTest, config: &ExperimentConfig, opts: &AsnOptions) -> Result<Vec<AsnOutcome>> {
    let design = test.simulator().design().ok_or_else(|| Error::Usage("ASN search needs an adaptive scenario".into()))?;
    if !matches!(opts.alt, Truth::Binary { .. }) {
        return Err(Error::Usage("ASN search needs a binary alternative".into()));
    }
    if !(0.0..1.0).contains(&opts.target_power) || opts.tolerance < 0.0 {
        return Err(Error::Usage(format!("target power must lie in [0, 1), got {}", opts.target_power)));
    }
    if opts.n2_cap < design.params().n2_min {
        return Err(Error::Usage(format!("n2 cap {} is below n2_min {}", opts.n2_cap, design.params().n2_min)));
    }
    let mut search = Search { test, config, opts, root: RandomStream::new(config.seed, 0).labeled("asn"), sims: HashMap::new() };
    opts.methods.iter().map(|m| search.run(m).map_err(|e| e.at_stage("asn"))).collect()
}
