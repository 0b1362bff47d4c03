//! Structure selection, the two network folds, and the decision rule.
//!
//! The first fold is a logit classifier separating null from alternative
//! draws; its linear predictor is the test statistic. The second fold
//! regresses the null upper-α quantile of that statistic on the nuisance
//! inputs. A test rejects when the statistic is strictly above the cutoff.

mod bundle;

pub use bundle::{load_bundle, save_bundle, BUNDLE_FORMAT_VERSION};

use crate::neural::{self, Head, Network, NetworkSpec, TrainConfig};
use crate::scenario::{Dataset, Observation, Simulator, Summary, Truth};
use crate::stats::empirical_upper_quantile;
use crate::{Error, RandomStream, Result};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub specs: Vec<NetworkSpec>,
}

impl CandidatePool {
    pub fn new(specs: Vec<NetworkSpec>) -> Result<Self> {
        let pool = CandidatePool { specs };
        pool.validate()?;
        Ok(pool)
    }

    /// Every combination of depth and width.
    pub fn grid(input_dim: usize, depths: &[usize], widths: &[usize], head: Head, dropout: f64) -> Result<Self> {
        let mut specs = Vec::new();
        for &d in depths {
            for &w in widths {
                specs.push(NetworkSpec::new(input_dim, vec![w; d], head, dropout)?);
            }
        }
        CandidatePool::new(specs)
    }

    /// Depth {2, 4} × width {10, 40}, dropout 0.1.
    pub fn first_fold(input_dim: usize) -> Result<Self> {
        CandidatePool::grid(input_dim, &[2, 4], &[10, 40], Head::LogitClassifier, 0.1)
    }

    /// Depth {2, 3} × width {30, 40, 50}, dropout 0.1.
    pub fn second_fold(input_dim: usize) -> Result<Self> {
        CandidatePool::grid(input_dim, &[2, 3], &[30, 40, 50], Head::LinearRegressor, 0.1)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.specs.first().ok_or_else(|| Error::Config("candidate pool is empty".into()))?;
        for s in &self.specs {
            s.validate()?;
            if s.input_dim != first.input_dim || s.head != first.head {
                return Err(Error::Config("pool specs must share input width and head".into()));
            }
        }
        Ok(())
    }

    /// Copy of the pool with a different input width.
    pub fn with_input_dim(&self, input_dim: usize) -> CandidatePool {
        let specs = self.specs.iter().map(|s| NetworkSpec { input_dim, ..s.clone() }).collect();
        CandidatePool { specs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub spec: NetworkSpec,
    pub parameters: usize,
    pub validation_loss: Option<f64>,
    /// Why the candidate was excluded, when it was.
    pub excluded: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<CandidateOutcome>,
    pub selected: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
}

impl SelectionReport {
    pub fn selected_spec(&self) -> &NetworkSpec {
        &self.candidates[self.selected].spec
    }

    pub fn selected_loss(&self) -> f64 {
        self.candidates[self.selected].validation_loss.expect("selected candidate has a loss")
    }
}

/// Trains every candidate on one shared split and keeps the best.
///
/// Returns the winning network as trained on the training part of the split
/// together with the report.
pub fn select_and_train(
    pool: &CandidatePool,
    data: &Dataset,
    config: &TrainConfig,
    stream: &RandomStream,
) -> Result<(Network, SelectionReport)> {
    pool.validate()?;
    config.validate()?;
    if data.len() < 10 {
        return Err(Error::InsufficientData { needed: 10, got: data.len() });
    }
    let (train, held) = data.split(1.0 - config.validation_fraction, &stream.labeled("split"))?;
    if train.is_empty() || held.is_empty() {
        return Err(Error::InsufficientData { needed: 10, got: data.len() });
    }
    let results: Vec<Result<(Network, f64)>> = pool
        .specs
        .par_iter()
        .map(|spec| {
            let (net, report) = neural::train_with_validation(spec, &train, Some(&held), config)?;
            Ok((net, report.validation_loss.expect("validation set given")))
        })
        .collect();

    let mut candidates = Vec::with_capacity(results.len());
    let mut nets = Vec::with_capacity(results.len());
    for (spec, r) in pool.specs.iter().zip(results) {
        let parameters = spec.parameter_count();
        match r {
            Ok((net, loss)) => {
                candidates.push(CandidateOutcome { spec: spec.clone(), parameters, validation_loss: Some(loss), excluded: None });
                nets.push(Some(net));
            }
            Err(e @ Error::TrainingDiverged { .. }) => {
                log::warn!("candidate {:?} excluded: {e}", spec.hidden_layers);
                candidates.push(CandidateOutcome { spec: spec.clone(), parameters, validation_loss: None, excluded: Some(e.to_string()) });
                nets.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let selected = (0..candidates.len())
        .filter(|&i| candidates[i].validation_loss.is_some())
        .min_by(|&a, &b| rank(&candidates[a], &candidates[b]))
        .ok_or_else(|| Error::Selection("every candidate diverged".into()))?;
    let net = nets[selected].take().expect("selected candidate trained");
    let report = SelectionReport { candidates, selected, train_rows: train.len(), validation_rows: held.len() };
    Ok((net, report))
}

/// Lower validation loss first, then fewer parameters, then fewer layers.
fn rank(a: &CandidateOutcome, b: &CandidateOutcome) -> std::cmp::Ordering {
    let loss = |c: &CandidateOutcome| c.validation_loss.unwrap_or(f64::INFINITY);
    loss(a).total_cmp(&loss(b)).then(a.parameters.cmp(&b.parameters)).then(a.spec.depth().cmp(&b.spec.depth()))
}

pub fn select_structure(
    pool: &CandidatePool,
    data: &Dataset,
    config: &TrainConfig,
    stream: &RandomStream,
) -> Result<(NetworkSpec, SelectionReport)> {
    let (_, report) = select_and_train(pool, data, config, stream)?;
    Ok((report.selected_spec().clone(), report))
}

/// First fold: selects a logit classifier from `pool` and returns it.
pub fn fit_statistic_net(
    data: &Dataset,
    pool: &CandidatePool,
    config: &TrainConfig,
    stream: &RandomStream,
) -> Result<(Network, SelectionReport)> {
    if pool.specs.iter().any(|s| s.head != Head::LogitClassifier) {
        return Err(Error::Config("statistic pool must use the logit-classifier head".into()));
    }
    select_and_train(pool, data, config, stream)
}

/// Statistics of `count` null replicates drawn under `truth`.
pub fn null_statistics(statistic_net: &Network, sim: &Simulator, truth: &Truth, count: usize, stream: &RandomStream) -> Result<Vec<f64>> {
    let x = sim.statistic_matrix(truth, count, stream)?;
    Ok(statistic_net.predict_batch(x.view())?.to_vec())
}

/// Upper-α quantile of the statistic under the fully specified null.
pub fn calibrate_constant_cutoff(
    statistic_net: &Network,
    sim: &Simulator,
    b_prime: usize,
    alpha: f64,
    stream: &RandomStream,
) -> Result<f64> {
    if sim.critical_dim() != 0 {
        return Err(Error::Usage(format!("a {} scenario needs a critical-value network", sim.spec().kind_name())));
    }
    let truth = sim.null_truth(&[])?;
    empirical_upper_quantile(&null_statistics(statistic_net, sim, &truth, b_prime, stream)?, alpha)
}

/// Second-fold training data: one row per critical input, labelled with the
/// null upper-α quantile from `b_prime` replicates on its own substream.
pub fn critical_labels(
    statistic_net: &Network,
    sim: &Simulator,
    inputs: &[Vec<f64>],
    b_prime: usize,
    alpha: f64,
    stream: &RandomStream,
) -> Result<Dataset> {
    let mut data = Dataset::with_capacity(sim.critical_names(), inputs.len());
    for (l, input) in inputs.iter().enumerate() {
        let truth = sim.null_truth(input)?;
        let stats = null_statistics(statistic_net, sim, &truth, b_prime, &stream.substream(l as u64))?;
        data.push(input, empirical_upper_quantile(&stats, alpha)?)?;
    }
    Ok(data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalFit {
    pub labels: Dataset,
    pub selection: SelectionReport,
    /// Mean squared error of the refitted network over all labelled inputs.
    pub fit_mse: f64,
}

/// Second fold: simulate quantile labels, select a regressor on a split,
/// then refit the chosen structure on every labelled input.
#[allow(clippy::too_many_arguments)]
pub fn fit_critical_net(
    statistic_net: &Network,
    sim: &Simulator,
    inputs: &[Vec<f64>],
    b_prime: usize,
    alpha: f64,
    pool: &CandidatePool,
    config: &TrainConfig,
    stream: &RandomStream,
) -> Result<(Network, CriticalFit)> {
    if pool.specs.iter().any(|s| s.head != Head::LinearRegressor) {
        return Err(Error::Config("critical pool must use the linear-regressor head".into()));
    }
    let labels = critical_labels(statistic_net, sim, inputs, b_prime, alpha, &stream.labeled("labels"))?;
    let (_, selection) = select_and_train(pool, &labels, config, &stream.labeled("select"))?;
    let net = neural::train(selection.selected_spec(), &labels, config)?;
    let pred = net.predict_batch(labels.feature_view())?;
    let fit_mse = neural::mse_loss(pred.as_slice().expect("contiguous"), labels.labels())?;
    Ok((net, CriticalFit { labels, selection, fit_mse }))
}

#[derive(Clone, Debug, PartialEq)]
pub enum CriticalValue {
    Constant { value: f64 },
    Network { net: Network },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub statistic: f64,
    pub cutoff: f64,
    pub reject: bool,
}

/// Seeds, pools and selection outcomes behind a fitted test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub statistic_pool: CandidatePool,
    pub statistic_selection: SelectionReport,
    pub critical_pool: Option<CandidatePool>,
    pub critical_selection: Option<SelectionReport>,
    pub critical_fit_mse: Option<f64>,
}

/// A locked test: statistic network, critical value, and the scenario they
/// were fitted for. Immutable; decisions are pure.
#[derive(Clone, Debug)]
pub struct FittedTest {
    pub statistic_net: Network,
    pub critical: CriticalValue,
    pub alpha: f64,
    pub provenance: Provenance,
    sim: Simulator,
}

impl FittedTest {
    pub fn new(statistic_net: Network, critical: CriticalValue, sim: Simulator, alpha: f64, provenance: Provenance) -> Result<Self> {
        if statistic_net.head() != Head::LogitClassifier {
            return Err(Error::Config("statistic network must have a logit-classifier head".into()));
        }
        if statistic_net.input_dim() != sim.statistic_dim() {
            return Err(Error::Shape("statistic network width does not match the scenario".into()));
        }
        match &critical {
            CriticalValue::Constant { value } if sim.critical_dim() == 0 && value.is_finite() => {}
            CriticalValue::Network { net } if net.head() == Head::LinearRegressor && net.input_dim() == sim.critical_dim() => {}
            _ => return Err(Error::Config(format!("critical value does not fit a {} scenario", sim.spec().kind_name()))),
        }
        Ok(FittedTest { statistic_net, critical, alpha, provenance, sim })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    /// The same statistic with a different critical value and simulator,
    /// e.g. after recalibrating for a changed design.
    pub fn with_critical(&self, critical: CriticalValue, sim: Simulator) -> Result<FittedTest> {
        FittedTest::new(self.statistic_net.clone(), critical, sim, self.alpha, self.provenance.clone())
    }

    pub fn decide(&self, obs: &Observation) -> Result<Decision> {
        let s = self.sim.summarize(obs)?;
        Ok(self.decide_batch(std::slice::from_ref(&s))?[0])
    }

    /// Decisions for many summaries, evaluated in fixed-size batches.
    pub fn decide_batch(&self, summaries: &[Summary]) -> Result<Vec<Decision>> {
        let (ds, dc) = (self.sim.statistic_dim(), self.sim.critical_dim());
        let mut ts = Array2::zeros((summaries.len(), ds));
        let mut tc = Array2::zeros((summaries.len(), dc.max(1)));
        for (i, s) in summaries.iter().enumerate() {
            self.sim.statistic_features(s, ts.row_mut(i).into_slice().expect("row-major"));
            if dc > 0 {
                self.sim.critical_features(s, tc.row_mut(i).into_slice().expect("row-major"));
            }
        }
        let stats = self.statistic_net.predict_batch(ts.view())?;
        let cutoffs = match &self.critical {
            CriticalValue::Constant { value } => vec![*value; summaries.len()],
            CriticalValue::Network { net } => net.predict_batch(tc.view())?.to_vec(),
        };
        Ok(stats.iter().zip(cutoffs).map(|(&statistic, cutoff)| Decision { statistic, cutoff, reject: statistic > cutoff }).collect())
    }
}

/// Fits both folds end to end for one scenario.
#[derive(Clone, Debug)]
pub struct FitPlan<'a> {
    pub statistic_pool: &'a CandidatePool,
    pub statistic_config: &'a TrainConfig,
    pub critical_pool: &'a CandidatePool,
    pub critical_config: &'a TrainConfig,
    pub seed: u64,
}

pub fn fit_test(sim: &Simulator, plan: &FitPlan<'_>, training: &Dataset) -> Result<FittedTest> {
    let spec = sim.spec();
    let root = RandomStream::new(plan.seed, 0);
    let pool = plan.statistic_pool.with_input_dim(sim.statistic_dim());
    let (statistic_net, selection) = fit_statistic_net(training, &pool, plan.statistic_config, &root.labeled("select-statistic"))
        .map_err(|e| e.at_stage("fit-statistic"))?;
    let mut provenance = Provenance {
        seed: plan.seed,
        statistic_pool: pool,
        statistic_selection: selection,
        critical_pool: None,
        critical_selection: None,
        critical_fit_mse: None,
    };
    let critical = if sim.critical_dim() == 0 {
        let value = calibrate_constant_cutoff(&statistic_net, sim, spec.counts.b_prime, spec.alpha, &root.labeled("calibrate"))
            .map_err(|e| e.at_stage("calibrate"))?;
        CriticalValue::Constant { value }
    } else {
        let (net, fit) = recalibrate(&statistic_net, sim, plan, &root.labeled("calibrate"))?;
        provenance.critical_pool = Some(plan.critical_pool.with_input_dim(sim.critical_dim()));
        provenance.critical_selection = Some(fit.selection);
        provenance.critical_fit_mse = Some(fit.fit_mse);
        CriticalValue::Network { net }
    };
    FittedTest::new(statistic_net, critical, sim.clone(), spec.alpha, provenance)
}

/// Fits a critical-value network for `statistic_net` under `sim`.
pub fn recalibrate(statistic_net: &Network, sim: &Simulator, plan: &FitPlan<'_>, stream: &RandomStream) -> Result<(Network, CriticalFit)> {
    let spec = sim.spec();
    let inputs = crate::scenario::gen_critical_inputs(spec)?;
    let pool = plan.critical_pool.with_input_dim(sim.critical_dim());
    fit_critical_net(statistic_net, sim, &inputs, spec.counts.b_prime, spec.alpha, &pool, plan.critical_config, stream)
        .map_err(|e| e.at_stage("calibrate"))
}
