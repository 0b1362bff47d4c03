use super::loss::bce_term;
use super::network::{sigmoid, Head, Network, NetworkSpec, Standardizer};
use crate::{Error, RandomStream, Result};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use crate::scenario::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean train-mode loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub validation_loss: Option<f64>,
    pub steps: usize,
}

pub(crate) struct ForwardCache {
    /// acts[0] is the standardized input; acts[k] the (dropped-out) output of hidden layer k.
    acts: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
    /// Scaled dropout masks (0 or 1/(1-p)) per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
    pub(crate) output: Array1<f64>,
}

impl ForwardCache {
    /// Which hidden units are on, for the first row.
    pub(crate) fn active_units(&self) -> Vec<bool> {
        self.pre.iter().flat_map(|z| z.row(0).iter().map(|&v| v > 0.0).collect::<Vec<_>>()).collect()
    }
}

pub(crate) fn forward_cache<R: Rng + ?Sized>(net: &Network, x: Array2<f64>, dropout: f64, rng: &mut R) -> ForwardCache {
    let last = net.layers.len() - 1;
    let mut acts = vec![x];
    let mut pre = Vec::with_capacity(last);
    let mut masks = Vec::with_capacity(last);
    for (k, layer) in net.layers.iter().enumerate() {
        let mut z = acts[k].dot(&layer.weights);
        z += &layer.bias;
        if k == last {
            let output = z.column(0).to_owned();
            return ForwardCache { acts, pre, masks, output };
        }
        let mut a = z.mapv(|v| v.max(0.0));
        if dropout > 0.0 {
            let keep = 1.0 / (1.0 - dropout);
            let mask = Array2::from_shape_fn(a.dim(), |_| if rng.gen::<f64>() < dropout { 0.0 } else { keep });
            a *= &mask;
            masks.push(Some(mask));
        } else {
            masks.push(None);
        }
        pre.push(z);
        acts.push(a);
    }
    unreachable!("network has an output layer")
}

pub(crate) struct Gradients {
    pub(crate) dw: Vec<Array2<f64>>,
    pub(crate) db: Vec<Array1<f64>>,
}

/// Backpropagates `d_output` (dL/d linear predictor per row).
pub(crate) fn backward(net: &Network, cache: &ForwardCache, d_output: &Array1<f64>) -> Gradients {
    let n_layers = net.layers.len();
    let mut dw = Vec::with_capacity(n_layers);
    let mut db = Vec::with_capacity(n_layers);
    let mut delta = d_output.clone().insert_axis(Axis(1));
    for k in (0..n_layers).rev() {
        dw.push(cache.acts[k].t().dot(&delta));
        db.push(delta.sum_axis(Axis(0)));
        if k == 0 {
            break;
        }
        let mut d_act = delta.dot(&net.layers[k].weights.t());
        if let Some(mask) = &cache.masks[k - 1] {
            d_act *= mask;
        }
        // ReLU subgradient at 0 is 0
        ndarray::Zip::from(&mut d_act).and(&cache.pre[k - 1]).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        delta = d_act;
    }
    dw.reverse();
    db.reverse();
    Gradients { dw, db }
}

/// Loss and dL/dz for one batch, averaged over rows.
pub(crate) fn loss_and_grad(head: Head, z: &Array1<f64>, y: &[f64]) -> (f64, Array1<f64>) {
    let n = y.len() as f64;
    match head {
        Head::LogitClassifier => {
            let loss = z.iter().zip(y).map(|(&z, &y)| bce_term(z, y)).sum::<f64>() / n;
            let grad = Array1::from_iter(z.iter().zip(y).map(|(&z, &y)| (sigmoid(z) - y) / n));
            (loss, grad)
        }
        Head::LinearRegressor => {
            let loss = z.iter().zip(y).map(|(&z, &y)| (z - y) * (z - y)).sum::<f64>() / n;
            let grad = Array1::from_iter(z.iter().zip(y).map(|(&z, &y)| 2.0 * (z - y) / n));
            (loss, grad)
        }
    }
}

struct Adam {
    lr: f64,
    t: i32,
    mw: Vec<Array2<f64>>,
    vw: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network, lr: f64) -> Self {
        Adam {
            lr,
            t: 0,
            mw: net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            vw: net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            mb: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            vb: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    fn step(&mut self, net: &mut Network, g: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut self.mw[k])
                .and(&mut self.vw[k])
                .and(&g.dw[k])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut self.mb[k])
                .and(&mut self.vb[k])
                .and(&g.db[k])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

fn check_data(spec: &NetworkSpec, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if data.dim() != spec.input_dim {
        return Err(Error::Shape(format!("data has {} features, spec expects {}", data.dim(), spec.input_dim)));
    }
    if data.features().iter().chain(data.labels()).any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged { epoch: 0, reason: "non-finite feature or label".into() });
    }
    if spec.head == Head::LogitClassifier && data.labels().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain("classifier labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Mean inference-mode loss of `net` on `data`.
pub(crate) fn evaluate_loss(net: &Network, data: &Dataset) -> Result<f64> {
    let z = net.predict_batch(data.feature_view())?;
    let (loss, _) = loss_and_grad(net.spec.head, &z, data.labels());
    Ok(loss)
}

/// Trains on all of `data`.
pub fn train(spec: &NetworkSpec, data: &Dataset, config: &TrainConfig) -> Result<Network> {
    train_with_validation(spec, data, None, config).map(|(net, _)| net)
}

/// Trains on `train_data`, reporting the final loss on `validation` when given.
pub fn train_with_validation(
    spec: &NetworkSpec,
    train_data: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    spec.validate()?;
    config.validate()?;
    check_data(spec, train_data)?;
    if let Some(v) = validation {
        check_data(spec, v)?;
    }

    let stream = RandomStream::new(config.seed, 0);
    let mut init_rng = stream.labeled("init").rng();
    let mut net = Network::init(spec, &mut init_rng)?;
    net.standardizer = Standardizer::fit(train_data.feature_view());
    if spec.head == Head::LinearRegressor {
        // start from the constant mean-target predictor
        let mean = train_data.labels().iter().sum::<f64>() / train_data.len() as f64;
        let head = net.layers.last_mut().expect("output layer");
        head.weights.fill(0.0);
        head.bias[0] = mean;
    }
    let x_all = net.standardizer.apply(train_data.feature_view());
    let y_all = train_data.labels();
    let n = train_data.len();
    let d = spec.input_dim;
    let batch = config.batch_size.min(n);

    let mut adam = Adam::new(&net, config.learning_rate);
    let mut rng = stream.labeled("epochs").rng();
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(batch) {
            let mut xb = Array2::zeros((idx.len(), d));
            let mut yb = Vec::with_capacity(idx.len());
            for (r, &i) in idx.iter().enumerate() {
                xb.row_mut(r).assign(&x_all.row(i));
                yb.push(y_all[i]);
            }
            let cache = forward_cache(&net, xb, spec.dropout_rate, &mut rng);
            let (loss, dz) = loss_and_grad(spec.head, &cache.output, &yb);
            if !loss.is_finite() || loss > 1e12 {
                return Err(Error::TrainingDiverged { epoch, reason: format!("batch loss {loss}") });
            }
            let grads = backward(&net, &cache, &dz);
            adam.step(&mut net, &grads);
            report.steps += 1;
            epoch_loss += loss * idx.len() as f64;
        }
        report.epoch_losses.push(epoch_loss / n as f64);
    }
    if net.layers.iter().any(|l| l.weights.iter().chain(l.bias.iter()).any(|w| !w.is_finite())) {
        return Err(Error::TrainingDiverged { epoch: config.epochs, reason: "non-finite weights".into() });
    }
    if let Some(v) = validation {
        let loss = evaluate_loss(&net, v)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch: config.epochs, reason: "non-finite validation loss".into() });
        }
        report.validation_loss = Some(loss);
    }
    Ok((net, report))
}
