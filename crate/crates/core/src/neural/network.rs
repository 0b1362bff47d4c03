use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Sigmoid output; the pre-activation is exposed as the linear predictor.
    LogitClassifier,
    LinearRegressor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub head: Head,
    pub dropout_rate: f64,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, head: Head, dropout_rate: f64) -> Result<Self> {
        let spec = NetworkSpec { input_dim, hidden_layers, head, dropout_rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Shape("input_dim must be at least 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Shape("hidden layer widths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Domain(format!("dropout rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        Ok(())
    }

    /// Total weights and biases.
    pub fn parameter_count(&self) -> usize {
        let mut prev = self.input_dim;
        let mut total = 0;
        for &w in self.hidden_layers.iter().chain(std::iter::once(&1)) {
            total += prev * w + w;
            prev = w;
        }
        total
    }

    pub fn depth(&self) -> usize {
        self.hidden_layers.len()
    }

    pub(crate) fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut prev = self.input_dim;
        for &w in self.hidden_layers.iter().chain(std::iter::once(&1)) {
            dims.push((prev, w));
            prev = w;
        }
        dims
    }
}

/// Affine layer; `weights` has shape (inputs, outputs).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// Per-feature affine map `(x - shift) / scale` applied before the first layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer { shift: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Column means and standard deviations; constant columns get scale 1.
    pub fn fit(features: ArrayView2<f64>) -> Self {
        let n = features.nrows().max(1) as f64;
        let mut shift = Vec::with_capacity(features.ncols());
        let mut scale = Vec::with_capacity(features.ncols());
        for col in features.axis_iter(Axis(1)) {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            shift.push(mean);
            scale.push(if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 });
        }
        Standardizer { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub(crate) fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for ((o, &x), (s, c)) in out.iter_mut().zip(row).zip(self.shift.iter().zip(&self.scale)) {
            *o = (x - s) / c;
        }
    }

    pub(crate) fn apply(&self, features: ArrayView2<f64>) -> Array2<f64> {
        let mut out = features.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - self.shift[j]) / self.scale[j];
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
    pub standardizer: Standardizer,
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Network {
    /// He-uniform hidden layers, Glorot-uniform head, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(k, &(fan_in, fan_out))| {
                let limit = if k == last { (6.0 / (fan_in + fan_out) as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit));
                Dense { weights, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Ok(Network { spec: spec.clone(), layers, standardizer: Standardizer::identity(spec.input_dim) })
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_dims().into_iter().map(|(i, o)| Dense { weights: Array2::zeros((i, o)), bias: Array1::zeros(o) }).collect();
        Ok(Network { spec: spec.clone(), layers, standardizer: Standardizer::identity(spec.input_dim) })
    }

    /// Checks the structural invariants tying weights, spec and standardizer.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let dims = self.spec.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::Shape(format!("spec has {} layers, weights have {}", dims.len(), self.layers.len())));
        }
        for (k, (layer, (i, o))) in self.layers.iter().zip(dims).enumerate() {
            if layer.weights.dim() != (i, o) || layer.bias.len() != o {
                return Err(Error::Shape(format!(
                    "layer {k}: expected {i}x{o}, got {:?} with bias {}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        if self.standardizer.dim() != self.spec.input_dim || self.standardizer.scale.len() != self.spec.input_dim {
            return Err(Error::Shape("standardizer width differs from input_dim".into()));
        }
        if self.standardizer.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Domain("standardizer scales must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn head(&self) -> Head {
        self.spec.head
    }

    /// Inference-mode pass: `(output, linear_predictor)`.
    pub fn forward(&self, features: &[f64]) -> Result<(f64, f64)> {
        if features.len() != self.spec.input_dim {
            return Err(Error::Shape(format!("expected {} features, got {}", self.spec.input_dim, features.len())));
        }
        let mut act = vec![0.0; features.len()];
        self.standardizer.apply_row(features, &mut act);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = layer.bias.to_vec();
            for (i, &a) in act.iter().enumerate() {
                if a != 0.0 {
                    for (n, w) in next.iter_mut().zip(layer.weights.row(i)) {
                        *n += a * w;
                    }
                }
            }
            if k != last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            act = next;
        }
        let lp = act[0];
        Ok((self.output_from(lp), lp))
    }

    pub fn output_from(&self, linear_predictor: f64) -> f64 {
        match self.spec.head {
            Head::LogitClassifier => sigmoid(linear_predictor),
            Head::LinearRegressor => linear_predictor,
        }
    }

    /// Linear predictors for a batch of raw (unstandardized) feature rows.
    pub fn predict_batch(&self, features: ArrayView2<f64>) -> Result<Array1<f64>> {
        if features.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!("expected {} feature columns, got {}", self.spec.input_dim, features.ncols())));
        }
        // fixed chunk boundaries keep results independent of the thread count
        const CHUNK: usize = 4096;
        let mut out = Array1::zeros(features.nrows());
        out.as_slice_mut().expect("fresh array is contiguous").par_chunks_mut(CHUNK).enumerate().for_each(|(c, dst)| {
            let chunk = features.slice(ndarray::s![c * CHUNK..c * CHUNK + dst.len(), ..]);
            let lp = self.forward_standardized(self.standardizer.apply(chunk));
            dst.copy_from_slice(lp.as_slice().expect("column copy is contiguous"));
        });
        Ok(out)
    }

    /// Convenience wrapper over [`Network::predict_batch`] for row-major data.
    pub fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let d = self.spec.input_dim;
        if !rows.len().is_multiple_of(d) {
            return Err(Error::Shape(format!("{} values is not a multiple of width {d}", rows.len())));
        }
        let view = ArrayView2::from_shape((rows.len() / d, d), rows).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict_batch(view)?.to_vec())
    }

    pub(crate) fn forward_standardized(&self, x: Array2<f64>) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut act = x;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = act.dot(&layer.weights);
            z += &layer.bias;
            if k != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            act = z;
        }
        act.column(0).to_owned()
    }

    /// One train-mode pass with inverted dropout on hidden activations.
    pub fn forward_train<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> Result<f64> {
        if features.len() != self.spec.input_dim {
            return Err(Error::Shape(format!("expected {} features, got {}", self.spec.input_dim, features.len())));
        }
        let mut x = Array2::zeros((1, features.len()));
        self.standardizer.apply_row(features, x.as_slice_mut().expect("standard layout"));
        let cache = super::train::forward_cache(self, x, self.spec.dropout_rate, rng);
        Ok(cache.output[0])
    }
}
