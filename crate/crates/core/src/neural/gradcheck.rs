use super::loss::bce_term;
use super::network::{Head, Network, NetworkSpec};
use super::train::{backward, forward_cache, loss_and_grad};
use crate::{Error, RandomStream, Result};
use ndarray::Array2;

/// Loss for one example plus the on/off pattern of every hidden unit.
fn single_loss(net: &Network, features: &[f64], label: f64) -> Result<(f64, Vec<bool>)> {
    if features.len() != net.spec.input_dim {
        return Err(Error::Shape(format!("expected {} features, got {}", net.spec.input_dim, features.len())));
    }
    let mut x = Array2::zeros((1, features.len()));
    net.standardizer.apply_row(features, x.as_slice_mut().expect("standard layout"));
    let mut rng = RandomStream::new(0, 0).rng();
    let cache = forward_cache(net, x, 0.0, &mut rng);
    let z = cache.output[0];
    let loss = match net.spec.head {
        Head::LogitClassifier => bce_term(z, label),
        Head::LinearRegressor => (z - label) * (z - label),
    };
    Ok((loss, cache.active_units()))
}

/// Analytic loss gradient for one example, flattened layer by layer
/// (weights row-major, then bias). Dropout is disabled.
pub fn parameter_gradients(net: &Network, features: &[f64], label: f64) -> Result<Vec<f64>> {
    if features.len() != net.spec.input_dim {
        return Err(Error::Shape(format!("expected {} features, got {}", net.spec.input_dim, features.len())));
    }
    let mut x = Array2::zeros((1, features.len()));
    net.standardizer.apply_row(features, x.as_slice_mut().expect("standard layout"));
    // the rng is never consulted with dropout disabled
    let mut rng = RandomStream::new(0, 0).rng();
    let cache = forward_cache(net, x, 0.0, &mut rng);
    let (_, dz) = loss_and_grad(net.spec.head, &cache.output, &[label]);
    let g = backward(net, &cache, &dz);
    let mut flat = Vec::with_capacity(net.spec.parameter_count());
    for (dw, db) in g.dw.iter().zip(&g.db) {
        flat.extend(dw.iter());
        flat.extend(db.iter());
    }
    Ok(flat)
}

/// Five-point central difference. The step starts at 1e-4 and shrinks
/// while the probes straddle a ReLU kink; `None` if the parameter sits on one.
fn stencil(mut loss_at: impl FnMut(f64) -> Result<(f64, Vec<bool>)>) -> Result<Option<f64>> {
    let (_, base) = loss_at(0.0)?;
    let mut h = 1e-4;
    while h > 1e-9 {
        let probes = [loss_at(h)?, loss_at(-h)?, loss_at(2.0 * h)?, loss_at(-2.0 * h)?];
        if probes.iter().all(|(_, pattern)| *pattern == base) {
            let [p1, m1, p2, m2] = probes.map(|(l, _)| l);
            return Ok(Some((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)));
        }
        h /= 10.0;
    }
    Ok(None)
}

/// Largest relative disagreement between backprop and five-point central
/// differences, `|a - fd| / (|a| + |fd| + 1e-12)`, over every parameter
/// at which the loss is differentiable.
pub fn gradient_check_network(net: &Network, features: &[f64], label: f64) -> Result<f64> {
    let analytic = parameter_gradients(net, features, label)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    for k in 0..probe.layers.len() {
        let (rows, cols) = probe.layers[k].weights.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = probe.layers[k].weights[[r, c]];
                let fd = stencil(|d| {
                    probe.layers[k].weights[[r, c]] = orig + d;
                    single_loss(&probe, features, label)
                })?;
                probe.layers[k].weights[[r, c]] = orig;
                if let Some(fd) = fd {
                    worst = worst.max(rel_err(analytic[idx], fd));
                }
                idx += 1;
            }
        }
        for j in 0..probe.layers[k].bias.len() {
            let orig = probe.layers[k].bias[j];
            let fd = stencil(|d| {
                probe.layers[k].bias[j] = orig + d;
                single_loss(&probe, features, label)
            })?;
            probe.layers[k].bias[j] = orig;
            if let Some(fd) = fd {
                worst = worst.max(rel_err(analytic[idx], fd));
            }
            idx += 1;
        }
    }
    Ok(worst)
}

fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / (a.abs() + fd.abs() + 1e-12)
}

/// Gradient check on a freshly initialized network drawn from `seed`.
pub fn gradient_check(spec: &NetworkSpec, features: &[f64], label: f64, seed: u64) -> Result<f64> {
    let net = Network::init(spec, &mut RandomStream::new(seed, 0).rng())?;
    gradient_check_network(&net, features, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_two_layer_five_nodes() {
        let spec = NetworkSpec::new(3, vec![5, 5], Head::LogitClassifier, 0.1).unwrap();
        let err = gradient_check(&spec, &[0.4, -1.1, 0.9], 1.0, 3).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn linear_head() {
        let spec = NetworkSpec::new(2, vec![5, 5], Head::LinearRegressor, 0.0).unwrap();
        let err = gradient_check(&spec, &[0.25, 1.5], 2.0, 4).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn zero_network_hidden_gradients_vanish() {
        let spec = NetworkSpec::new(2, vec![4, 3], Head::LogitClassifier, 0.0).unwrap();
        let net = Network::zeros(&spec).unwrap();
        let g = parameter_gradients(&net, &[0.0, 0.0], 1.0).unwrap();
        let hidden = 2 * 4 + 4 + 4 * 3 + 3;
        assert!(g[..hidden].iter().all(|&v| v == 0.0));
        // output bias still gets sigmoid(0) - 1
        assert_eq!(*g.last().unwrap(), -0.5);
    }
}
