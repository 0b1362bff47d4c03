use crate::{Error, Result};

/// Per-example negative log-likelihood of a Bernoulli label given a logit,
/// `max(z, 0) - y z + ln(1 + exp(-|z|))`.
#[inline]
pub(crate) fn bce_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy computed from linear predictors.
pub fn bce_loss(linear_predictors: &[f64], labels: &[f64]) -> Result<f64> {
    if linear_predictors.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictors vs {} labels", linear_predictors.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::Shape("empty loss input".into()));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain("binary cross-entropy labels must be 0 or 1".into()));
    }
    let total: f64 = linear_predictors.iter().zip(labels).map(|(&z, &y)| bce_term(z, y)).sum();
    Ok(total / labels.len() as f64)
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", predictions.len(), targets.len())));
    }
    if targets.is_empty() {
        return Err(Error::Shape("empty loss input".into()));
    }
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bce_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(&[0.0], &[1.0]).unwrap() - ln2).abs() < 1e-15);
        let sat = bce_loss(&[50.0], &[1.0]).unwrap();
        assert!(sat.is_finite() && sat <= 1e-20);
        assert!((bce_loss(&[0.0, 0.0], &[0.0, 1.0]).unwrap() - ln2).abs() < 1e-15);
        assert!(matches!(bce_loss(&[0.0], &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn bce_finite_over_wide_range(z in -1e6f64..1e6, y in 0u8..2) {
            let l = bce_loss(&[z], &[y as f64]).unwrap();
            prop_assert!(l.is_finite() && l >= 0.0);
        }
    }
}
