//! Classical decision rules for the adaptive design.

use super::{proportion_stat, simulate_trial_with, SsrDesign, TrialPath};
use crate::stats::normal_quantile;
use crate::{Error, RandomStream, Result};
use rayon::prelude::*;

/// Inverse normal combination with equal weights of the two stage statistics.
pub fn incta_statistic(path: &TrialPath, n1: u32) -> f64 {
    let z1 = proportion_stat(path.x_p1, path.x_t1, n1);
    let z2 = proportion_stat(path.x_p2, path.x_t2, path.n2);
    (z1 + z2) / std::f64::consts::SQRT_2
}

pub fn incta_decision(path: &TrialPath, n1: u32, alpha: f64) -> Result<bool> {
    Ok(incta_statistic(path, n1) > normal_quantile(1.0 - alpha)?)
}

/// Pooled two-proportion statistic over both stages.
pub fn bm_statistic(path: &TrialPath, n1: u32) -> f64 {
    proportion_stat(path.x_p1 + path.x_p2, path.x_t1 + path.x_t2, n1 + path.n2)
}

/// Pooled test at a reduced nominal level that restores the overall size.
pub fn bm_decision(path: &TrialPath, n1: u32, adjusted_alpha: f64) -> Result<bool> {
    Ok(bm_statistic(path, n1) > normal_quantile(1.0 - adjusted_alpha)?)
}

/// Largest nominal level for the pooled test whose worst-case simulated
/// type I error over `pi_grid` stays at or below `target_alpha`.
pub fn calibrate_bm(design: &SsrDesign, pi_grid: &[f64], target_alpha: f64, replicates: usize, stream: &RandomStream) -> Result<f64> {
    if pi_grid.is_empty() || replicates == 0 {
        return Err(Error::Calibration("BM calibration needs a non-empty grid and replicates".into()));
    }
    if !(target_alpha > 0.0 && target_alpha < 0.5) {
        return Err(Error::Domain(format!("target alpha must lie in (0, 0.5), got {target_alpha}")));
    }
    let n1 = design.params().n1;
    let stats: Vec<Vec<f64>> = pi_grid
        .iter()
        .enumerate()
        .map(|(g, &pi)| {
            let s = stream.substream(g as u64);
            (0..replicates)
                .into_par_iter()
                .map(|i| bm_statistic(&simulate_trial_with(pi, pi, design, &mut s.substream(i as u64).rng()), n1))
                .collect()
        })
        .collect();
    let worst = |level: f64| -> Result<f64> {
        let cut = normal_quantile(1.0 - level)?;
        Ok(stats.iter().map(|z| z.iter().filter(|&&v| v > cut).count() as f64 / replicates as f64).fold(0.0, f64::max))
    };
    let (mut lo, mut hi) = (1e-6, target_alpha);
    if worst(lo)? > target_alpha {
        return Err(Error::Calibration(format!("no nominal level in [{lo}, {hi}] keeps the type I error at {target_alpha}")));
    }
    if worst(hi)? <= target_alpha {
        return Ok(hi);
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if worst(mid)? <= target_alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
