//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nptest::stats::{normal_cdf, normal_quantile, BetaParams};
use statrs::distribution::{Beta, Continuous};

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / deriv;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * deriv * deriv)));
    }
    out
}

/// ∫ f over [lo, hi] with an n-point rule.
pub fn integrate(nodes: &[(f64, f64)], lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    nodes.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Conditional power written out directly from its definition.
pub fn cp_direct(m1: f64, n1: f64, n2: f64, pi_t: f64, pi_p: f64, alpha: f64) -> f64 {
    let pi = 0.5 * (pi_t + pi_p);
    let z = normal_quantile(alpha).unwrap();
    normal_cdf((z * (n1 + n2).sqrt() + m1 * n1.sqrt()) / n2.sqrt() + (pi_t - pi_p) * n2.sqrt() / (2.0 * pi * (1.0 - pi)).sqrt())
}

/// Prior mass interval: the Beta support cut to ±12 standard deviations.
fn support(p: BetaParams) -> (f64, f64) {
    let mean = p.a / (p.a + p.b);
    let sd = (p.a * p.b / ((p.a + p.b).powi(2) * (p.a + p.b + 1.0))).sqrt();
    ((mean - 12.0 * sd).max(0.0), (mean + 12.0 * sd).min(1.0))
}

/// Nested 64 × 64 Gauss–Legendre quadrature of CP against two Beta priors.
pub fn cep_quadrature(m1: f64, n1: u32, n2: u32, prior_t: BetaParams, prior_p: BetaParams, alpha: f64) -> f64 {
    let nodes = gauss_legendre(64);
    let bt = Beta::new(prior_t.a, prior_t.b).unwrap();
    let bp = Beta::new(prior_p.a, prior_p.b).unwrap();
    let (tlo, thi) = support(prior_t);
    let (plo, phi) = support(prior_p);
    integrate(&nodes, tlo, thi, |pt| {
        bt.pdf(pt) * integrate(&nodes, plo, phi, |pp| bp.pdf(pp) * cp_direct(m1, n1 as f64, n2 as f64, pt, pp, alpha))
    })
}
