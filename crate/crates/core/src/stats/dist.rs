use super::ppnd16;
use crate::{Error, RandomStream, Result};
use rand::{Rng, RngCore};
use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Uniform draw on the open interval (0, 1) from 53 random bits.
#[inline]
pub fn draw_open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// One normal draw by inversion (exactly one uniform per draw).
#[inline]
pub fn draw_normal<R: RngCore + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    mu + sigma * ppnd16(draw_open_uniform(rng))
}

pub fn sample_normal(stream: &RandomStream, mu: f64, sigma: f64, n: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::Domain(format!("normal needs finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    if n == 0 {
        return Err(Error::Domain("normal sample size must be at least 1".into()));
    }
    let mut rng = stream.rng();
    Ok((0..n).map(|_| draw_normal(&mut rng, mu, sigma)).collect())
}

#[inline]
pub fn draw_binomial<R: Rng + ?Sized>(rng: &mut R, n: u32, p: f64) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).expect("p checked").sample(rng) as u32
}

pub fn sample_binomial(stream: &RandomStream, n: u32, p: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("binomial p must lie in [0, 1], got {p}")));
    }
    Ok(draw_binomial(&mut stream.rng(), n, p))
}

/// Shape parameters of a Beta distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("beta shapes must be positive, got ({a}, {b})")));
        }
        Ok(BetaParams { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }
}

#[inline]
pub fn draw_beta<R: Rng + ?Sized>(rng: &mut R, params: BetaParams) -> f64 {
    Beta::new(params.a, params.b).expect("validated shapes").sample(rng)
}

pub fn sample_beta(stream: &RandomStream, a: f64, b: f64) -> Result<f64> {
    let params = BetaParams::new(a, b)?;
    Ok(draw_beta(&mut stream.rng(), params))
}

/// Beta shapes with the requested mean and variance.
pub fn beta_from_moments(mean: f64, variance: f64) -> Result<BetaParams> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::Domain(format!("beta mean must lie in (0, 1), got {mean}")));
    }
    let bound = mean * (1.0 - mean);
    if !(variance > 0.0) {
        return Err(Error::Domain(format!("beta variance must be positive, got {variance}")));
    }
    if variance >= bound {
        return Err(Error::InfeasibleMoments { variance, bound });
    }
    let k = bound / variance - 1.0;
    BetaParams::new(mean * k, (1.0 - mean) * k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_mean_and_sd() {
        let s = RandomStream::new(11, 0);
        let x = sample_normal(&s, 0.0, 1.0, 1_000_000).unwrap();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        assert!(m.abs() < 0.004, "{m}");
        let y = sample_normal(&s.substream(1), 0.0, 2.0, 1_000_000).unwrap();
        let sd = crate::stats::summarize(&y).unwrap().unbiased_sd;
        assert!((sd - 2.0).abs() < 0.01, "{sd}");
        assert!(sample_normal(&s, 5.0, 0.0, 10).is_err());
    }

    #[test]
    fn normal_replays_bit_identically() {
        let s = RandomStream::new(3, 9);
        assert_eq!(sample_normal(&s, 1.0, 2.0, 100).unwrap(), sample_normal(&s, 1.0, 2.0, 100).unwrap());
    }

    #[test]
    fn binomial_examples() {
        let s = RandomStream::new(5, 0);
        assert_eq!(sample_binomial(&s, 85, 0.0).unwrap(), 0);
        assert_eq!(sample_binomial(&s, 85, 1.0).unwrap(), 85);
        assert!(sample_binomial(&s, 85, 1.2).is_err());
        let reps = 100_000;
        let total: u64 = (0..reps).map(|i| sample_binomial(&s.substream(i), 85, 0.27).unwrap() as u64).sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 22.95).abs() < 0.1, "{mean}");
    }

    #[test]
    fn binomial_complement_mean() {
        // E[Bin(n,p) + Bin(n,1-p)] = n
        let s = RandomStream::new(6, 0);
        let (n, p, reps) = (40u32, 0.3, 20_000u64);
        let total: u64 = (0..reps)
            .map(|i| {
                let mut r = s.substream(i).rng();
                (draw_binomial(&mut r, n, p) + draw_binomial(&mut r, n, 1.0 - p)) as u64
            })
            .sum();
        let mean = total as f64 / reps as f64;
        let tol = 4.0 * ((n as f64 / 4.0) * reps as f64).sqrt() / reps as f64 * 2f64.sqrt();
        assert!((mean - n as f64).abs() < tol, "{mean} tol {tol}");
    }

    #[test]
    fn beta_examples() {
        let s = RandomStream::new(8, 0);
        let reps = 100_000u64;
        for (a, b, want) in [(1.0, 1.0, 0.5), (2.0, 6.0, 0.25)] {
            let m: f64 = (0..reps).map(|i| sample_beta(&s.substream(i), a, b).unwrap()).sum::<f64>() / reps as f64;
            assert!((m - want).abs() < 0.005, "Beta({a},{b}) mean {m}");
        }
        assert!(sample_beta(&s, 0.0, 1.0).is_err());
    }

    #[test]
    fn moments_examples() {
        let p = beta_from_moments(0.5, 1.0 / 12.0).unwrap();
        assert!((p.a - 1.0).abs() < 1e-12 && (p.b - 1.0).abs() < 1e-12);
        let p = beta_from_moments(0.27, 0.001).unwrap();
        assert!((p.a - 52.9470).abs() < 1e-3, "{}", p.a);
        assert!((p.b - 143.1530).abs() < 1e-3, "{}", p.b);
        assert!((p.mean() - 0.27).abs() < 1e-12);
        assert!((p.variance() - 0.001).abs() < 1e-12);
        assert!(matches!(beta_from_moments(0.27, 0.3), Err(Error::InfeasibleMoments { .. })));
    }

    #[test]
    fn moments_round_trip_grid() {
        for i in 1..50 {
            let mean = i as f64 / 50.0;
            let bound = mean * (1.0 - mean);
            for j in 1..20 {
                let var = bound * j as f64 / 20.0;
                let p = beta_from_moments(mean, var).unwrap();
                assert!((p.mean() - mean).abs() < 1e-10);
                assert!((p.variance() - var).abs() < 1e-10);
            }
        }
    }
}
