//! Geometric-Brownian-motion log-return baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    /// Mean daily log-return.
    pub v: f64,
    /// Variance of the daily log-return.
    pub sigma2: f64,
    /// Step in trading days.
    pub dt: f64,
}

/// How the drift enters each draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drift {
    /// Draws are N(v, σ²·dt).
    #[default]
    Verbatim,
    /// Draws are N(v·dt, σ²·dt).
    Strict,
}

pub fn fit_gbm(train_logreturns: &[f64]) -> Result<GbmParams> {
    if train_logreturns.len() < 2 {
        return Err(Error::Degenerate(format!(
            "GBM fit needs at least 2 log-returns, got {}",
            train_logreturns.len()
        )));
    }
    let (v, sd) = mean_sd(train_logreturns);
    Ok(GbmParams {
        v,
        sigma2: sd * sd,
        dt: 1.0,
    })
}

pub fn simulate_logreturns(n: usize, p: &GbmParams, seed: u64) -> Result<Vec<f64>> {
    simulate_logreturns_with(n, p, seed, Drift::Verbatim)
}

/// `n` i.i.d. Gaussian log-returns from a ChaCha8 stream seeded with `seed`.
pub fn simulate_logreturns_with(n: usize, p: &GbmParams, seed: u64, drift: Drift) -> Result<Vec<f64>> {
    if !(p.sigma2 >= 0.0) || !(p.dt > 0.0) || !p.v.is_finite() {
        return Err(Error::Config(format!("invalid GBM parameters {p:?}")));
    }
    let mean = match drift {
        Drift::Verbatim => p.v,
        Drift::Strict => p.v * p.dt,
    };
    let normal = Normal::new(mean, (p.sigma2 * p.dt).sqrt()).map_err(|e| Error::Config(format!("GBM normal: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Ŝ_t = S_{t−1}·exp(sim_t).
pub fn compose_prices(prev: &[f64], sims: &[f64]) -> Vec<f64> {
    prev.iter().zip(sims).map(|(s, r)| s * r.exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_hand_values() {
        let p = fit_gbm(&[0.01, -0.01]).unwrap();
        assert_eq!(p.v, 0.0);
        assert!((p.sigma2 - 0.0002).abs() < 1e-18);
        let c = fit_gbm(&[0.3; 4]).unwrap();
        assert_eq!((c.v, c.sigma2), (0.3, 0.0));
        assert!(fit_gbm(&[0.1]).is_err());
    }

    #[test]
    fn zero_variance_draws_equal_mean() {
        let p = GbmParams {
            v: 0.002,
            sigma2: 0.0,
            dt: 1.0,
        };
        assert!(simulate_logreturns(50, &p, 1).unwrap().iter().all(|&x| x == 0.002));
    }

    #[test]
    fn strict_drift_scales_mean() {
        let p = GbmParams {
            v: 0.01,
            sigma2: 0.0,
            dt: 0.5,
        };
        assert_eq!(simulate_logreturns_with(1, &p, 0, Drift::Strict).unwrap()[0], 0.005);
        assert_eq!(simulate_logreturns_with(1, &p, 0, Drift::Verbatim).unwrap()[0], 0.01);
    }

    #[test]
    fn seeded() {
        let p = GbmParams {
            v: 0.0,
            sigma2: 1e-4,
            dt: 1.0,
        };
        assert_eq!(
            simulate_logreturns(10, &p, 9).unwrap(),
            simulate_logreturns(10, &p, 9).unwrap()
        );
        assert_ne!(
            simulate_logreturns(10, &p, 9).unwrap(),
            simulate_logreturns(10, &p, 10).unwrap()
        );
    }

    #[test]
    fn composition() {
        assert_eq!(compose_prices(&[100.0, 50.0], &[0.0, 0.0]), vec![100.0, 50.0]);
    }
}
