use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::stream;
use crate::error::{Error, Result};

pub const QUANTILE_METHOD: &str = "linear interpolation at (n-1)*q";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub trials: usize,
    pub sample_size: usize,
    pub q_lo: f64,
    pub q_hi: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            trials: 100,
            sample_size: 800,
            q_lo: 0.025,
            q_hi: 0.975,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn with_seed(seed: u64) -> Self {
        BootstrapConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.q_lo && self.q_lo < self.q_hi && self.q_hi < 1.0) {
            return Err(Error::Config(format!(
                "quantiles must satisfy 0 < q_lo < q_hi < 1 (got {} and {})",
                self.q_lo, self.q_hi
            )));
        }
        if self.trials < 2 {
            return Err(Error::Config("bootstrap needs at least 2 trials".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("bootstrap sample size must be positive".into()));
        }
        if self.trials > u32::MAX as usize {
            return Err(Error::Config("too many bootstrap trials".into()));
        }
        Ok(())
    }
}

/// Trial means of `sample_size` draws with replacement from `scores`.
///
/// Trial `t` reads only stream `(seed, tag, t)`, and the mean is summed in
/// draw order, so the result does not depend on the thread count.
pub fn bootstrap_scores(scores: &[f64], cfg: &BootstrapConfig, tag: u32) -> Result<Vec<f64>> {
    cfg.validate()?;
    if scores.is_empty() {
        return Err(Error::EmptyGroup("cannot bootstrap an empty group".into()));
    }
    let n = scores.len();
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(cfg.seed, tag, trial as u32);
            let total: f64 = (0..cfg.sample_size).map(|_| scores[rng.random_range(0..n)]).sum();
            total / cfg.sample_size as f64
        })
        .collect())
}

/// Empirical quantile with linear interpolation between order statistics
/// at position `(n - 1) * q`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    let (lo, _) = quantiles(values, q, q)?;
    Ok(lo)
}

pub fn quantiles(values: &[f64], q_lo: f64, q_hi: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Statistics("quantiles of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) {
        return Err(Error::Statistics(format!("quantile levels out of range: {q_lo}, {q_hi}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = (sorted.len() - 1) as f64 * q;
        let below = pos.floor() as usize;
        let frac = pos - below as f64;
        match sorted.get(below + 1) {
            Some(&next) if frac > 0.0 => sorted[below] + frac * (next - sorted[below]),
            _ => sorted[below],
        }
    };
    Ok((at(q_lo), at(q_hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[0.0, 1.0], 0.5).unwrap(), 0.5);
        let hundred: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        assert!((quantile(&hundred, 0.025).unwrap() - 0.02475).abs() < 1e-12);
        assert_eq!(quantiles(&[0.3; 7], 0.025, 0.975).unwrap(), (0.3, 0.3));
        assert!(quantiles(&[], 0.1, 0.9).is_err());
        assert_eq!(quantiles(&[5.0, 1.0, 3.0], 0.0, 1.0).unwrap(), (1.0, 5.0));
    }

    #[test]
    fn bootstrap_degenerate_groups() {
        let cfg = BootstrapConfig::default();
        assert!(bootstrap_scores(&[1.0; 40], &cfg, 1).unwrap().iter().all(|&v| v == 1.0));
        let zeros = bootstrap_scores(&[0.0], &cfg, 1).unwrap();
        assert_eq!(zeros.len(), 100);
        assert!(zeros.iter().all(|&v| v == 0.0));
        assert!(bootstrap_scores(&[], &cfg, 1).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic_across_pools() {
        let scores: Vec<f64> = (0..500).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let cfg = BootstrapConfig::with_seed(42);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let eight = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| bootstrap_scores(&scores, &cfg, 1).unwrap());
        let b = eight.install(|| bootstrap_scores(&scores, &cfg, 1).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, bootstrap_scores(&scores, &cfg, 2).unwrap());
        // trial means of a 1/3 group stay near 1/3
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::default().validate().is_ok());
        let bad = [
            BootstrapConfig { q_lo: 0.0, ..Default::default() },
            BootstrapConfig { q_lo: 0.6, q_hi: 0.5, ..Default::default() },
            BootstrapConfig { q_hi: 1.0, ..Default::default() },
            BootstrapConfig { trials: 1, ..Default::default() },
            BootstrapConfig { sample_size: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
