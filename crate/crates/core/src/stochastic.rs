//! Seeded random inflow rates and target position jitter.
//!
//! Every draw is a pure function of a seed and integer indices, using the
//! stream and word-position controls of a ChaCha generator, so the order in
//! which concurrent workers ask for draws never changes a realization.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MissionConfig;

/// Piecewise-constant uniform growth rates, resampled every `interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowModel {
    bounds: Vec<(f64, f64)>,
    interval: f64,
    seed: u64,
}

impl InflowModel {
    pub fn new(bounds: Vec<(f64, f64)>, interval: f64, seed: u64) -> Result<Self> {
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::Config("inflow resample interval must be positive".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("bad inflow bounds [{lo}, {hi}]")));
            }
        }
        Ok(InflowModel { bounds, interval, seed })
    }

    /// Same bounds for every target.
    pub fn uniform(num_targets: usize, lo: f64, hi: f64, interval: f64, seed: u64) -> Result<Self> {
        Self::new(vec![(lo, hi); num_targets], interval, seed)
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rate of target `i` during resample interval `k`.
    pub fn draw(&self, i: usize, k: u64) -> f64 {
        let (lo, hi) = self.bounds[i];
        if lo == hi {
            return lo;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng.set_word_pos(2 * k as u128);
        lo + (hi - lo) * rng.gen::<f64>()
    }
}

/// Rate of target `i` at time `t`.
pub fn sample_inflow(i: usize, t: f64, model: &InflowModel) -> f64 {
    model.draw(i, (t / model.interval).floor().max(0.0) as u64)
}

/// Target positions shifted by independent uniform offsets in `[-delta, delta]`.
pub fn sample_positions(config: &MissionConfig, delta: f64, seed: u64) -> Result<Vec<f64>> {
    check_jitter(config, delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A stream far away from the ones used for inflow draws.
    rng.set_stream(u64::MAX);
    Ok(config
        .targets()
        .iter()
        .map(|t| if delta == 0.0 { t.position } else { t.position + rng.gen_range(-delta..=delta) })
        .collect())
}

pub fn check_jitter(config: &MissionConfig, delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config("jitter half-width must be nonnegative".into()));
    }
    if delta > 0.0 && delta >= 0.5 * config.min_target_gap() {
        return Err(Error::Config("jitter half-width must be below half the smallest target gap".into()));
    }
    let first = config.targets()[0].position;
    let last = config.targets()[config.num_targets() - 1].position;
    if first - delta <= 0.0 || last + delta >= config.mission_length() {
        return Err(Error::Config("jitter would push a target outside the mission space".into()));
    }
    Ok(())
}

/// Seed of replicate `replicate` within iteration `iteration`.
pub fn sub_seed(master: u64, iteration: u64, replicate: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(iteration);
    rng.set_word_pos(2 * replicate as u128);
    rng.next_u64()
}

/// Which random process perturbs the runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RandomMode {
    #[default]
    None,
    Inflow,
    Jitter,
}

/// When a new realization is drawn during descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Cadence {
    #[default]
    PerIteration,
    PerRun,
}

/// Random model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomModel {
    pub mode: RandomMode,
    pub inflow_low: f64,
    pub inflow_high: f64,
    pub resample_interval: f64,
    pub jitter: f64,
    pub master_seed: u64,
    /// Realizations averaged per gradient.
    pub samples: usize,
    pub cadence: Cadence,
}

impl Default for RandomModel {
    fn default() -> Self {
        RandomModel {
            mode: RandomMode::None,
            inflow_low: 0.0,
            inflow_high: 2.0,
            resample_interval: 1.0,
            jitter: 0.25,
            master_seed: 0,
            samples: 1,
            cadence: Cadence::PerIteration,
        }
    }
}

impl RandomModel {
    pub fn validate(&self, config: &MissionConfig) -> Result<()> {
        match self.mode {
            RandomMode::None => Ok(()),
            RandomMode::Inflow => {
                InflowModel::uniform(config.num_targets(), self.inflow_low, self.inflow_high, self.resample_interval, 0)?;
                if self.samples == 0 {
                    return Err(Error::Config("stochastic.samples must be at least 1".into()));
                }
                Ok(())
            }
            RandomMode::Jitter => {
                check_jitter(config, self.jitter)?;
                if self.samples == 0 {
                    return Err(Error::Config("stochastic.samples must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_random(&self) -> bool {
        self.mode != RandomMode::None
    }

    /// Realization for a given seed: a possibly moved configuration and a rate law.
    pub fn realize(&self, config: &MissionConfig, seed: u64) -> Result<(MissionConfig, crate::model::UncertaintyRate)> {
        use crate::model::UncertaintyRate;
        match self.mode {
            RandomMode::None => Ok((config.clone(), UncertaintyRate::Deterministic)),
            RandomMode::Inflow => {
                let m = InflowModel::uniform(config.num_targets(), self.inflow_low, self.inflow_high, self.resample_interval, seed)?;
                Ok((config.clone(), UncertaintyRate::PiecewiseRandom(m)))
            }
            RandomMode::Jitter => {
                let xs = sample_positions(config, self.jitter, seed)?;
                Ok((config.with_target_positions(&xs)?, UncertaintyRate::Deterministic))
            }
        }
    }

    /// Shrink of the switching-point interval so that every realization accepts it.
    pub fn bound_margin(&self) -> f64 {
        if self.mode == RandomMode::Jitter {
            self.jitter
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentSpec, Target};

    fn cfg() -> MissionConfig {
        let targets = [5.0, 10.0, 15.0].iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
        MissionConfig::new(20.0, targets, vec![AgentSpec::new(0.0, 2.0)], 100.0, false).unwrap()
    }

    #[test]
    fn degenerate_bounds_are_constant() {
        let m = InflowModel::uniform(3, 1.0, 1.0, 1.0, 9).unwrap();
        for k in 0..50 {
            assert_eq!(m.draw(2, k), 1.0);
        }
    }

    #[test]
    fn draws_are_deterministic_and_indexed() {
        let m = InflowModel::uniform(3, 0.0, 2.0, 1.0, 42).unwrap();
        assert_eq!(m.draw(1, 7).to_bits(), m.draw(1, 7).to_bits());
        assert_ne!(m.draw(1, 7), m.draw(1, 8));
        assert_ne!(m.draw(1, 7), m.draw(2, 7));
        assert_eq!(sample_inflow(1, 7.5, &m), m.draw(1, 7));
    }

    #[test]
    fn inflow_mean() {
        let m = InflowModel::uniform(1, 0.0, 2.0, 1.0, 3).unwrap();
        let n = 100_000;
        let mean = (0..n).map(|k| m.draw(0, k)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((0..1000).all(|k| (0.0..=2.0).contains(&m.draw(0, k))));
    }

    #[test]
    fn jitter_examples() {
        let c = cfg();
        assert_eq!(sample_positions(&c, 0.0, 1).unwrap(), vec![5.0, 10.0, 15.0]);
        let xs = sample_positions(&c, 0.25, 1).unwrap();
        for (x, n) in xs.iter().zip([5.0, 10.0, 15.0]) {
            assert!((x - n).abs() <= 0.25);
        }
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(xs, sample_positions(&c, 0.25, 1).unwrap());
        assert_ne!(xs, sample_positions(&c, 0.25, 2).unwrap());
        assert!(sample_positions(&c, 2.5, 1).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        assert_eq!(sub_seed(1, 2, 3), sub_seed(1, 2, 3));
        assert_ne!(sub_seed(1, 2, 3), sub_seed(1, 2, 4));
        assert_ne!(sub_seed(1, 2, 3), sub_seed(1, 3, 3));
        assert_ne!(sub_seed(1, 2, 3), sub_seed(2, 2, 3));
    }
}
