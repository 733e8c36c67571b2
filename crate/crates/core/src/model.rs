//! Problem instance, sensing model and uncertainty dynamics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};
use crate::stochastic::InflowModel;

/// A point of interest whose uncertainty grows while unobserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub position: f64,
    pub growth_rate: f64,
    pub decay_rate: f64,
    #[serde(default)]
    pub initial_uncertainty: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Target {
    pub fn new(position: f64, growth_rate: f64, decay_rate: f64, initial_uncertainty: f64) -> Self {
        Target { position, growth_rate, decay_rate, initial_uncertainty, weight: 1.0 }
    }
}

/// A mobile sensor moving at unit speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub initial_position: f64,
    pub sensing_range: f64,
    /// Either -1 or +1.
    #[serde(default = "plus_one")]
    pub initial_direction: i8,
}

fn plus_one() -> i8 {
    1
}

impl AgentSpec {
    pub fn new(initial_position: f64, sensing_range: f64) -> Self {
        AgentSpec { initial_position, sensing_range, initial_direction: 1 }
    }
}

/// Validated mission description. Fields are private so that every
/// instance in circulation satisfies the invariants checked in [`MissionConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionConfig {
    mission_length: f64,
    targets: Vec<Target>,
    agents: Vec<AgentSpec>,
    horizon: f64,
    no_cross: bool,
}

impl MissionConfig {
    pub fn new(
        mission_length: f64,
        targets: Vec<Target>,
        agents: Vec<AgentSpec>,
        horizon: f64,
        no_cross: bool,
    ) -> Result<Self> {
        finite(mission_length, "mission_length")?;
        finite(horizon, "horizon")?;
        if mission_length <= 0.0 {
            return Err(Error::Config("mission_length must be positive".into()));
        }
        // A zero horizon is accepted as a degenerate run with an empty trace.
        if horizon < 0.0 {
            return Err(Error::Config("horizon must be nonnegative".into()));
        }
        if agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if targets.len() <= agents.len() {
            return Err(Error::Config(format!(
                "need more targets than agents (got {} targets, {} agents)",
                targets.len(),
                agents.len()
            )));
        }
        let mut prev = 0.0;
        for (i, t) in targets.iter().enumerate() {
            for (v, name) in [
                (t.position, "target position"),
                (t.growth_rate, "growth_rate"),
                (t.decay_rate, "decay_rate"),
                (t.initial_uncertainty, "initial_uncertainty"),
                (t.weight, "weight"),
            ] {
                finite(v, name)?;
            }
            if !(t.position > prev && t.position < mission_length) {
                return Err(Error::Config(format!(
                    "target {} at {} breaks strict ordering inside (0, {})",
                    i + 1,
                    t.position,
                    mission_length
                )));
            }
            prev = t.position;
            if !(t.decay_rate > t.growth_rate && t.growth_rate > 0.0) {
                return Err(Error::Config(format!(
                    "target {} needs decay_rate > growth_rate > 0",
                    i + 1
                )));
            }
            if t.initial_uncertainty < 0.0 {
                return Err(Error::Config(format!("target {} has negative initial uncertainty", i + 1)));
            }
            if t.weight <= 0.0 {
                return Err(Error::Config(format!("target {} has nonpositive weight", i + 1)));
            }
        }
        for (j, a) in agents.iter().enumerate() {
            finite(a.initial_position, "initial_position")?;
            finite(a.sensing_range, "sensing_range")?;
            if a.sensing_range <= 0.0 {
                return Err(Error::Config(format!("agent {} needs a positive sensing range", j + 1)));
            }
            if a.initial_position < 0.0 || a.initial_position > mission_length {
                return Err(Error::Config(format!("agent {} starts outside [0, L]", j + 1)));
            }
            if a.initial_direction != 1 && a.initial_direction != -1 {
                return Err(Error::Config(format!("agent {} initial_direction must be -1 or 1", j + 1)));
            }
        }
        if no_cross {
            for (j, w) in agents.windows(2).enumerate() {
                if w[0].initial_position > w[1].initial_position {
                    return Err(Error::Config(format!(
                        "no_cross requires agent {} to start left of agent {}",
                        j + 1,
                        j + 2
                    )));
                }
            }
        }
        Ok(MissionConfig { mission_length, targets, agents, horizon, no_cross })
    }

    pub fn mission_length(&self) -> f64 {
        self.mission_length
    }
    pub fn targets(&self) -> &[Target] {
        &self.targets
    }
    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn no_cross(&self) -> bool {
        self.no_cross
    }
    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn r_max(&self) -> f64 {
        self.agents.iter().map(|a| a.sensing_range).fold(f64::MIN, f64::max)
    }

    pub fn r_min(&self) -> f64 {
        self.agents.iter().map(|a| a.sensing_range).fold(f64::MAX, f64::min)
    }

    /// Interval `[a, b]` every switching point must lie in.
    pub fn feasible_bounds(&self) -> (f64, f64) {
        let r = self.r_max();
        let first = self.targets[0].position;
        let last = self.targets[self.targets.len() - 1].position;
        ((first - r).max(0.0), (last + r).min(self.mission_length))
    }

    /// Smallest distance between consecutive targets.
    pub fn min_target_gap(&self) -> f64 {
        self.targets
            .windows(2)
            .map(|w| w[1].position - w[0].position)
            .fold(f64::INFINITY, f64::min)
    }

    /// Copy with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.mission_length, self.targets.clone(), self.agents.clone(), horizon, self.no_cross)
    }

    /// Copy with moved targets.
    pub fn with_target_positions(&self, positions: &[f64]) -> Result<Self> {
        if positions.len() != self.targets.len() {
            return Err(Error::Mismatch("target position count".into()));
        }
        let mut targets = self.targets.clone();
        for (t, &x) in targets.iter_mut().zip(positions) {
            t.position = x;
        }
        Self::new(self.mission_length, targets, self.agents.clone(), self.horizon, self.no_cross)
    }

    /// Copy with different nominal growth rates.
    pub fn with_growth_rates(&self, rates: &[f64]) -> Result<Self> {
        if rates.len() != self.targets.len() {
            return Err(Error::Mismatch("growth rate count".into()));
        }
        let mut targets = self.targets.clone();
        for (t, &a) in targets.iter_mut().zip(rates) {
            t.growth_rate = a;
        }
        Self::new(self.mission_length, targets, self.agents.clone(), self.horizon, self.no_cross)
    }

    /// Copy with the agents replaced (used to restrict a problem to one agent).
    pub fn with_agents(&self, agents: Vec<AgentSpec>) -> Result<Self> {
        Self::new(self.mission_length, self.targets.clone(), agents, self.horizon, self.no_cross)
    }
}

/// Splits the targets into contiguous groups, one per agent, by cutting at
/// the widest gaps between neighbours (leftmost gap first on ties).
pub fn target_groups(config: &MissionConfig) -> Vec<std::ops::Range<usize>> {
    let xs = config.targets();
    let n = config.num_agents();
    let m = xs.len();
    let mut gaps: Vec<usize> = (1..m).collect();
    gaps.sort_by(|&a, &b| {
        let ga = xs[a].position - xs[a - 1].position;
        let gb = xs[b].position - xs[b - 1].position;
        gb.total_cmp(&ga).then(a.cmp(&b))
    });
    let mut cuts: Vec<usize> = gaps[..n - 1].to_vec();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(m);
    cuts.windows(2).map(|w| w[0]..w[1]).collect()
}

/// How the growth rates evolve over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum UncertaintyRate {
    /// Constant `growth_rate` from the target definition.
    #[default]
    Deterministic,
    /// Piecewise-constant random draws.
    PiecewiseRandom(InflowModel),
}

impl UncertaintyRate {
    /// Growth rate of target `i` on resample interval `k`.
    pub fn rate(&self, config: &MissionConfig, i: usize, k: u64) -> f64 {
        match self {
            UncertaintyRate::Deterministic => config.targets()[i].growth_rate,
            UncertaintyRate::PiecewiseRandom(m) => m.draw(i, k),
        }
    }

    /// Length of the resample interval, if any.
    pub fn interval(&self) -> Option<f64> {
        match self {
            UncertaintyRate::Deterministic => None,
            UncertaintyRate::PiecewiseRandom(m) => Some(m.interval()),
        }
    }
}

/// Detection probability of a sensor at `s` with range `r` for a point at `x`.
pub fn sensing_probability(x: f64, s: f64, r: f64) -> Result<f64> {
    finite(x, "x")?;
    finite(s, "s")?;
    finite(r, "r")?;
    if r <= 0.0 {
        return Err(Error::Domain("sensing range must be positive".into()));
    }
    Ok((1.0 - (s - x).abs() / r).max(0.0))
}

/// Probability that at least one sensor detects the target.
pub fn joint_detection(probs: &[f64]) -> Result<f64> {
    let mut miss = 1.0;
    for &p in probs {
        finite(p, "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        miss *= 1.0 - p;
    }
    Ok(1.0 - miss)
}

/// Right-hand side of the uncertainty dynamics.
pub fn uncertainty_rate(r: f64, a: f64, b: f64, p: f64) -> Result<f64> {
    finite(r, "R")?;
    finite(a, "A")?;
    finite(b, "B")?;
    finite(p, "P")?;
    if r < 0.0 {
        return Err(Error::Domain("uncertainty cannot be negative".into()));
    }
    if r == 0.0 && a <= b * p {
        Ok(0.0)
    } else {
        Ok(a - b * p)
    }
}

/// Targets farther than twice the largest sensing range from every other target.
/// Indices are zero-based.
pub fn isolated_targets(config: &MissionConfig) -> BTreeSet<usize> {
    let r = config.r_max();
    let xs: Vec<f64> = config.targets().iter().map(|t| t.position).collect();
    (0..xs.len())
        .filter(|&i| xs.iter().enumerate().all(|(j, &x)| j == i || (xs[i] - x).abs() > 2.0 * r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(xs: &[f64], r: f64) -> MissionConfig {
        let targets = xs.iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
        MissionConfig::new(20.0, targets, vec![AgentSpec::new(0.0, r)], 100.0, false).unwrap()
    }

    #[test]
    fn sensing_examples() {
        assert_eq!(sensing_probability(5.0, 5.0, 2.0).unwrap(), 1.0);
        assert_eq!(sensing_probability(8.0, 5.0, 2.0).unwrap(), 0.0);
        assert_eq!(sensing_probability(6.0, 5.0, 2.0).unwrap(), 0.5);
        assert!(sensing_probability(f64::NAN, 5.0, 2.0).is_err());
        assert!(sensing_probability(1.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn joint_examples() {
        assert_eq!(joint_detection(&[0.5]).unwrap(), 0.5);
        assert_eq!(joint_detection(&[0.5, 0.5]).unwrap(), 0.75);
        assert_eq!(joint_detection(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(joint_detection(&[0.3, 1.0]).unwrap(), 1.0);
        assert!(joint_detection(&[1.5]).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(uncertainty_rate(0.0, 1.0, 5.0, 0.5).unwrap(), 0.0);
        assert_eq!(uncertainty_rate(1.0, 1.0, 5.0, 0.0).unwrap(), 1.0);
        assert_eq!(uncertainty_rate(1.0, 1.0, 5.0, 1.0).unwrap(), -4.0);
        assert_eq!(uncertainty_rate(0.0, 1.0, 5.0, 0.1).unwrap(), 0.5);
        assert!(uncertainty_rate(-0.1, 1.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn isolation_examples() {
        assert_eq!(isolated_targets(&cfg(&[5.0, 10.0, 15.0], 2.0)), BTreeSet::from([0, 1, 2]));
        assert!(isolated_targets(&cfg(&[5.0, 7.0, 9.0, 13.0, 15.0], 2.0)).is_empty());
        assert_eq!(isolated_targets(&cfg(&[5.0, 7.0, 15.0], 2.0)), BTreeSet::from([2]));
    }

    #[test]
    fn isolation_uses_largest_range() {
        let targets = vec![Target::new(5.0, 1.0, 5.0, 1.0), Target::new(10.0, 1.0, 5.0, 1.0), Target::new(15.0, 1.0, 5.0, 1.0)];
        let agents = vec![AgentSpec::new(0.0, 1.0), AgentSpec::new(0.0, 3.0)];
        let c = MissionConfig::new(20.0, targets, agents, 10.0, false).unwrap();
        assert!(isolated_targets(&c).is_empty());
        assert_eq!(c.r_min(), 1.0);
        assert_eq!(c.feasible_bounds(), (2.0, 18.0));
    }

    #[test]
    fn validation() {
        let t = |x| Target::new(x, 1.0, 5.0, 1.0);
        let a = AgentSpec::new(0.0, 2.0);
        // M <= N
        assert!(MissionConfig::new(20.0, vec![t(5.0)], vec![a.clone()], 10.0, false).is_err());
        assert!(MissionConfig::new(20.0, vec![t(5.0), t(6.0)], vec![a.clone(), a.clone()], 10.0, false).is_err());
        // ordering
        assert!(MissionConfig::new(20.0, vec![t(6.0), t(5.0)], vec![a.clone()], 10.0, false).is_err());
        assert!(MissionConfig::new(20.0, vec![t(5.0), t(20.0)], vec![a.clone()], 10.0, false).is_err());
        // rates
        let mut bad = t(5.0);
        bad.growth_rate = 6.0;
        assert!(MissionConfig::new(20.0, vec![bad, t(7.0)], vec![a.clone()], 10.0, false).is_err());
        // no-cross start order
        let agents = vec![AgentSpec::new(3.0, 2.0), AgentSpec::new(1.0, 2.0)];
        let ts = vec![t(5.0), t(7.0), t(9.0)];
        assert!(MissionConfig::new(20.0, ts.clone(), agents.clone(), 10.0, true).is_err());
        assert!(MissionConfig::new(20.0, ts, agents, 10.0, false).is_ok());
        assert!(MissionConfig::new(20.0, vec![t(5.0), t(7.0)], vec![AgentSpec::new(0.0, -1.0)], 10.0, false).is_err());
        assert!(MissionConfig::new(20.0, vec![t(5.0), t(7.0)], vec![a], f64::NAN, false).is_err());
    }

    proptest! {
        #[test]
        fn sensing_lipschitz(x1 in -10.0..30.0f64, x2 in -10.0..30.0f64, s in 0.0..20.0f64, r in 0.1..5.0f64) {
            let d = (sensing_probability(x1, s, r).unwrap() - sensing_probability(x2, s, r).unwrap()).abs();
            prop_assert!(d <= (x1 - x2).abs() / r + 1e-12);
        }

        #[test]
        fn joint_symmetric_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64, bump in 0.0..1.0f64) {
            let p = joint_detection(&[a, b, c]).unwrap();
            let q = joint_detection(&[c, a, b]).unwrap();
            prop_assert!((p - q).abs() < 1e-15);
            let a2 = (a + bump).min(1.0);
            prop_assert!(joint_detection(&[a2, b, c]).unwrap() >= p - 1e-15);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
