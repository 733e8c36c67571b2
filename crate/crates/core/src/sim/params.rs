use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MissionConfig;

/// Switching points and dwell times of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Decision variables for every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub agents: Vec<AgentParams>,
}

/// Where each agent's block of switching points and dwell times sits in the
/// flattened parameter vector. Agent `j` owns `theta` entries at
/// `offset[j]..offset[j] + gamma[j]` followed by its dwell entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub gamma: Vec<usize>,
    pub gamma_dwell: Vec<usize>,
    pub offset: Vec<usize>,
    pub len: usize,
}

impl ParamLayout {
    pub fn theta_index(&self, j: usize, l: usize) -> usize {
        self.offset[j] + l
    }
    pub fn omega_index(&self, j: usize, l: usize) -> usize {
        self.offset[j] + self.gamma[j] + l
    }
    pub fn agent_len(&self, j: usize) -> usize {
        self.gamma[j] + self.gamma_dwell[j]
    }
}

/// Number of switching points used when none is configured.
pub fn default_gamma(config: &MissionConfig) -> usize {
    let gap = config.min_target_gap();
    let g = (config.horizon() / gap).ceil();
    if g.is_finite() {
        (g as usize).clamp(1, 200)
    } else {
        1
    }
}

impl TrajectoryParams {
    pub fn layout(&self) -> ParamLayout {
        let mut offset = Vec::with_capacity(self.agents.len());
        let mut len = 0;
        for a in &self.agents {
            offset.push(len);
            len += a.theta.len() + a.omega.len();
        }
        ParamLayout {
            gamma: self.agents.iter().map(|a| a.theta.len()).collect(),
            gamma_dwell: self.agents.iter().map(|a| a.omega.len()).collect(),
            offset,
            len,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().len);
        for a in &self.agents {
            v.extend_from_slice(&a.theta);
            v.extend_from_slice(&a.omega);
        }
        v
    }

    /// Inverse of [`TrajectoryParams::to_vec`] for a given layout.
    pub fn from_vec(layout: &ParamLayout, v: &[f64]) -> Self {
        let agents = (0..layout.gamma.len())
            .map(|j| {
                let o = layout.offset[j];
                let g = layout.gamma[j];
                AgentParams {
                    theta: v[o..o + g].to_vec(),
                    omega: v[o + g..o + g + layout.gamma_dwell[j]].to_vec(),
                }
            })
            .collect();
        TrajectoryParams { agents }
    }

    /// Checks shape, finiteness, dwell signs and the switching-point interval.
    pub fn validate(&self, config: &MissionConfig) -> Result<()> {
        if self.agents.len() != config.num_agents() {
            return Err(Error::Params(format!(
                "{} agent parameter blocks for {} agents",
                self.agents.len(),
                config.num_agents()
            )));
        }
        let (a, b) = config.feasible_bounds();
        let slack = 1e-9 * (1.0 + b.abs());
        for (j, p) in self.agents.iter().enumerate() {
            if p.omega.len() > p.theta.len() {
                return Err(Error::Params(format!("agent {} has more dwell times than switching points", j + 1)));
            }
            for &th in &p.theta {
                if !th.is_finite() {
                    return Err(Error::NonFinite("switching point"));
                }
                if th < a - slack || th > b + slack {
                    return Err(Error::Params(format!(
                        "agent {} switching point {} outside [{}, {}]",
                        j + 1,
                        th,
                        a,
                        b
                    )));
                }
            }
            for &w in &p.omega {
                if !w.is_finite() {
                    return Err(Error::NonFinite("dwell time"));
                }
                if w < 0.0 {
                    return Err(Error::Params(format!("agent {} has a negative dwell time", j + 1)));
                }
            }
        }
        Ok(())
    }
}
