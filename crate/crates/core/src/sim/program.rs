use serde::Serialize;

use crate::error::Result;
use crate::model::MissionConfig;
use crate::sim::params::TrajectoryParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Travel,
    Dwell,
}

/// One constant-control piece of an agent's plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phase {
    pub kind: PhaseKind,
    /// Zero-based switching point this phase moves to or dwells at.
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub from: f64,
    pub to: f64,
    /// Control value: -1, 0 or +1.
    pub dir: i8,
    /// Whether this is a dwell with a dwell-time parameter behind it.
    pub has_dwell_param: bool,
    /// The horizon cut this phase short.
    pub truncated: bool,
}

impl Phase {
    pub fn position_at(&self, t: f64) -> f64 {
        match self.kind {
            PhaseKind::Dwell => self.from,
            PhaseKind::Travel => self.from + self.dir as f64 * (t - self.start),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentProgram {
    pub initial_position: f64,
    pub phases: Vec<Phase>,
}

impl AgentProgram {
    /// Index of the phase active at `t` (the last one starting at or before `t`
    /// with positive length, or the final phase).
    pub fn phase_at(&self, t: f64) -> usize {
        let mut idx = 0;
        for (k, p) in self.phases.iter().enumerate() {
            if p.start <= t && (t < p.end || k + 1 == self.phases.len()) {
                idx = k;
                if t < p.end {
                    break;
                }
            }
        }
        idx
    }

    pub fn position_at(&self, t: f64) -> f64 {
        if self.phases.is_empty() {
            return self.initial_position;
        }
        self.phases[self.phase_at(t)].position_at(t)
    }

    pub fn control_at(&self, t: f64) -> i8 {
        if self.phases.is_empty() {
            return 0;
        }
        self.phases[self.phase_at(t)].dir
    }
}

/// Per-agent sequence of travel and dwell phases covering `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlProgram {
    pub horizon: f64,
    pub agents: Vec<AgentProgram>,
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Expands switching points and dwell times into explicit phases. Each agent
/// travels at unit speed to its next switching point, dwells there, and so on.
/// Missing dwell times count as zero. After the final switching point the agent
/// stays put until the horizon; anything past the horizon is cut off.
pub fn compile_program(params: &TrajectoryParams, config: &MissionConfig) -> Result<ControlProgram> {
    params.validate(config)?;
    let horizon = config.horizon();
    let agents = params
        .agents
        .iter()
        .zip(config.agents())
        .map(|(p, spec)| {
            let mut phases = Vec::with_capacity(2 * p.theta.len());
            let mut t = 0.0;
            let mut pos = spec.initial_position;
            let last = p.theta.len().saturating_sub(1);
            for (l, &th) in p.theta.iter().enumerate() {
                let dir = sgn(th - pos);
                let end = t + (th - pos).abs();
                if end >= horizon && end > t {
                    let to = pos + dir as f64 * (horizon - t);
                    phases.push(Phase {
                        kind: PhaseKind::Travel,
                        index: l,
                        start: t,
                        end: horizon,
                        from: pos,
                        to,
                        dir,
                        has_dwell_param: false,
                        truncated: end > horizon,
                    });
                    break;
                }
                phases.push(Phase {
                    kind: PhaseKind::Travel,
                    index: l,
                    start: t,
                    end,
                    from: pos,
                    to: th,
                    dir,
                    has_dwell_param: false,
                    truncated: false,
                });
                t = end;
                pos = th;
                let w = p.omega.get(l).copied().unwrap_or(0.0);
                let (dwell_end, truncated) = if l == last {
                    (horizon, false)
                } else if t + w >= horizon {
                    (horizon, t + w > horizon)
                } else {
                    (t + w, false)
                };
                phases.push(Phase {
                    kind: PhaseKind::Dwell,
                    index: l,
                    start: t,
                    end: dwell_end,
                    from: th,
                    to: th,
                    dir: 0,
                    has_dwell_param: l < p.omega.len(),
                    truncated,
                });
                t = dwell_end;
                if t >= horizon {
                    break;
                }
            }
            if p.theta.is_empty() {
                phases.push(Phase {
                    kind: PhaseKind::Dwell,
                    index: 0,
                    start: 0.0,
                    end: horizon,
                    from: pos,
                    to: pos,
                    dir: 0,
                    has_dwell_param: false,
                    truncated: false,
                });
            }
            AgentProgram { initial_position: spec.initial_position, phases }
        })
        .collect();
    Ok(ControlProgram { horizon, agents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentSpec, Target};
    use crate::sim::params::AgentParams;

    fn cfg(s0: f64, t: f64) -> MissionConfig {
        let targets = [5.0, 10.0, 15.0].iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
        MissionConfig::new(20.0, targets, vec![AgentSpec::new(s0, 2.0)], t, false).unwrap()
    }

    fn one(theta: &[f64], omega: &[f64]) -> TrajectoryParams {
        TrajectoryParams { agents: vec![AgentParams { theta: theta.to_vec(), omega: omega.to_vec() }] }
    }

    #[test]
    fn single_arrival() {
        let p = compile_program(&one(&[15.0], &[]), &cfg(0.0, 100.0)).unwrap();
        let ph = &p.agents[0].phases;
        assert_eq!(ph[0].end, 15.0);
        assert_eq!(ph[1].kind, PhaseKind::Dwell);
        assert_eq!(ph[1].end, 100.0);
    }

    #[test]
    fn dwell_then_move() {
        let p = compile_program(&one(&[5.0, 10.0], &[3.0]), &cfg(0.0, 100.0)).unwrap();
        let ph = &p.agents[0].phases;
        assert_eq!((ph[1].start, ph[1].end), (5.0, 8.0));
        assert_eq!(ph[2].end, 13.0);
        assert_eq!(ph[2].dir, 1);
    }

    #[test]
    fn zero_length_travel() {
        let p = compile_program(&one(&[5.0, 12.0], &[2.0]), &cfg(5.0, 100.0)).unwrap();
        let ph = &p.agents[0].phases;
        assert_eq!((ph[0].start, ph[0].end, ph[0].dir), (0.0, 0.0, 0));
        assert_eq!((ph[1].start, ph[1].end), (0.0, 2.0));
    }

    #[test]
    fn horizon_cuts_travel() {
        let p = compile_program(&one(&[15.0, 3.0], &[1.0]), &cfg(0.0, 20.0)).unwrap();
        let ph = &p.agents[0].phases;
        assert_eq!(ph.len(), 3);
        assert!(ph[2].truncated);
        assert_eq!(ph[2].end, 20.0);
        assert_eq!(ph[2].to, 11.0);
        assert_eq!(p.agents[0].position_at(20.0), 11.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(compile_program(&one(&[18.0], &[]), &cfg(0.0, 10.0)).is_err());
        assert!(compile_program(&one(&[5.0], &[-1.0]), &cfg(0.0, 10.0)).is_err());
    }
}
