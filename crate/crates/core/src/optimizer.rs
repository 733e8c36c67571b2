//! Projected gradient descent over switching points and dwell times.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MissionConfig;
use crate::objective::Objective;
use crate::sim::{default_gamma, simulate_params, AgentParams, SimTrace, TrajectoryParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentConfig {
    pub max_iterations: usize,
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo_c: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Stop when the projected gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative cost change stays below this for `patience` iterations.
    pub cost_tol: f64,
    pub patience: usize,
    /// Extra randomly initialized starts; the best final cost wins.
    pub restarts: usize,
    pub restart_seed: u64,
    /// Switching points per agent; default derived from the horizon.
    pub gamma: Option<usize>,
    /// Per-coordinate step scaling that damps components whose gradient
    /// keeps flipping sign (kinks of the cost).
    pub adaptive_scaling: bool,
    /// Keep every iterate's parameters in the report.
    pub record_iterates: bool,
    /// Fresh realizations used to score the final iterate of a random run.
    pub scoring_samples: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iterations: 1000,
            initial_step: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
            grad_tol: 1e-8,
            cost_tol: 1e-9,
            patience: 25,
            restarts: 0,
            restart_seed: 0,
            gamma: None,
            adaptive_scaling: true,
            record_iterates: true,
            scoring_samples: 20,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config("descent.shrink must lie in (0, 1)".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config("descent.armijo_c must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config("descent.initial_step must be positive".into()));
        }
        if !(self.grad_tol > 0.0 && self.cost_tol > 0.0) {
            return Err(Error::Config("descent tolerances must be positive".into()));
        }
        if self.gamma == Some(0) {
            return Err(Error::Config("descent.gamma must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    GradientTolerance,
    Stalled,
    IterationLimit,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective used by the line search at this iteration.
    pub cost: f64,
    pub j1: f64,
    pub j2: f64,
    pub grad_norm: f64,
    pub step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<TrajectoryParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentReport {
    pub history: Vec<IterationRecord>,
    pub final_params: TrajectoryParams,
    /// Mean uncertainty of the final iterate (mean over scoring draws for random runs).
    pub final_cost: f64,
    pub final_cost_std: f64,
    pub status: Status,
    pub iterations: usize,
    pub start: usize,
    pub wall_clock_seconds: f64,
    pub seeds: Vec<u64>,
    /// Trace of the final iterate on the nominal mission.
    #[serde(skip)]
    pub final_trace: Option<SimTrace>,
}

/// Switching-point interval after shrinking by `margin`.
pub fn bounds(config: &MissionConfig, margin: f64) -> (f64, f64) {
    let (a, b) = config.feasible_bounds();
    if b - a > 2.0 * margin {
        (a + margin, b - margin)
    } else {
        let m = 0.5 * (a + b);
        (m, m)
    }
}

/// Clamps switching points into `[lo, hi]` and dwell times to be nonnegative.
pub fn project(params: &TrajectoryParams, lo: f64, hi: f64) -> TrajectoryParams {
    TrajectoryParams {
        agents: params
            .agents
            .iter()
            .map(|a| AgentParams {
                theta: a.theta.iter().map(|&t| t.clamp(lo, hi)).collect(),
                omega: a.omega.iter().map(|&w| w.max(0.0)).collect(),
            })
            .collect(),
    }
}

/// First and last position and size of each agent's target group.
fn target_groups(config: &MissionConfig) -> Vec<(f64, f64, usize)> {
    let xs = config.targets();
    crate::model::target_groups(config)
        .into_iter()
        .map(|g| (xs[g.start].position, xs[g.end - 1].position, g.len()))
        .collect()
}

/// Default start with zero dwell. Each agent gets a group of targets (see
/// [`crate::model::target_groups`]) and bounces across evenly spaced stops between the first
/// and last target of its group, as many stops as targets, starting from the
/// end nearer its initial position.
pub fn default_init(config: &MissionConfig, gamma: usize) -> TrajectoryParams {
    TrajectoryParams {
        agents: target_groups(config)
            .into_iter()
            .enumerate()
            .map(|(j, (lo, hi, k))| {
                let mut stops: Vec<f64> = (0..k)
                    .map(|q| if k == 1 { lo } else { lo + (hi - lo) * q as f64 / (k - 1) as f64 })
                    .collect();
                let s0 = config.agents()[j].initial_position;
                if (hi - s0).abs() < (lo - s0).abs() {
                    stops.reverse();
                }
                // Walk 0, 1, .., k-1, k-2, .., 1, 0, 1, ..
                let period = if k == 1 { 1 } else { 2 * (k - 1) };
                let theta = (0..gamma)
                    .map(|l| {
                        let r = l % period;
                        stops[if r < k { r } else { period - r }]
                    })
                    .collect();
                AgentParams { theta, omega: vec![0.0; gamma] }
            })
            .collect(),
    }
}

/// Random start: switching points drawn inside each agent's target group,
/// dwell times in `[0, 1)`.
fn random_init(config: &MissionConfig, gamma: usize, lo: f64, hi: f64, seed: u64) -> TrajectoryParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TrajectoryParams {
        agents: target_groups(config)
            .into_iter()
            .map(|(a, b, _)| {
                let (a, b) = (a.clamp(lo, hi), b.clamp(lo, hi));
                AgentParams {
                    theta: (0..gamma).map(|_| if b > a { rng.gen_range(a..=b) } else { a }).collect(),
                    omega: (0..gamma).map(|_| rng.gen_range(0.0..1.0)).collect(),
                }
            })
            .collect(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs projected descent from `init`, plus `descent.restarts` random starts.
pub fn optimize(init: &TrajectoryParams, objective: &Objective, descent: &DescentConfig) -> Result<DescentReport> {
    descent.validate()?;
    let config = objective.config();
    let margin = objective.random().bound_margin();
    let (lo, hi) = bounds(config, margin);
    init.validate(config)?;
    let gamma = init.agents.iter().map(|a| a.theta.len()).max().unwrap_or(1).max(1);
    let mut starts = vec![init.clone()];
    for r in 0..descent.restarts {
        starts.push(random_init(config, gamma, lo, hi, descent.restart_seed.wrapping_add(r as u64)));
    }
    let reports: Vec<DescentReport> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rep = descend(s, objective, descent, lo, hi)?;
            rep.start = i;
            Ok(rep)
        })
        .collect::<Result<_>>()?;
    let best = reports
        .into_iter()
        .min_by(|a, b| a.final_cost.total_cmp(&b.final_cost))
        .expect("at least one start");
    Ok(best)
}

/// Same as [`optimize`] with the default start and switching-point count.
pub fn optimize_default(objective: &Objective, descent: &DescentConfig) -> Result<DescentReport> {
    let gamma = descent.gamma.unwrap_or_else(|| default_gamma(objective.config()));
    optimize(&default_init(objective.config(), gamma), objective, descent)
}

fn descend(init: &TrajectoryParams, objective: &Objective, descent: &DescentConfig, lo: f64, hi: f64) -> Result<DescentReport> {
    let clock = Instant::now();
    let layout = init.layout();
    let mut x = project(init, lo, hi).to_vec();
    let mut history = Vec::new();
    let mut seeds = Vec::new();
    let mut status = Status::IterationLimit;
    let mut calm = 0;
    let mut prev_cost = f64::NAN;
    let mut scale = vec![1.0f64; x.len()];
    let mut last_g: Option<Vec<f64>> = None;
    let mut k = 0;
    while k < descent.max_iterations {
        let reals = objective.realizations(k)?;
        if objective.random().is_random() {
            seeds.extend(reals.iter().map(|r| r.seed));
        }
        let p = TrajectoryParams::from_vec(&layout, &x);
        let ev = objective.evaluate(&p, &reals, k, true)?;
        if !ev.combined.is_finite() {
            return Err(Error::Constraint(format!("iterate {k} violates the no-cross constraint")));
        }
        let g = ev.gradient.expect("gradient requested");
        // Projected gradient: the step actually available at the bounds.
        let pg: Vec<f64> = {
            let probe = project(&TrajectoryParams::from_vec(&layout, &x.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>()), lo, hi).to_vec();
            x.iter().zip(&probe).map(|(a, b)| a - b).collect()
        };
        let gn = norm(&pg);
        let mut rec = IterationRecord {
            iteration: k,
            cost: ev.combined,
            j1: ev.j1,
            j2: ev.j2,
            grad_norm: gn,
            step: 0.0,
            params: descent.record_iterates.then(|| p.clone()),
        };
        if gn < descent.grad_tol {
            history.push(rec);
            status = Status::GradientTolerance;
            break;
        }
        if descent.adaptive_scaling {
            if let Some(lg) = &last_g {
                for i in 0..scale.len() {
                    let prod = lg[i] * g[i];
                    if prod < 0.0 {
                        scale[i] = (scale[i] * 0.5).max(1e-9);
                    } else if prod > 0.0 {
                        scale[i] = (scale[i] * 1.2).min(1.0);
                    }
                }
            }
        }
        let mut eta = descent.initial_step;
        let mut accepted = None;
        for _ in 0..descent.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&g).zip(&scale).map(|((a, b), d)| a - eta * d * b).collect();
            let trial = project(&TrajectoryParams::from_vec(&layout, &trial), lo, hi);
            let tv = trial.to_vec();
            // Directional change g.(x+ - x), negative for any nonzero projected step.
            let slope: f64 = x.iter().zip(&tv).zip(&g).map(|((a, b), gi)| gi * (b - a)).sum();
            if slope >= 0.0 {
                break;
            }
            let te = objective.evaluate(&trial, &reals, k, false)?;
            if te.combined <= ev.combined + descent.armijo_c * slope {
                accepted = Some((tv, te.combined));
                break;
            }
            eta *= descent.shrink;
        }
        let Some((nx, _)) = accepted else {
            history.push(rec);
            status = Status::LineSearchFailed;
            break;
        };
        rec.step = eta;
        history.push(rec);
        x = nx;
        last_g = Some(g);
        let change = (prev_cost - ev.j1).abs() / ev.j1.abs().max(1e-12);
        calm = if change < descent.cost_tol { calm + 1 } else { 0 };
        prev_cost = ev.j1;
        k += 1;
        if calm >= descent.patience {
            status = Status::Stalled;
            break;
        }
    }
    let final_params = TrajectoryParams::from_vec(&layout, &x);
    let (final_cost, final_cost_std) = objective.score(&final_params, descent.scoring_samples.max(1))?;
    let final_trace = simulate_params(&final_params, objective.config(), &crate::model::UncertaintyRate::Deterministic).ok();
    Ok(DescentReport {
        iterations: history.len(),
        history,
        final_params,
        final_cost,
        final_cost_std,
        status,
        start: 0,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        seeds,
        final_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentSpec, Target};
    use crate::potential::PotentialConfig;
    use crate::stochastic::RandomModel;

    fn cfg() -> MissionConfig {
        let targets = [5.0, 10.0, 15.0].iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
        MissionConfig::new(20.0, targets, vec![AgentSpec::new(0.0, 2.0)], 40.0, false).unwrap()
    }

    #[test]
    fn project_examples() {
        let p = TrajectoryParams { agents: vec![AgentParams { theta: vec![18.0, 2.0, 9.0], omega: vec![-0.3, 1.0] }] };
        let q = project(&p, 3.0, 17.0);
        assert_eq!(q.agents[0].theta, vec![17.0, 3.0, 9.0]);
        assert_eq!(q.agents[0].omega, vec![0.0, 1.0]);
        assert_eq!(project(&q, 3.0, 17.0), q);
    }

    #[test]
    fn default_init_alternates_inside_span() {
        let p = default_init(&cfg(), 6);
        assert_eq!(p.agents[0].theta, vec![5.0, 10.0, 15.0, 10.0, 5.0, 10.0]);
        assert!(p.validate(&cfg()).is_ok());
    }

    #[test]
    fn descent_is_monotone() {
        let obj = Objective::new(cfg(), PotentialConfig::default(), RandomModel::default()).unwrap();
        let d = DescentConfig { max_iterations: 40, ..Default::default() };
        let rep = optimize_default(&obj, &d).unwrap();
        for w in rep.history.windows(2) {
            assert!(w[1].cost <= w[0].cost + 1e-12);
        }
        assert!(rep.final_cost < rep.history[0].cost);
    }
}
