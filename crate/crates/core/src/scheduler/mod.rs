//! Discrete visit scheduling: enumerate target-visit sequences under the
//! horizon budget, tune dwell times by one-dimensional searches and keep the
//! cheapest schedule. Serves as a cross-check for the gradient optimizer.

mod dwell;
pub mod enumerate;
pub mod mip;
mod periodic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{target_groups, MissionConfig, UncertaintyRate};
use crate::sim::{params_cost, AgentParams, TrajectoryParams};

pub use dwell::optimize_dwells;
pub use enumerate::{closed_walks, count_agent, default_max_steps, enumerate_agent, enumerate_sequences};
pub use periodic::extend_periodic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum JointSearch {
    /// Every combination of per-agent candidates.
    #[default]
    Exhaustive,
    /// Agents restricted to their own target group, improved one at a time.
    Partitioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleOptions {
    /// Planning window. The schedule is tiled to the full horizon when shorter.
    pub window: Option<f64>,
    pub max_steps: Option<usize>,
    pub cap: usize,
    pub joint: JointSearch,
    /// Search over repeating cycles instead of finite sequences.
    pub periodic: bool,
    pub max_cycle_len: usize,
    /// Best-response rounds for partitioned search.
    pub rounds: usize,
    /// Coordinate sweeps over the dwell times.
    pub sweeps: usize,
    /// Golden-section tolerance as a fraction of the window.
    pub golden_tol: f64,
    /// How far the end of a window may be from its start and still tile.
    pub periodic_tolerance: f64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            window: None,
            max_steps: None,
            cap: 1_000_000,
            joint: JointSearch::Exhaustive,
            periodic: false,
            max_cycle_len: 6,
            rounds: 2,
            sweeps: 3,
            golden_tol: 1e-4,
            periodic_tolerance: 0.5,
        }
    }
}

impl ScheduleOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config("schedule.window must be positive".into()));
            }
        }
        if self.cap == 0 || self.sweeps == 0 || self.max_cycle_len == 0 {
            return Err(Error::Config("schedule.cap, sweeps and max_cycle_len must be positive".into()));
        }
        if !(self.golden_tol > 0.0 && self.golden_tol < 1.0) {
            return Err(Error::Config("schedule.golden_tol must lie in (0, 1)".into()));
        }
        if !(self.periodic_tolerance >= 0.0) {
            return Err(Error::Config("schedule.periodic_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// A repeating visit pattern with one dwell time per position in the cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePattern {
    pub targets: Vec<usize>,
    pub dwell: Vec<f64>,
}

/// What an agent is asked to do before it is laid out in time.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum AgentPlan {
    /// Visit in order. `dwell` has one entry per visit except the last, which
    /// lasts until the horizon.
    Sequence { targets: Vec<usize>, dwell: Vec<f64> },
    /// Head to the first target of the cycle and repeat it until the horizon.
    Cycle(CyclePattern),
}

impl AgentPlan {
    pub(crate) fn dwell(&self) -> &[f64] {
        match self {
            AgentPlan::Sequence { dwell, .. } => dwell,
            AgentPlan::Cycle(c) => &c.dwell,
        }
    }

    pub(crate) fn dwell_mut(&mut self) -> &mut Vec<f64> {
        match self {
            AgentPlan::Sequence { dwell, .. } => dwell,
            AgentPlan::Cycle(c) => &mut c.dwell,
        }
    }
}

/// One agent's visits laid out in time.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSchedule {
    /// Target indices (zero-based).
    pub sequence: Vec<usize>,
    pub arrival: Vec<f64>,
    pub travel: Vec<f64>,
    pub dwell: Vec<f64>,
    pub cycle: Option<CyclePattern>,
}

impl AgentSchedule {
    /// Position when the last visit ends (the start when there are none).
    pub fn final_position(&self, config: &MissionConfig, j: usize) -> f64 {
        match self.sequence.last() {
            Some(&i) => config.targets()[i].position,
            None => config.agents()[j].initial_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitSchedule {
    pub agents: Vec<AgentSchedule>,
    pub horizon: f64,
    /// Mean uncertainty of the induced trajectory over the horizon.
    pub cost: f64,
}

impl VisitSchedule {
    /// Switching points at the visited targets, dwell times for all but the
    /// final visit of each agent.
    pub fn to_params(&self, config: &MissionConfig) -> TrajectoryParams {
        let xs: Vec<f64> = config.targets().iter().map(|t| t.position).collect();
        TrajectoryParams {
            agents: self
                .agents
                .iter()
                .map(|a| AgentParams {
                    theta: a.sequence.iter().map(|&i| xs[i]).collect(),
                    omega: a.dwell[..a.dwell.len().saturating_sub(1)].to_vec(),
                })
                .collect(),
        }
    }

    /// JSON export with one-based target indices.
    pub fn to_json(&self) -> serde_json::Value {
        let agents: Vec<_> = self
            .agents
            .iter()
            .map(|a| {
                let mut v = json!({
                    "sequence": a.sequence.iter().map(|i| i + 1).collect::<Vec<_>>(),
                    "t": a.arrival,
                    "travel": a.travel,
                    "dwell": a.dwell,
                });
                if let Some(c) = &a.cycle {
                    v["cycle"] = json!({
                        "sequence": c.targets.iter().map(|i| i + 1).collect::<Vec<_>>(),
                        "dwell": c.dwell,
                    });
                }
                v
            })
            .collect();
        json!({ "agents": agents, "cost": self.cost, "horizon": self.horizon })
    }
}

/// Lays a plan out in time. An agent only sets off for a target it can reach
/// before the horizon; otherwise it stays where it is.
pub(crate) fn materialize(plan: &AgentPlan, config: &MissionConfig, j: usize, horizon: f64) -> AgentSchedule {
    let xs: Vec<f64> = config.targets().iter().map(|t| t.position).collect();
    let mut out = AgentSchedule { sequence: vec![], arrival: vec![], travel: vec![], dwell: vec![], cycle: None };
    let mut pos = config.agents()[j].initial_position;
    let mut t = 0.0;
    let (order, dwell, cyclic): (&[usize], &[f64], bool) = match plan {
        AgentPlan::Sequence { targets, dwell } => (targets, dwell, false),
        AgentPlan::Cycle(c) => {
            out.cycle = Some(c.clone());
            (&c.targets, &c.dwell, true)
        }
    };
    if order.is_empty() {
        return out;
    }
    let limit = if cyclic && order.len() > 1 { usize::MAX } else { order.len() };
    let mut k = 0;
    while k < limit {
        let i = order[k % order.len()];
        let travel = (xs[i] - pos).abs();
        if t + travel >= horizon {
            break;
        }
        t += travel;
        out.sequence.push(i);
        out.arrival.push(t);
        out.travel.push(travel);
        let last = k + 1 == limit;
        let d = if last { horizon - t } else { dwell.get(k % order.len()).copied().unwrap_or(0.0).min(horizon - t) };
        out.dwell.push(d);
        t += d;
        pos = xs[i];
        if t >= horizon {
            break;
        }
        k += 1;
    }
    // The final visit lasts until the horizon.
    if let (Some(d), Some(a)) = (out.dwell.last_mut(), out.arrival.last()) {
        *d = horizon - a;
    }
    out
}

/// Mean uncertainty of a schedule, infinite when it makes agents cross under
/// the ordering constraint.
pub(crate) fn schedule_cost(agents: &[AgentSchedule], config: &MissionConfig) -> Result<f64> {
    let s = VisitSchedule { agents: agents.to_vec(), horizon: config.horizon(), cost: 0.0 };
    let (c, ok) = params_cost(&s.to_params(config), config, &UncertaintyRate::Deterministic)?;
    Ok(if config.no_cross() && !ok { f64::INFINITY } else { c })
}

pub(crate) fn plans_cost(plans: &[AgentPlan], config: &MissionConfig) -> Result<f64> {
    let agents: Vec<_> = plans.iter().enumerate().map(|(j, p)| materialize(p, config, j, config.horizon())).collect();
    schedule_cost(&agents, config)
}

pub(crate) fn build(plans: &[AgentPlan], config: &MissionConfig) -> Result<VisitSchedule> {
    let agents: Vec<_> = plans.iter().enumerate().map(|(j, p)| materialize(p, config, j, config.horizon())).collect();
    let cost = schedule_cost(&agents, config)?;
    Ok(VisitSchedule { agents, horizon: config.horizon(), cost })
}

/// Candidate plans for one agent, restricted to `allowed` targets.
fn candidates(config: &MissionConfig, j: usize, allowed: &[usize], opts: &ScheduleOptions) -> Result<Vec<AgentPlan>> {
    let horizon = config.horizon();
    if opts.periodic {
        let walks = closed_walks(allowed, opts.max_cycle_len);
        if walks.len() > opts.cap {
            return Err(Error::EnumerationCap { estimate: walks.len() as f64, cap: opts.cap });
        }
        let start = config.agents()[j].initial_position;
        let xs = config.targets();
        let init = (0.1 * horizon).min(1.0);
        let mut out: Vec<_> = walks
            .into_iter()
            .filter(|c| (xs[c[0]].position - start).abs() <= horizon)
            .map(|c| {
                let dwell = vec![init; c.len()];
                AgentPlan::Cycle(CyclePattern { targets: c, dwell })
            })
            .collect();
        if out.is_empty() {
            out.push(AgentPlan::Sequence { targets: vec![], dwell: vec![] });
        }
        Ok(out)
    } else {
        let steps = opts.max_steps.unwrap_or_else(|| default_max_steps(config, horizon));
        let seqs = enumerate_agent(config, config.agents()[j].initial_position, horizon, steps, allowed, opts.cap)?;
        Ok(seqs.into_iter().map(|s| AgentPlan::Sequence { dwell: vec![0.0; s.len().saturating_sub(1)], targets: s }).collect())
    }
}

/// No-cross pruning: agent `j` may not go further right than agent `j + 1`.
fn ordered(plans: &[&AgentPlan]) -> bool {
    let right = |p: &AgentPlan| -> Option<usize> {
        match p {
            AgentPlan::Sequence { targets, .. } => targets.iter().copied().max(),
            AgentPlan::Cycle(c) => c.targets.iter().copied().max(),
        }
    };
    plans.windows(2).all(|w| match (right(w[0]), right(w[1])) {
        (Some(a), Some(b)) => a <= b,
        _ => true,
    })
}

/// Best schedule over the window (`opts.window`, or the full horizon).
pub fn solve(config: &MissionConfig, opts: &ScheduleOptions) -> Result<VisitSchedule> {
    opts.validate()?;
    let horizon = opts.window.map_or(config.horizon(), |w| w.min(config.horizon()));
    let cfg = config.with_horizon(horizon)?;
    let n = cfg.num_agents();
    let all: Vec<usize> = (0..cfg.num_targets()).collect();
    let plans = if n == 1 || opts.joint == JointSearch::Exhaustive {
        let lists: Vec<Vec<AgentPlan>> = (0..n).map(|j| candidates(&cfg, j, &all, opts)).collect::<Result<_>>()?;
        let product: f64 = lists.iter().map(|l| l.len() as f64).product();
        if product > opts.cap as f64 {
            return Err(Error::EnumerationCap { estimate: product, cap: opts.cap });
        }
        exhaustive(&cfg, &lists, opts)?
    } else {
        partitioned(&cfg, opts)?
    };
    build(&plans, &cfg)
}

/// Solves over the window and, when the window is shorter than the horizon,
/// tiles the result to the full horizon.
pub fn solve_extended(config: &MissionConfig, opts: &ScheduleOptions) -> Result<VisitSchedule> {
    let s = solve(config, opts)?;
    if s.horizon < config.horizon() {
        extend_periodic(config, &s, opts.periodic_tolerance)
    } else {
        Ok(s)
    }
}

fn exhaustive(cfg: &MissionConfig, lists: &[Vec<AgentPlan>], opts: &ScheduleOptions) -> Result<Vec<AgentPlan>> {
    let total: usize = lists.iter().map(|l| l.len()).product();
    let free = vec![true; lists.len()];
    let best = (0..total)
        .into_par_iter()
        .map(|idx| -> Result<Option<(f64, usize, Vec<AgentPlan>)>> {
            // Mixed-radix decoding keeps the product lazy.
            let mut rest = idx;
            let mut pick = Vec::with_capacity(lists.len());
            for l in lists.iter().rev() {
                pick.push(&l[rest % l.len()]);
                rest /= l.len();
            }
            pick.reverse();
            if cfg.no_cross() && !ordered(&pick) {
                return Ok(None);
            }
            let mut plans: Vec<AgentPlan> = pick.into_iter().cloned().collect();
            let c = optimize_plans(cfg, &mut plans, &free, opts)?;
            Ok(Some((c, idx, plans)))
        })
        .try_fold(
            || None,
            |acc: Option<(f64, usize, Vec<AgentPlan>)>, r| -> Result<_> { Ok(better(acc, r?)) },
        )
        .try_reduce(|| None, |a, b| Ok(better(a, b)))?;
    best.map(|b| b.2).ok_or_else(|| Error::Infeasible("no candidate schedule".into()))
}

/// Lower cost wins; ties go to the earlier candidate so results do not
/// depend on thread scheduling.
fn better<T>(a: Option<(f64, usize, T)>, b: Option<(f64, usize, T)>) -> Option<(f64, usize, T)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let a_wins = a.0 < b.0 || (a.0 == b.0 && a.1 < b.1) || b.0.is_nan();
            Some(if a_wins { a } else { b })
        }
    }
}

fn partitioned(cfg: &MissionConfig, opts: &ScheduleOptions) -> Result<Vec<AgentPlan>> {
    let groups = target_groups(cfg);
    let n = cfg.num_agents();
    let lists: Vec<Vec<AgentPlan>> =
        (0..n).map(|j| candidates(cfg, j, &groups[j].clone().collect::<Vec<_>>(), opts)).collect::<Result<_>>()?;
    let mut plans: Vec<AgentPlan> = vec![AgentPlan::Sequence { targets: vec![], dwell: vec![] }; n];
    for _ in 0..opts.rounds.max(1) {
        for j in 0..n {
            let mut free = vec![false; n];
            free[j] = true;
            let best = lists[j]
                .par_iter()
                .enumerate()
                .map(|(idx, cand)| -> Result<Option<(f64, usize, AgentPlan)>> {
                    let mut trial = plans.clone();
                    // Keep the current timing as a warm start for the incumbent route.
                    if !same_route(&trial[j], cand) {
                        trial[j] = cand.clone();
                    }
                    let c = optimize_plans(cfg, &mut trial, &free, opts)?;
                    Ok(Some((c, idx, trial.swap_remove(j))))
                })
                .try_fold(|| None, |acc, r| -> Result<_> { Ok(better(acc, r?)) })
                .try_reduce(|| None, |a, b| Ok(better(a, b)))?;
            if let Some((_, _, p)) = best {
                plans[j] = p;
            }
        }
    }
    let all = vec![true; n];
    optimize_plans(cfg, &mut plans, &all, opts)?;
    Ok(plans)
}

fn same_route(a: &AgentPlan, b: &AgentPlan) -> bool {
    match (a, b) {
        (AgentPlan::Sequence { targets: x, .. }, AgentPlan::Sequence { targets: y, .. }) => x == y,
        (AgentPlan::Cycle(x), AgentPlan::Cycle(y)) => x.targets == y.targets,
        _ => false,
    }
}

pub(crate) use dwell::optimize_plans;
