//! Dwell-time tuning for fixed visit orders.

use crate::error::{Error, Result};
use crate::model::MissionConfig;

use super::{build, plans_cost, AgentPlan, ScheduleOptions, VisitSchedule};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization on `[a, b]`.
fn golden<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Scalar search on `[lo, hi]`: a five-point scan picks the bracket, golden
/// section refines it. Never returns something worse than `cur`.
fn line_search<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, cur: (f64, f64), tol: f64) -> Result<(f64, f64)> {
    let mut best = cur;
    if hi - lo <= tol {
        return Ok(best);
    }
    let pts: Vec<f64> = (0..5).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect();
    let mut vals = Vec::with_capacity(5);
    for &x in &pts {
        vals.push(f(x)?);
    }
    let i = (0..5).fold(0, |m, k| if vals[k] < vals[m] { k } else { m });
    if vals[i] < best.1 {
        best = (pts[i], vals[i]);
    }
    let a = pts[i.saturating_sub(1)];
    let b = pts[(i + 1).min(4)];
    let g = golden(&mut f, a, b, tol)?;
    if g.1 < best.1 {
        best = g;
    }
    Ok(best)
}

fn slack(plan: &AgentPlan, config: &MissionConfig, j: usize) -> f64 {
    match plan {
        AgentPlan::Sequence { targets, .. } => {
            let xs = config.targets();
            let mut pos = config.agents()[j].initial_position;
            let mut used = 0.0;
            for &i in targets {
                used += (xs[i].position - pos).abs();
                pos = xs[i].position;
            }
            config.horizon() - used
        }
        AgentPlan::Cycle(_) => f64::INFINITY,
    }
}

/// Coordinate search over the dwell times of the agents marked `free`,
/// last dwell first. Sequence dwells share the agent's slack (the horizon
/// minus its travel). Returns the final cost.
pub(crate) fn optimize_plans(config: &MissionConfig, plans: &mut [AgentPlan], free: &[bool], opts: &ScheduleOptions) -> Result<f64> {
    let horizon = config.horizon();
    let tol = opts.golden_tol * horizon;
    let slacks: Vec<f64> = plans.iter().enumerate().map(|(j, p)| slack(p, config, j)).collect();
    for (j, p) in plans.iter_mut().enumerate() {
        if !free[j] {
            continue;
        }
        if let AgentPlan::Sequence { targets, dwell } = p {
            let k = targets.len();
            dwell.resize(k.saturating_sub(1), 0.0);
            // Start from an even share of the slack unless a timing is given.
            if dwell.iter().all(|&d| d == 0.0) && k > 0 {
                let share = slacks[j].max(0.0) / k as f64;
                dwell.iter_mut().for_each(|d| *d = share);
            }
        }
    }
    let mut cost = plans_cost(plans, config)?;
    for _ in 0..opts.sweeps {
        let before = cost;
        for j in 0..plans.len() {
            if !free[j] {
                continue;
            }
            for k in (0..plans[j].dwell().len()).rev() {
                let cur = plans[j].dwell()[k];
                let hi = match &plans[j] {
                    AgentPlan::Sequence { dwell, .. } => {
                        let others: f64 = dwell.iter().enumerate().filter(|&(q, _)| q != k).map(|(_, d)| d).sum();
                        (slacks[j] - others).max(0.0)
                    }
                    AgentPlan::Cycle(_) => horizon,
                };
                let mut trial = plans.to_vec();
                let (x, c) = line_search(
                    |v| {
                        trial[j].dwell_mut()[k] = v;
                        plans_cost(&trial, config)
                    },
                    0.0,
                    hi,
                    (cur, cost),
                    tol,
                )?;
                plans[j].dwell_mut()[k] = x;
                cost = c;
            }
        }
        if before - cost <= 1e-12 * before.abs().max(1.0) {
            break;
        }
    }
    Ok(cost)
}

/// Best dwell times for one agent following `sequence` (zero-based target
/// indices) over the configured horizon. Other agents, if any, stay at
/// their starting positions.
pub fn optimize_dwells(sequence: &[usize], config: &MissionConfig, opts: &ScheduleOptions) -> Result<VisitSchedule> {
    if sequence.is_empty() {
        return Err(Error::Infeasible("empty visit sequence".into()));
    }
    if config.num_agents() != 1 {
        return Err(Error::Config("optimize_dwells takes a single-agent mission".into()));
    }
    if sequence.iter().any(|&i| i >= config.num_targets()) {
        return Err(Error::Config("visit sequence names an unknown target".into()));
    }
    let mut plans = vec![AgentPlan::Sequence { targets: sequence.to_vec(), dwell: vec![] }];
    if slack(&plans[0], config, 0) < 0.0 {
        return Err(Error::Infeasible("travel alone exceeds the horizon".into()));
    }
    optimize_plans(config, &mut plans, &[true], opts)?;
    build(&plans, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, _) = golden(|x| Ok((x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-8).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
    }

    #[test]
    fn line_search_keeps_incumbent() {
        let (x, fx) = line_search(|x| Ok(1.0 + x), 0.0, 1.0, (0.5, 0.0), 1e-6).unwrap();
        assert_eq!((x, fx), (0.5, 0.0));
    }
}
