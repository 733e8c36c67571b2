//! Extending a window schedule to a longer horizon.

use crate::error::{Error, Result};
use crate::model::MissionConfig;

use super::{materialize, schedule_cost, AgentPlan, VisitSchedule};

/// Repeats a window schedule until `config.horizon()` and re-simulates the
/// result over the full horizon. Agents following a cycle keep cycling.
/// Other agents have their window tiled, which needs the window to end
/// within `tolerance` of where it started. The last dwell of each tile
/// absorbs the difference in the first travel so every tile keeps the
/// window length. A window as long as the horizon comes back unchanged.
pub fn extend_periodic(config: &MissionConfig, schedule: &VisitSchedule, tolerance: f64) -> Result<VisitSchedule> {
    let window = schedule.horizon;
    let horizon = config.horizon();
    if schedule.agents.len() != config.num_agents() {
        return Err(Error::Config("schedule and mission disagree on the number of agents".into()));
    }
    if !(window > 0.0) {
        return Err(Error::Config("window schedule has no length".into()));
    }
    if (window - horizon).abs() <= 1e-12 * horizon.max(1.0) {
        return Ok(schedule.clone());
    }
    let xs: Vec<f64> = config.targets().iter().map(|t| t.position).collect();
    let mut agents = Vec::with_capacity(schedule.agents.len());
    for (j, a) in schedule.agents.iter().enumerate() {
        if let Some(c) = &a.cycle {
            agents.push(materialize(&AgentPlan::Cycle(c.clone()), config, j, horizon));
            continue;
        }
        if a.sequence.is_empty() {
            agents.push(a.clone());
            continue;
        }
        let start = config.agents()[j].initial_position;
        let end = a.final_position(config, j);
        if (end - start).abs() > tolerance {
            return Err(Error::Aperiodic(format!(
                "agent {} ends the window at {end} but started at {start} (tolerance {tolerance})",
                j + 1
            )));
        }
        let tiles = (horizon / window).ceil().max(1.0) as usize;
        let k = a.sequence.len();
        // Travel into the first visit from the end of the previous tile.
        let rejoin = (xs[a.sequence[0]] - end).abs();
        let mut targets = Vec::with_capacity(tiles * k);
        let mut dwell = Vec::with_capacity(tiles * k);
        for tile in 0..tiles {
            for q in 0..k {
                let mut d = a.dwell[q];
                if q + 1 == k {
                    d = (d - (rejoin - a.travel[0])).max(0.0);
                }
                // A tile that starts where the previous one stopped merges
                // into one longer visit.
                if tile > 0 && q == 0 && targets.last() == Some(&a.sequence[0]) {
                    *dwell.last_mut().unwrap() += d;
                    continue;
                }
                targets.push(a.sequence[q]);
                dwell.push(d);
            }
        }
        agents.push(materialize(&AgentPlan::Sequence { targets, dwell }, config, j, horizon));
    }
    let cost = schedule_cost(&agents, config)?;
    Ok(VisitSchedule { agents, horizon, cost })
}
