use smallvec::SmallVec;

use crate::error::Result;
use crate::model::{MissionConfig, UncertaintyRate};
use crate::poly::Poly;
use crate::sim::program::{compile_program, ControlProgram, PhaseKind};
use crate::sim::params::TrajectoryParams;
use crate::sim::trace::{Diagnostics, Event, EventKind, Segment, SimTrace};

/// Detection probability of one agent for one target on a segment, as a
/// polynomial in local time, with its slope with respect to the agent position.
#[derive(Debug, Clone)]
pub(crate) struct Coverage {
    pub p: Poly,
    pub dp_ds: f64,
}

/// Coverage of target `x` by an agent at `s0` moving with control `u` and
/// range `r` over a segment of length `len`. The sensing-region side is taken
/// at the segment midpoint; segments never straddle a region boundary.
pub(crate) fn coverage(x: f64, s0: f64, u: i8, r: f64, len: f64) -> Option<Coverage> {
    let d = s0 + u as f64 * 0.5 * len - x;
    if d.abs() >= r {
        return None;
    }
    if d == 0.0 {
        return Some(Coverage { p: Poly::constant(1.0), dp_ds: 0.0 });
    }
    let sigma = d.signum();
    Some(Coverage {
        p: Poly::linear(1.0 - sigma * (s0 - x) / r, -sigma * u as f64 / r),
        dp_ds: -sigma / r,
    })
}

/// Simulation tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Events closer than this (relative to the horizon) are flagged as coincident.
    pub tol_event_rel: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { tol_event_rel: 1e-9 }
    }
}

struct Exo {
    t: f64,
    kind: EventKind,
    agent: Option<usize>,
    target: Option<usize>,
}

fn exogenous_events(program: &ControlProgram, config: &MissionConfig, rates: &UncertaintyRate) -> Vec<Exo> {
    let horizon = program.horizon;
    let mut out = Vec::new();
    for (j, ap) in program.agents.iter().enumerate() {
        let r = config.agents()[j].sensing_range;
        for ph in &ap.phases {
            if ph.end < horizon {
                let kind = match ph.kind {
                    PhaseKind::Travel => EventKind::ArriveAtSwitchPoint,
                    PhaseKind::Dwell => EventKind::DwellEnd,
                };
                out.push(Exo { t: ph.end, kind, agent: Some(j), target: None });
            }
            if ph.kind == PhaseKind::Travel && ph.dir != 0 {
                let (lo, hi) = if ph.from < ph.to { (ph.from, ph.to) } else { (ph.to, ph.from) };
                for (i, tg) in config.targets().iter().enumerate() {
                    for (c, edge) in [(tg.position - r, true), (tg.position, false), (tg.position + r, true)] {
                        if c > lo && c < hi {
                            let t = ph.start + (c - ph.from).abs();
                            let kind = if !edge {
                                EventKind::TargetPass
                            } else {
                                // Entering when the motion points toward the target.
                                let toward = (tg.position - c) * ph.dir as f64 > 0.0;
                                if toward {
                                    EventKind::SensingEnter
                                } else {
                                    EventKind::SensingExit
                                }
                            };
                            out.push(Exo { t, kind, agent: Some(j), target: Some(i) });
                        }
                    }
                }
            }
        }
    }
    if let Some(step) = rates.interval() {
        let mut k = 1u64;
        while (k as f64) * step < horizon {
            out.push(Exo { t: k as f64 * step, kind: EventKind::InflowResample, agent: None, target: None });
            k += 1;
        }
    }
    out
}

/// First local time in `(0, len]` at which `r` reaches zero or below, given
/// `r > 0` just after zero. `dr` is the derivative of `r`.
fn first_nonpositive(r: &Poly, dr: &Poly, len: f64) -> Option<f64> {
    let mut knots: SmallVec<[f64; 8]> = SmallVec::new();
    knots.push(0.0);
    knots.extend(dr.roots_in(0.0, len));
    knots.push(len);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if r.eval(b) <= 0.0 {
            if a > 0.0 && r.eval(a) <= 0.0 {
                return Some(a);
            }
            let (mut lo, mut hi) = (a, b);
            loop {
                let m = 0.5 * (lo + hi);
                if m <= lo || m >= hi {
                    break;
                }
                if r.eval(m) > 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            return Some(hi);
        }
    }
    None
}

/// First local time in `(0, len)` after which `q` turns positive, given
/// `q <= 0` just after zero.
fn first_positive(q: &Poly, len: f64) -> Option<f64> {
    let roots = q.roots_in(0.0, len);
    for (k, &r0) in roots.iter().enumerate() {
        let next = roots.get(k + 1).copied().unwrap_or(len);
        if q.eval(0.5 * (r0 + next)) > 0.0 {
            return Some(r0);
        }
    }
    None
}

struct Recorder {
    segments: Vec<Segment>,
    events: Vec<Event>,
}

/// Integrates the hybrid dynamics exactly. With `record` unset only the cost
/// and final state are produced.
fn run(
    program: &ControlProgram,
    config: &MissionConfig,
    rates: &UncertaintyRate,
    record: bool,
    opts: SimOptions,
) -> (f64, Vec<f64>, Diagnostics, Option<Recorder>) {
    let horizon = program.horizon;
    let m = config.num_targets();
    let n = config.num_agents();
    let targets = config.targets();
    let ranges: SmallVec<[f64; 4]> = config.agents().iter().map(|a| a.sensing_range).collect();

    let mut exo = exogenous_events(program, config, rates);
    let mut times: Vec<f64> = exo.iter().map(|e| e.t).filter(|&t| t > 0.0 && t < horizon).collect();
    times.push(horizon);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();

    let mut rec = if record { Some(Recorder { segments: Vec::new(), events: Vec::new() }) } else { None };
    let mut diag = Diagnostics { emptied: vec![false; m], min_uncertainty: f64::INFINITY, ..Default::default() };

    let mut r_now: Vec<f64> = targets.iter().map(|t| t.initial_uncertainty).collect();
    let mut free = vec![true; m];
    let scale = 1.0 + r_now.iter().cloned().fold(0.0, f64::max) + targets.iter().map(|t| t.decay_rate).fold(0.0, f64::max) * horizon;
    let eps_r = 1e-13 * scale;

    let mut phase_idx = vec![0usize; n];
    let mut integral = 0.0;
    let mut ta = 0.0;
    if horizon <= 0.0 {
        return (0.0, r_now, diag, rec);
    }

    let push_event = |rec: &mut Option<Recorder>, t: f64, kind: EventKind, target: Option<usize>| {
        if let Some(r) = rec.as_mut() {
            r.events.push(Event { t, kind, target, agent: None, coincident: false });
        }
    };

    for &tb in &times {
        if tb <= ta {
            continue;
        }
        let len = tb - ta;
        let mid = 0.5 * (ta + tb);
        let mut pos: SmallVec<[f64; 4]> = SmallVec::new();
        let mut vel: SmallVec<[i8; 4]> = SmallVec::new();
        for (j, ap) in program.agents.iter().enumerate() {
            let idx = &mut phase_idx[j];
            while *idx + 1 < ap.phases.len() && ap.phases[*idx].end <= mid {
                *idx += 1;
            }
            let ph = &ap.phases[*idx];
            pos.push(ph.position_at(ta));
            vel.push(ph.dir);
        }
        if config.no_cross() {
            for j in 0..n.saturating_sub(1) {
                let a0 = pos[j];
                let b0 = pos[j + 1];
                let a1 = a0 + vel[j] as f64 * len;
                let b1 = b0 + vel[j + 1] as f64 * len;
                if a0 > b0 + 1e-9 || a1 > b1 + 1e-9 {
                    diag.crossings.push((if a0 > b0 + 1e-9 { ta } else { tb }, j));
                }
            }
        }
        let inflow: SmallVec<[f64; 8]> = match rates.interval() {
            None => (0..m).map(|i| targets[i].growth_rate).collect(),
            Some(step) => {
                let k = (mid / step).floor() as u64;
                (0..m).map(|i| rates.rate(config, i, k)).collect()
            }
        };
        let q: Vec<Poly> = (0..m)
            .map(|i| {
                let mut miss = Poly::constant(1.0);
                for j in 0..n {
                    if let Some(c) = coverage(targets[i].position, pos[j], vel[j], ranges[j], len) {
                        miss = miss.mul(&Poly::constant(1.0).add(&c.p.scale(-1.0)));
                    }
                }
                let b = targets[i].decay_rate;
                Poly::constant(inflow[i] - b).add(&miss.scale(b))
            })
            .collect();

        // Mode changes forced by the new rates at the start of the interval.
        for i in 0..m {
            let s = q[i].sign_right_of(0.0);
            if free[i] && r_now[i] <= eps_r && s <= 0 {
                r_now[i] = 0.0;
                free[i] = false;
                diag.emptied[i] = true;
                push_event(&mut rec, ta, EventKind::RHitsZero, Some(i));
            } else if !free[i] && s > 0 {
                free[i] = true;
                push_event(&mut rec, ta, EventKind::RLeavesZero, Some(i));
            }
        }

        let mut cur = 0.0;
        let mut guard = 0;
        while cur < len {
            guard += 1;
            let rest = len - cur;
            let qs: Vec<Poly> = q.iter().map(|p| p.shift(cur)).collect();
            let rp: Vec<Poly> = (0..m)
                .map(|i| if free[i] { qs[i].integral(r_now[i]) } else { Poly::zero() })
                .collect();
            let mut step = rest;
            let mut hits: SmallVec<[usize; 8]> = SmallVec::new();
            if guard < 64 * (m + 4) {
                for i in 0..m {
                    let ev = if free[i] { first_nonpositive(&rp[i], &qs[i], rest) } else { first_positive(&qs[i], rest) };
                    if let Some(tau) = ev {
                        let tau = tau.min(rest);
                        if tau < step {
                            step = tau;
                            hits.clear();
                            hits.push(i);
                        } else if tau == step {
                            hits.push(i);
                        }
                    }
                }
            }
            for i in 0..m {
                if free[i] {
                    integral += rp[i].integrate_to(step);
                }
            }
            if let Some(r) = rec.as_mut() {
                let t0 = ta + cur;
                let seg_pos = (0..n).map(|j| pos[j] + vel[j] as f64 * cur).collect();
                r.segments.push(Segment {
                    t0,
                    t1: if cur + step >= len { tb } else { ta + cur + step },
                    pos: seg_pos,
                    vel: vel.clone(),
                    inflow: inflow.clone(),
                    free: free.iter().copied().collect(),
                    r: rp.clone(),
                });
            }
            let t_ev = if cur + step >= len { tb } else { ta + cur + step };
            for i in 0..m {
                if free[i] {
                    r_now[i] = rp[i].eval(step).max(0.0);
                }
            }
            for &i in &hits {
                if free[i] {
                    r_now[i] = 0.0;
                    free[i] = false;
                    diag.emptied[i] = true;
                    push_event(&mut rec, t_ev, EventKind::RHitsZero, Some(i));
                } else {
                    free[i] = true;
                    push_event(&mut rec, t_ev, EventKind::RLeavesZero, Some(i));
                }
            }
            cur += step;
            if cur >= len {
                break;
            }
            for i in 0..m {
                // A release found by the search already knows q turns positive.
                if free[i] && hits.contains(&i) {
                    continue;
                }
                let s = qs[i].sign_right_of(step);
                if free[i] && r_now[i] <= eps_r && s <= 0 {
                    r_now[i] = 0.0;
                    free[i] = false;
                    diag.emptied[i] = true;
                    push_event(&mut rec, t_ev, EventKind::RHitsZero, Some(i));
                } else if !free[i] && s > 0 {
                    free[i] = true;
                    push_event(&mut rec, t_ev, EventKind::RLeavesZero, Some(i));
                }
            }
        }
        for &v in &r_now {
            diag.min_uncertainty = diag.min_uncertainty.min(v);
        }
        ta = tb;
    }

    if let Some(r) = rec.as_mut() {
        for e in exo.drain(..) {
            r.events.push(Event { t: e.t, kind: e.kind, target: e.target, agent: e.agent, coincident: false });
        }
        r.events.push(Event { t: horizon, kind: EventKind::HorizonEnd, target: None, agent: None, coincident: false });
        r.events.sort_by(|a, b| {
            a.t.partial_cmp(&b.t)
                .unwrap()
                .then(a.kind.order().cmp(&b.kind.order()))
                .then(a.target.cmp(&b.target))
                .then(a.agent.cmp(&b.agent))
        });
        let tol = opts.tol_event_rel * horizon;
        let relevant = |e: &Event| !matches!(e.kind, EventKind::InflowResample | EventKind::HorizonEnd);
        let source = |e: &Event| (e.agent, if e.kind.is_control() { None } else { e.target });
        let ev = &mut r.events;
        for k in 1..ev.len() {
            if !relevant(&ev[k]) {
                continue;
            }
            let mut p = k;
            while p > 0 {
                p -= 1;
                if ev[k].t - ev[p].t > tol {
                    break;
                }
                if relevant(&ev[p]) && source(&ev[p]) != source(&ev[k]) {
                    ev[p].coincident = true;
                    ev[k].coincident = true;
                }
            }
        }
        diag.coincident_events = ev.iter().filter(|e| e.coincident).count();
    }
    (integral / horizon, r_now, diag, rec)
}

/// Simulates a compiled program and records the full trace.
pub fn simulate(program: &ControlProgram, config: &MissionConfig, rates: &UncertaintyRate) -> SimTrace {
    simulate_with(program, config, rates, SimOptions::default())
}

pub fn simulate_with(program: &ControlProgram, config: &MissionConfig, rates: &UncertaintyRate, opts: SimOptions) -> SimTrace {
    let (cost, fin, mut diagnostics, rec) = run(program, config, rates, true, opts);
    let rec = rec.unwrap();
    if !diagnostics.min_uncertainty.is_finite() {
        diagnostics.min_uncertainty = fin.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    SimTrace {
        horizon: program.horizon,
        segments: rec.segments,
        events: rec.events,
        cost,
        program: program.clone(),
        final_uncertainty: fin,
        diagnostics,
        num_agents: config.num_agents(),
        num_targets: config.num_targets(),
    }
}

/// Cost of a program without recording a trace.
pub fn program_cost(program: &ControlProgram, config: &MissionConfig, rates: &UncertaintyRate) -> f64 {
    run(program, config, rates, false, SimOptions::default()).0
}

/// Compiles and simulates in one step.
pub fn simulate_params(params: &TrajectoryParams, config: &MissionConfig, rates: &UncertaintyRate) -> Result<SimTrace> {
    Ok(simulate(&compile_program(params, config)?, config, rates))
}

/// Compiles and returns only the cost, plus the no-cross crossings found.
pub fn params_cost(params: &TrajectoryParams, config: &MissionConfig, rates: &UncertaintyRate) -> Result<(f64, bool)> {
    let prog = compile_program(params, config)?;
    let (c, _, d, _) = run(&prog, config, rates, false, SimOptions::default());
    Ok((c, d.crossings.is_empty()))
}
