//! Event-driven sensitivity propagation along a recorded trace.
//!
//! The walker consumes only geometry (agent positions and controls, target
//! positions, sensing ranges), decay rates and the per-segment mode flags of
//! the trace. Growth rates and uncertainty values are never read, so the
//! gradient of a fixed trace does not depend on the declared growth rates.

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::MissionConfig;
use crate::poly::Poly;
use crate::sim::engine::coverage;
use crate::sim::params::ParamLayout;
use crate::sim::program::{AgentProgram, PhaseKind};
use crate::sim::trace::{Segment, SimTrace};

/// The part of a mission the derivative rules depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingView {
    pub target_positions: Vec<f64>,
    pub decay_rates: Vec<f64>,
    pub ranges: Vec<f64>,
}

impl SensingView {
    pub fn from_config(config: &MissionConfig) -> Self {
        SensingView {
            target_positions: config.targets().iter().map(|t| t.position).collect(),
            decay_rates: config.targets().iter().map(|t| t.decay_rate).collect(),
            ranges: config.agents().iter().map(|a| a.sensing_range).collect(),
        }
    }

    /// View built from raw target records, which are not validated. Only
    /// positions and decay rates are read.
    pub fn from_parts(targets: &[crate::model::Target], ranges: &[f64]) -> Self {
        SensingView {
            target_positions: targets.iter().map(|t| t.position).collect(),
            decay_rates: targets.iter().map(|t| t.decay_rate).collect(),
            ranges: ranges.to_vec(),
        }
    }
}

/// Running derivatives of agent positions and target uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct IpaState {
    /// `ds[j]` holds agent `j`'s position derivative with respect to its own
    /// switching points followed by its own dwell times.
    pub ds: Vec<Vec<f64>>,
    /// `dr[i]` holds target `i`'s uncertainty derivative with respect to the
    /// full flattened parameter vector.
    pub dr: Vec<Vec<f64>>,
    /// Running integral of the summed uncertainty derivatives (not yet divided by T).
    pub grad: Vec<f64>,
}

impl IpaState {
    pub fn new(layout: &ParamLayout, num_targets: usize) -> Self {
        IpaState {
            ds: (0..layout.gamma.len()).map(|j| vec![0.0; layout.agent_len(j)]).collect(),
            dr: vec![vec![0.0; layout.len]; num_targets],
            grad: vec![0.0; layout.len],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ds.iter().chain(self.dr.iter()).chain(std::iter::once(&self.grad)).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// The three control-switch forms an agent can undergo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchCase {
    /// Moving to stopped.
    Arrival,
    /// Stopped to moving.
    Departure,
    /// Moving to moving in the opposite direction.
    Reversal,
}

impl SwitchCase {
    pub fn classify(before: i8, after: i8) -> Result<SwitchCase> {
        match (before, after) {
            (-1 | 1, 0) => Ok(SwitchCase::Arrival),
            (0, -1 | 1) => Ok(SwitchCase::Departure),
            (1, -1) | (-1, 1) => Ok(SwitchCase::Reversal),
            _ => Err(Error::UnknownTransition { before: before as f64, after: after as f64 }),
        }
    }
}

/// Derivative jump at an arrival at switching point `xi`.
fn arrival_rule(ds: &mut [f64], xi: usize) {
    ds.iter_mut().for_each(|v| *v = 0.0);
    ds[xi] = 1.0;
}

/// Derivative jump at a departure from switching point `xi` with new control
/// `u_after`. `sigma[l]` is the direction of travel into switching point `l`.
fn departure_rule(ds: &mut [f64], gamma: usize, gamma_dwell: usize, xi: usize, sigma: &[i8], u_after: i8) {
    let u = u_after as f64;
    ds[xi] -= u * sigma[xi] as f64;
    for l in 0..xi {
        ds[l] -= u * (sigma[l] as f64 - sigma[l + 1] as f64);
    }
    for l in 0..gamma_dwell.min(xi + 1) {
        ds[gamma + l] = -u;
    }
}

/// Applies the derivative jump of a control switch of agent `j` at switching
/// point `xi` (zero-based). `sigma[l]` is the direction of travel into
/// switching point `l` and `u_after` the control after the switch.
pub fn apply_control_switch(
    state: &mut IpaState,
    layout: &ParamLayout,
    j: usize,
    case: SwitchCase,
    xi: usize,
    sigma: &[i8],
    u_after: i8,
) -> Result<()> {
    let gamma = layout.gamma[j];
    let gd = layout.gamma_dwell[j];
    if xi >= gamma || sigma.len() <= xi {
        return Err(Error::Mismatch(format!("switch index {xi} out of range for agent {}", j + 1)));
    }
    let ds = &mut state.ds[j];
    match case {
        SwitchCase::Arrival => {
            if u_after != 0 {
                return Err(Error::UnknownTransition { before: sigma[xi] as f64, after: u_after as f64 });
            }
            arrival_rule(ds, xi);
        }
        SwitchCase::Departure => {
            if u_after == 0 {
                return Err(Error::UnknownTransition { before: 0.0, after: 0.0 });
            }
            departure_rule(ds, gamma, gd, xi, sigma, u_after);
        }
        SwitchCase::Reversal => {
            if u_after == 0 || u_after != -sigma[xi] {
                return Err(Error::UnknownTransition { before: sigma[xi] as f64, after: u_after as f64 });
            }
            for l in 0..xi {
                ds[l] = -ds[l];
            }
            ds[xi] = 2.0;
            for l in xi + 1..gamma {
                ds[l] = 0.0;
            }
            for l in 0..gd {
                ds[gamma + l] = if l <= xi { -(u_after as f64) } else { 0.0 };
            }
        }
    }
    Ok(())
}

/// Resets or carries a target's derivative at an uncertainty mode switch.
/// `hits_zero` is true when the target reaches the empty boundary.
pub fn apply_uncertainty_switch(state: &mut IpaState, target: usize, hits_zero: bool) {
    if hits_zero {
        state.dr[target].iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Sensitivity of one target's uncertainty on a segment: the uncertainty
/// derivative at local time `tau` is `dr(0) + sum over (j, g) of g(tau) * ds_j`.
#[derive(Debug, Clone, Default)]
pub struct TargetSensitivity {
    pub terms: SmallVec<[(usize, Poly); 2]>,
}

fn sensitivities(seg: &Segment, view: &SensingView, tau0: f64, len: f64) -> Vec<TargetSensitivity> {
    let n = seg.pos.len();
    view.target_positions
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut out = TargetSensitivity::default();
            if !seg.free[i] {
                return out;
            }
            let covs: SmallVec<[Option<crate::sim::engine::Coverage>; 4]> = (0..n)
                .map(|j| coverage(x, seg.pos[j] + seg.vel[j] as f64 * tau0, seg.vel[j], view.ranges[j], len))
                .collect();
            for j in 0..n {
                let Some(c) = &covs[j] else { continue };
                if c.dp_ds == 0.0 {
                    continue;
                }
                let mut others = Poly::constant(1.0);
                for (d, cd) in covs.iter().enumerate() {
                    if d == j {
                        continue;
                    }
                    if let Some(cd) = cd {
                        others = others.mul(&Poly::constant(1.0).add(&cd.p.scale(-1.0)));
                    }
                }
                let g = others.integral(0.0).scale(-view.decay_rates[i] * c.dp_ds);
                out.terms.push((j, g));
            }
            out
        })
        .collect()
}

/// Advances `state` over local times `[tau0, tau0 + len]` of a segment during which no
/// event occurs, adding the integral of the uncertainty derivatives to `state.grad`.
fn advance(state: &mut IpaState, layout: &ParamLayout, sens: &[TargetSensitivity], len: f64) {
    for (i, s) in sens.iter().enumerate() {
        let dr = &mut state.dr[i];
        for (g, v) in state.grad.iter_mut().zip(dr.iter()) {
            *g += v * len;
        }
        for (j, poly) in &s.terms {
            let integ = poly.integrate_to(len);
            let end = poly.eval(len);
            let o = layout.offset[*j];
            for (k, &d) in state.ds[*j].iter().enumerate() {
                if d != 0.0 {
                    state.grad[o + k] += integ * d;
                    dr[o + k] += end * d;
                }
            }
        }
    }
}

/// Propagates derivatives across `[t0, t1]`, which must lie inside a single
/// segment of the trace. Control and mode switches at the segment start must
/// already be applied to `state`.
pub fn propagate_interval(
    state: &mut IpaState,
    trace: &SimTrace,
    view: &SensingView,
    layout: &ParamLayout,
    t0: f64,
    t1: f64,
) -> Result<()> {
    let k = trace.segments.partition_point(|s| s.t0 <= t0).saturating_sub(1);
    let Some(seg) = trace.segments.get(k) else {
        return Err(Error::Mismatch("empty trace".into()));
    };
    let slack = 1e-12 * (1.0 + trace.horizon);
    if t0 < seg.t0 - slack || t1 > seg.t1 + slack || t1 < t0 {
        return Err(Error::InteriorEvent { t0, t1 });
    }
    let sens = sensitivities(seg, view, t0 - seg.t0, t1 - t0);
    advance(state, layout, &sens, t1 - t0);
    Ok(())
}

/// Tracks which phase of each agent's program is active and applies the
/// switch rules when a new phase begins.
struct PhaseTracker<'a> {
    programs: &'a [AgentProgram],
    ptr: Vec<usize>,
    sigma: Vec<Vec<i8>>,
}

impl<'a> PhaseTracker<'a> {
    fn new(programs: &'a [AgentProgram], layout: &ParamLayout) -> Self {
        let sigma = programs
            .iter()
            .enumerate()
            .map(|(j, ap)| {
                let mut s = vec![0i8; layout.gamma[j]];
                for ph in &ap.phases {
                    if ph.kind == PhaseKind::Travel && ph.index < s.len() {
                        s[ph.index] = ph.dir;
                    }
                }
                s
            })
            .collect();
        PhaseTracker { programs, ptr: vec![0; programs.len()], sigma }
    }

    fn advance_to(&mut self, t: f64, state: &mut IpaState, layout: &ParamLayout) {
        for (j, ap) in self.programs.iter().enumerate() {
            while self.ptr[j] + 1 < ap.phases.len() && ap.phases[self.ptr[j]].end <= t {
                self.ptr[j] += 1;
                let ph = &ap.phases[self.ptr[j]];
                let ds = &mut state.ds[j];
                match ph.kind {
                    PhaseKind::Dwell => {
                        arrival_rule(ds, ph.index);
                    }
                    PhaseKind::Travel => {
                        // Leaving switching point index - 1.
                        let xi = ph.index - 1;
                        departure_rule(ds, layout.gamma[j], layout.gamma_dwell[j], xi, &self.sigma[j], ph.dir);
                    }
                }
            }
        }
    }
}

fn check_layout(trace: &SimTrace, layout: &ParamLayout, view: &SensingView) -> Result<()> {
    if layout.gamma.len() != trace.num_agents || view.ranges.len() != trace.num_agents {
        return Err(Error::Mismatch("agent count differs between trace and parameters".into()));
    }
    if view.target_positions.len() != trace.num_targets {
        return Err(Error::Mismatch("target count differs between trace and view".into()));
    }
    Ok(())
}

/// Walks the trace, calling `visit` with each non-empty segment, the
/// derivative state at its start and its per-target sensitivity polynomials.
/// Returns the final state.
pub fn walk<F>(trace: &SimTrace, view: &SensingView, layout: &ParamLayout, mut visit: F) -> Result<IpaState>
where
    F: FnMut(&Segment, &IpaState, &[TargetSensitivity]),
{
    check_layout(trace, layout, view)?;
    let mut state = IpaState::new(layout, trace.num_targets);
    let mut tracker = PhaseTracker::new(&trace.program.agents, layout);
    for seg in &trace.segments {
        let len = seg.len();
        if len <= 0.0 {
            continue;
        }
        tracker.advance_to(0.5 * (seg.t0 + seg.t1), &mut state, layout);
        for (i, &f) in seg.free.iter().enumerate() {
            if !f {
                apply_uncertainty_switch(&mut state, i, true);
            }
        }
        let sens = sensitivities(seg, view, 0.0, len);
        visit(seg, &state, &sens);
        advance(&mut state, layout, &sens, len);
    }
    Ok(state)
}

/// Gradient of the time-averaged uncertainty computed from the trace geometry alone.
pub fn gradient_from_trace_only(trace: &SimTrace, view: &SensingView, layout: &ParamLayout) -> Result<Vec<f64>> {
    let st = walk(trace, view, layout, |_, _, _| {})?;
    let t = trace.horizon;
    Ok(if t > 0.0 { st.grad.iter().map(|g| g / t).collect() } else { vec![0.0; layout.len] })
}

/// Derivative states at the start of every segment (after the switches there).
pub fn record_states(trace: &SimTrace, view: &SensingView, layout: &ParamLayout) -> Result<Vec<IpaState>> {
    check_layout(trace, layout, view)?;
    let mut out = Vec::with_capacity(trace.segments.len());
    let mut state = IpaState::new(layout, trace.num_targets);
    let mut tracker = PhaseTracker::new(&trace.program.agents, layout);
    for seg in &trace.segments {
        let len = seg.len();
        if len > 0.0 {
            tracker.advance_to(0.5 * (seg.t0 + seg.t1), &mut state, layout);
            for (i, &f) in seg.free.iter().enumerate() {
                if !f {
                    apply_uncertainty_switch(&mut state, i, true);
                }
            }
        }
        out.push(state.clone());
        if len > 0.0 {
            let sens = sensitivities(seg, view, 0.0, len);
            advance(&mut state, layout, &sens, len);
        }
    }
    Ok(out)
}

/// Gradient assembled from stored per-segment states: the closed-form
/// integral of each segment's uncertainty derivatives, summed and divided by T.
pub fn accumulate_gradient(trace: &SimTrace, view: &SensingView, layout: &ParamLayout, states: &[IpaState]) -> Result<Vec<f64>> {
    if states.len() != trace.segments.len() {
        return Err(Error::Mismatch(format!("{} states for {} segments", states.len(), trace.segments.len())));
    }
    let mut total = vec![0.0; layout.len];
    for (seg, st) in trace.segments.iter().zip(states) {
        if st.grad.len() != layout.len || st.dr.len() != trace.num_targets {
            return Err(Error::Mismatch("state shape does not match layout".into()));
        }
        let len = seg.len();
        if len <= 0.0 {
            continue;
        }
        let mut local = st.clone();
        local.grad.iter_mut().for_each(|g| *g = 0.0);
        let sens = sensitivities(seg, view, 0.0, len);
        advance(&mut local, layout, &sens, len);
        for (a, b) in total.iter_mut().zip(&local.grad) {
            *a += b;
        }
    }
    let t = trace.horizon;
    Ok(if t > 0.0 { total.iter().map(|g| g / t).collect() } else { total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(g: usize, gd: usize) -> ParamLayout {
        ParamLayout { gamma: vec![g], gamma_dwell: vec![gd], offset: vec![0], len: g + gd }
    }

    #[test]
    fn classify() {
        assert_eq!(SwitchCase::classify(1, 0).unwrap(), SwitchCase::Arrival);
        assert_eq!(SwitchCase::classify(0, -1).unwrap(), SwitchCase::Departure);
        assert_eq!(SwitchCase::classify(-1, 1).unwrap(), SwitchCase::Reversal);
        assert!(SwitchCase::classify(1, 1).is_err());
        assert!(SwitchCase::classify(0, 0).is_err());
    }

    #[test]
    fn case_one() {
        let lay = layout(3, 3);
        let mut st = IpaState::new(&lay, 1);
        st.ds[0] = vec![0.4, -2.0, 0.0, -1.0, -1.0, 0.0];
        apply_control_switch(&mut st, &lay, 0, SwitchCase::Arrival, 1, &[1, -1, 1], 0).unwrap();
        assert_eq!(st.ds[0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn case_three() {
        let lay = layout(3, 3);
        let mut st = IpaState::new(&lay, 1);
        st.ds[0] = vec![0.5, -2.0, 0.0, 1.0, 1.0, 0.0];
        apply_control_switch(&mut st, &lay, 0, SwitchCase::Reversal, 1, &[1, -1, 1], 1).unwrap();
        assert_eq!(&st.ds[0][..3], &[-0.5, 2.0, 0.0]);
        assert!(apply_control_switch(&mut st, &lay, 0, SwitchCase::Reversal, 1, &[1, -1, 1], -1).is_err());
    }

    #[test]
    fn arrival_then_zero_dwell_departure_equals_reversal() {
        let lay = layout(4, 4);
        let sigma = [1, -1, 1, -1];
        for xi in 1..3 {
            // State during travel into switching point xi, from the closed form.
            let mut before = IpaState::new(&lay, 1);
            arrival_rule(&mut before.ds[0], xi - 1);
            departure_rule(&mut before.ds[0], 4, 4, xi - 1, &sigma, sigma[xi]);
            let mut composed = before.clone();
            apply_control_switch(&mut composed, &lay, 0, SwitchCase::Arrival, xi, &sigma, 0).unwrap();
            apply_control_switch(&mut composed, &lay, 0, SwitchCase::Departure, xi, &sigma, -sigma[xi]).unwrap();
            let mut direct = before.clone();
            apply_control_switch(&mut direct, &lay, 0, SwitchCase::Reversal, xi, &sigma, -sigma[xi]).unwrap();
            for (a, b) in composed.ds[0].iter().zip(&direct.ds[0]) {
                assert!((a - b).abs() < 1e-15, "{:?} vs {:?}", composed.ds[0], direct.ds[0]);
            }
        }
    }

    #[test]
    fn uncertainty_switch_locality() {
        let lay = layout(2, 2);
        let mut st = IpaState::new(&lay, 2);
        st.dr[0] = vec![1.0, 2.0, 3.0, 4.0];
        st.dr[1] = vec![5.0, 6.0, 7.0, 8.0];
        apply_uncertainty_switch(&mut st, 0, false);
        assert_eq!(st.dr[0], vec![1.0, 2.0, 3.0, 4.0]);
        apply_uncertainty_switch(&mut st, 0, true);
        assert_eq!(st.dr[0], vec![0.0; 4]);
        assert_eq!(st.dr[1], vec![5.0, 6.0, 7.0, 8.0]);
    }
}
