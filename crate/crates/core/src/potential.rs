//! Distance-weighted reward field that keeps the gradient informative when a
//! trajectory never comes near a target.
//!
//! The field integral is taken with the composite trapezoid rule on a fixed
//! grid over `[x_1, x_M]`. For a fixed grid the field term reduces to
//! `sum_i R_i(t) * sum_j phi_i(s_j(t))`, where `phi_i(y) = sum_k w_k c_ik |y - x_k|`
//! is piecewise linear in `y` and is evaluated in logarithmic time from prefix sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipa::{walk, SensingView};
use crate::model::{MissionConfig, Target};
use crate::poly::gauss8;
use crate::sim::params::ParamLayout;
use crate::sim::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    /// Field weight `exp(-beta * k)` after `k` descent iterations.
    #[default]
    PerIteration,
    /// Field weight `exp(-beta * t)` inside the time integral.
    MissionTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub enabled: bool,
    pub beta: f64,
    pub decay_mode: DecayMode,
    pub grid: usize,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { enabled: false, beta: 0.05, decay_mode: DecayMode::PerIteration, grid: 500 }
    }
}

impl PotentialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("excitation.beta must be positive".into()));
        }
        if self.grid < 50 {
            return Err(Error::Config("excitation.grid must be at least 50".into()));
        }
        Ok(())
    }
}

/// Reward density at `w`: `sum_i alpha_i R_i / max(|w - x_i|, r_min)`.
pub fn reward_density(w: f64, r: &[f64], targets: &[Target], r_min: f64) -> Result<f64> {
    let lo = targets[0].position;
    let hi = targets[targets.len() - 1].position;
    if !(w >= lo && w <= hi) {
        return Err(Error::Domain(format!("field point {w} outside [{lo}, {hi}]")));
    }
    Ok(targets.iter().zip(r).map(|(t, &ri)| t.weight * ri / (w - t.position).abs().max(r_min)).sum())
}

/// Summed distance from `w` to every agent.
pub fn travel_cost(w: f64, s: &[f64]) -> f64 {
    s.iter().map(|&sj| (sj - w).abs()).sum()
}

/// Trapezoid discretization of the field for a fixed set of targets.
#[derive(Debug, Clone)]
pub struct PotentialField {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Per target: `w_k * c_ik` for each node.
    coef: Vec<Vec<f64>>,
    /// Per target prefix sums of `w_k c_ik` and `w_k c_ik x_k`.
    pre_c: Vec<Vec<f64>>,
    pre_m: Vec<Vec<f64>>,
}

impl PotentialField {
    pub fn new(config: &MissionConfig, grid: usize) -> Result<Self> {
        if grid < 2 {
            return Err(Error::Config("field grid needs at least two points".into()));
        }
        let targets = config.targets();
        let lo = targets[0].position;
        let hi = targets[targets.len() - 1].position;
        let h = (hi - lo) / (grid - 1) as f64;
        let nodes: Vec<f64> = (0..grid).map(|k| if k + 1 == grid { hi } else { lo + k as f64 * h }).collect();
        let weights: Vec<f64> = (0..grid).map(|k| if k == 0 || k + 1 == grid { 0.5 * h } else { h }).collect();
        let r_min = config.r_min();
        let mut coef = Vec::new();
        let mut pre_c = Vec::new();
        let mut pre_m = Vec::new();
        for t in targets {
            let c: Vec<f64> = nodes
                .iter()
                .zip(&weights)
                .map(|(&w, &wt)| wt * t.weight / (w - t.position).abs().max(r_min))
                .collect();
            let mut pc = Vec::with_capacity(grid + 1);
            let mut pm = Vec::with_capacity(grid + 1);
            pc.push(0.0);
            pm.push(0.0);
            for k in 0..grid {
                pc.push(pc[k] + c[k]);
                pm.push(pm[k] + c[k] * nodes[k]);
            }
            coef.push(c);
            pre_c.push(pc);
            pre_m.push(pm);
        }
        Ok(PotentialField { nodes, weights, coef, pre_c, pre_m })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `phi_i(y)`.
    pub fn phi(&self, i: usize, y: f64) -> f64 {
        let k = self.nodes.partition_point(|&w| w <= y);
        let pc = &self.pre_c[i];
        let pm = &self.pre_m[i];
        let n = self.nodes.len();
        let (cl, ml) = (pc[k], pm[k]);
        let (cr, mr) = (pc[n] - cl, pm[n] - ml);
        y * (cl - cr) - (ml - mr)
    }

    /// Derivative of `phi_i` at `y`, taking `sgn(0) = 0` at grid nodes.
    pub fn dphi(&self, i: usize, y: f64) -> f64 {
        let below = self.nodes.partition_point(|&w| w < y);
        let upto = self.nodes.partition_point(|&w| w <= y);
        let pc = &self.pre_c[i];
        let n = self.nodes.len();
        pc[below] - (pc[n] - pc[upto])
    }

    /// Field term at one instant by direct trapezoid summation over the grid.
    pub fn j2_direct(&self, r: &[f64], s: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, &w) in self.nodes.iter().enumerate() {
            let q = travel_cost(w, s);
            let v: f64 = (0..r.len()).map(|i| r[i] * self.coef[i][k] / self.weights[k]).sum();
            acc += self.weights[k] * q * v;
        }
        acc
    }

    /// Field term at one instant through the prefix-sum form.
    pub fn j2_at(&self, r: &[f64], s: &[f64]) -> f64 {
        (0..r.len()).map(|i| r[i] * s.iter().map(|&y| self.phi(i, y)).sum::<f64>()).sum()
    }
}

/// Time weighting of the field term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeWeight {
    Flat,
    Exponential(f64),
}

impl TimeWeight {
    fn at(self, t: f64) -> f64 {
        match self {
            TimeWeight::Flat => 1.0,
            TimeWeight::Exponential(beta) => (-beta * t).exp(),
        }
    }
}

/// Splits a segment into pieces on which every agent stays between two
/// adjacent grid nodes.
fn pieces(field: &PotentialField, pos: &[f64], vel: &[i8], len: f64, max_piece: f64) -> Vec<f64> {
    let mut cuts = vec![0.0, len];
    for (j, &s0) in pos.iter().enumerate() {
        if vel[j] == 0 {
            continue;
        }
        let s1 = s0 + vel[j] as f64 * len;
        let (lo, hi) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
        let a = field.nodes.partition_point(|&w| w <= lo);
        let b = field.nodes.partition_point(|&w| w < hi);
        for &w in &field.nodes[a..b] {
            cuts.push((w - s0).abs());
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    if max_piece.is_finite() {
        let mut out = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let n = ((w[1] - w[0]) / max_piece).ceil().max(1.0) as usize;
            for k in 0..n {
                out.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
            }
        }
        out.push(len);
        out
    } else {
        cuts
    }
}

/// Time average of the (weighted) field term along a trace.
pub fn j2_value(trace: &SimTrace, field: &PotentialField, weight: TimeWeight) -> f64 {
    if trace.horizon <= 0.0 {
        return 0.0;
    }
    let max_piece = if matches!(weight, TimeWeight::Exponential(_)) { 1.0 } else { f64::INFINITY };
    let m = trace.num_targets;
    let mut acc = 0.0;
    for seg in &trace.segments {
        let len = seg.len();
        if len <= 0.0 || seg.r.iter().all(|p| p.is_zero()) {
            continue;
        }
        let cuts = pieces(field, &seg.pos, &seg.vel, len, max_piece);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            for i in 0..m {
                if seg.r[i].is_zero() {
                    continue;
                }
                let (pa, pb) = phi_ends(field, i, &seg.pos, &seg.vel, a, b);
                acc += gauss8(a, b, |tau| {
                    let lam = (tau - a) / (b - a);
                    seg.r[i].eval(tau) * (pa + lam * (pb - pa)) * weight.at(seg.t0 + tau)
                });
            }
        }
    }
    acc / trace.horizon
}

fn phi_ends(field: &PotentialField, i: usize, pos: &[f64], vel: &[i8], a: f64, b: f64) -> (f64, f64) {
    let mut pa = 0.0;
    let mut pb = 0.0;
    for (j, &s0) in pos.iter().enumerate() {
        pa += field.phi(i, s0 + vel[j] as f64 * a);
        pb += field.phi(i, s0 + vel[j] as f64 * b);
    }
    (pa, pb)
}

/// Time average of the weighted field term and its gradient with respect to
/// the flattened parameter vector.
pub fn j2_gradient(
    trace: &SimTrace,
    field: &PotentialField,
    view: &SensingView,
    layout: &ParamLayout,
    weight: TimeWeight,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; layout.len];
    if trace.horizon <= 0.0 {
        return Ok((0.0, grad));
    }
    let max_piece = if matches!(weight, TimeWeight::Exponential(_)) { 1.0 } else { f64::INFINITY };
    let m = trace.num_targets;
    let n = trace.num_agents;
    let mut value = 0.0;
    walk(trace, view, layout, |seg, state, sens| {
        let len = seg.len();
        if seg.r.iter().all(|p| p.is_zero()) && sens.iter().all(|s| s.terms.is_empty()) {
            return;
        }
        let cuts = pieces(field, &seg.pos, &seg.vel, len, max_piece);
        // Per agent: coefficient multiplying ds_j.
        let mut agent_coef = vec![0.0; n];
        for i in 0..m {
            let r = &seg.r[i];
            let active = !r.is_zero() || !sens[i].terms.is_empty();
            if !active {
                continue;
            }
            let mut a_i = 0.0;
            let mut b_terms = vec![0.0; sens[i].terms.len()];
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b <= a {
                    continue;
                }
                let (pa, pb) = phi_ends(field, i, &seg.pos, &seg.vel, a, b);
                let mid = 0.5 * (a + b);
                let slopes: Vec<f64> = (0..n).map(|j| field.dphi(i, seg.pos[j] + seg.vel[j] as f64 * mid)).collect();
                let mut nodes = [0.0f64; 8];
                let mut wts = [0.0f64; 8];
                let h = 0.5 * (b - a);
                for (k, &(x, wq)) in crate::poly::GAUSS8.iter().enumerate() {
                    nodes[k] = mid + h * x;
                    wts[k] = wq * h * weight.at(seg.t0 + nodes[k]);
                }
                for k in 0..8 {
                    let tau = nodes[k];
                    let lam = (tau - a) / (b - a);
                    let phi = pa + lam * (pb - pa);
                    let rv = r.eval(tau);
                    value += wts[k] * rv * phi;
                    a_i += wts[k] * phi;
                    for (q, (_, g)) in sens[i].terms.iter().enumerate() {
                        b_terms[q] += wts[k] * g.eval(tau) * phi;
                    }
                    if rv != 0.0 {
                        for j in 0..n {
                            agent_coef[j] += wts[k] * rv * slopes[j];
                        }
                    }
                }
            }
            if a_i != 0.0 {
                for (g, &d) in grad.iter_mut().zip(&state.dr[i]) {
                    *g += a_i * d;
                }
            }
            for (q, (j, _)) in sens[i].terms.iter().enumerate() {
                agent_coef[*j] += b_terms[q];
            }
        }
        for j in 0..n {
            if agent_coef[j] == 0.0 {
                continue;
            }
            let o = layout.offset[j];
            for (k, &d) in state.ds[j].iter().enumerate() {
                grad[o + k] += agent_coef[j] * d;
            }
        }
    })?;
    let t = trace.horizon;
    Ok((value / t, grad.iter().map(|g| g / t).collect()))
}
