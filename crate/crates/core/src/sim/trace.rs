use serde::Serialize;
use smallvec::SmallVec;

use crate::poly::Poly;
use crate::sim::program::ControlProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RHitsZero,
    RLeavesZero,
    ArriveAtSwitchPoint,
    DwellEnd,
    SensingEnter,
    SensingExit,
    TargetPass,
    InflowResample,
    HorizonEnd,
}

impl EventKind {
    pub fn is_uncertainty(self) -> bool {
        matches!(self, EventKind::RHitsZero | EventKind::RLeavesZero)
    }

    pub fn is_control(self) -> bool {
        matches!(self, EventKind::ArriveAtSwitchPoint | EventKind::DwellEnd)
    }

    pub(crate) fn order(self) -> u8 {
        match self {
            EventKind::RHitsZero | EventKind::RLeavesZero => 0,
            EventKind::ArriveAtSwitchPoint | EventKind::DwellEnd => 1,
            EventKind::SensingEnter | EventKind::SensingExit | EventKind::TargetPass => 2,
            EventKind::InflowResample => 3,
            EventKind::HorizonEnd => 4,
        }
    }
}

/// A time-stamped event. Indices are zero-based in memory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub target: Option<usize>,
    pub agent: Option<usize>,
    /// Another event from a different source falls within the event tolerance.
    pub coincident: bool,
}

/// Interval between consecutive breakpoints, over which every control and
/// every uncertainty mode is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    /// Agent positions at `t0`.
    pub pos: SmallVec<[f64; 4]>,
    /// Agent controls on the segment.
    pub vel: SmallVec<[i8; 4]>,
    /// Growth rate in effect for each target.
    pub inflow: SmallVec<[f64; 8]>,
    /// True where the target follows the growth form, false where it is held at zero.
    pub free: SmallVec<[bool; 8]>,
    /// Uncertainty of each target as a polynomial in `t - t0`.
    pub r: Vec<Poly>,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn is_empty(&self) -> bool {
        self.t1 <= self.t0
    }

    pub fn position(&self, j: usize, t: f64) -> f64 {
        self.pos[j] + self.vel[j] as f64 * (t - self.t0)
    }
}

/// Post-run checks that do not abort the simulation.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// `(time, left agent)` pairs where agent order was violated with no-cross set.
    pub crossings: Vec<(f64, usize)>,
    /// Number of events flagged as coincident.
    pub coincident_events: usize,
    /// Whether each target's uncertainty reached zero at least once.
    pub emptied: Vec<bool>,
    /// Smallest uncertainty value seen at any breakpoint.
    pub min_uncertainty: f64,
}

/// Full record of one simulated run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub horizon: f64,
    pub segments: Vec<Segment>,
    pub events: Vec<Event>,
    /// Time-averaged total uncertainty.
    pub cost: f64,
    pub program: ControlProgram,
    pub final_uncertainty: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub num_agents: usize,
    pub num_targets: usize,
}

/// State at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub controls: Vec<i8>,
}

impl SimTrace {
    fn segment_index(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() {
            return None;
        }
        let k = self.segments.partition_point(|s| s.t0 <= t);
        Some(k.saturating_sub(1))
    }

    /// State at time `t`.
    pub fn sample(&self, t: f64) -> Sample {
        match self.segment_index(t) {
            None => Sample {
                t,
                positions: self.program.agents.iter().map(|a| a.initial_position).collect(),
                uncertainty: self.final_uncertainty.clone(),
                controls: vec![0; self.num_agents],
            },
            Some(k) => {
                let s = &self.segments[k];
                let tau = (t - s.t0).min(s.len());
                Sample {
                    t,
                    positions: (0..self.num_agents).map(|j| s.pos[j] + s.vel[j] as f64 * tau).collect(),
                    uncertainty: s.r.iter().map(|p| p.eval(tau).max(0.0)).collect(),
                    controls: s.vel.to_vec(),
                }
            }
        }
    }

    /// Uniform output grid of spacing `step` that always includes `0` and `T`.
    pub fn dense(&self, step: f64) -> Vec<Sample> {
        let mut out = Vec::new();
        if self.horizon <= 0.0 || !(step > 0.0) {
            if self.horizon <= 0.0 {
                out.push(self.sample(0.0));
            }
            return out;
        }
        let n = (self.horizon / step).floor() as usize;
        for k in 0..=n {
            out.push(self.sample(k as f64 * step));
        }
        if (n as f64) * step < self.horizon {
            out.push(self.sample(self.horizon));
        }
        out
    }

    /// Time integral of the total uncertainty recomputed from the dense samples by
    /// the trapezoid rule. Used to cross-check the exact integral.
    pub fn trapezoid_cost(&self, step: f64) -> f64 {
        let d = self.dense(step);
        let mut acc = 0.0;
        for w in d.windows(2) {
            let a: f64 = w[0].uncertainty.iter().sum();
            let b: f64 = w[1].uncertainty.iter().sum();
            acc += 0.5 * (a + b) * (w[1].t - w[0].t);
        }
        if self.horizon > 0.0 {
            acc / self.horizon
        } else {
            0.0
        }
    }

    pub fn to_csv(&self, step: f64) -> String {
        let mut s = String::from("t");
        for j in 0..self.num_agents {
            s.push_str(&format!(",s_{}", j + 1));
        }
        for i in 0..self.num_targets {
            s.push_str(&format!(",R_{}", i + 1));
        }
        for j in 0..self.num_agents {
            s.push_str(&format!(",u_{}", j + 1));
        }
        s.push('\n');
        for row in self.dense(step) {
            s.push_str(&fmt_g(row.t));
            for v in row.positions.iter().chain(row.uncertainty.iter()) {
                s.push(',');
                s.push_str(&fmt_g(*v));
            }
            for u in &row.controls {
                s.push(',');
                s.push_str(&u.to_string());
            }
            s.push('\n');
        }
        s
    }

    /// Event log with one-based target and agent numbers.
    pub fn events_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.events
                .iter()
                .map(|e| {
                    let mut m = serde_json::Map::new();
                    m.insert("t".into(), serde_json::json!(e.t));
                    m.insert("kind".into(), serde_json::to_value(e.kind).unwrap());
                    if let Some(i) = e.target {
                        m.insert("target".into(), serde_json::json!(i + 1));
                    }
                    if let Some(j) = e.agent {
                        m.insert("agent".into(), serde_json::json!(j + 1));
                    }
                    if e.coincident {
                        m.insert("coincident".into(), serde_json::json!(true));
                    }
                    serde_json::Value::Object(m)
                })
                .collect(),
        )
    }

    /// Events that depend on agent sensing or uncertainty modes, in order.
    pub fn event_signature(&self) -> Vec<(EventKind, Option<usize>, Option<usize>)> {
        self.events
            .iter()
            .filter(|e| e.kind != EventKind::InflowResample && e.kind != EventKind::HorizonEnd)
            .map(|e| (e.kind, e.target, e.agent))
            .collect()
    }

    pub fn sensing_event_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::SensingEnter | EventKind::SensingExit | EventKind::TargetPass))
            .count()
    }
}

/// Formats with 12 significant digits, like C's `%.12g`.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-5..12).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
