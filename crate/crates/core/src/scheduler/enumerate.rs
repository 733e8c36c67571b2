//! Visit-sequence enumeration.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::MissionConfig;

/// Default bound on visits per agent: one visit per shortest hop plus one.
pub fn default_max_steps(config: &MissionConfig, horizon: f64) -> usize {
    let gap = config.min_target_gap();
    let k = (horizon / gap).ceil();
    if k.is_finite() && k >= 0.0 {
        k as usize + 1
    } else {
        1
    }
}

/// Neighbouring targets of `i` within the sorted index set `allowed`.
fn neighbours(allowed: &[usize], i: usize) -> impl Iterator<Item = usize> + '_ {
    let p = allowed.iter().position(|&a| a == i);
    let (l, r) = match p {
        Some(p) => (p.checked_sub(1).map(|q| allowed[q]), allowed.get(p + 1).copied()),
        None => (None, None),
    };
    l.into_iter().chain(r)
}

struct Walker<'a> {
    xs: Vec<f64>,
    allowed: &'a [usize],
    horizon: f64,
    max_steps: usize,
}

impl Walker<'_> {
    /// Number of sequences that extend the current one (itself included).
    fn count(&self, last: usize, steps: usize, used: f64, memo: &mut HashMap<(usize, usize, u64), f64>) -> f64 {
        let key = (last, steps, used.to_bits());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let mut total = 1.0;
        if steps < self.max_steps {
            for n in neighbours(self.allowed, last) {
                let t = used + (self.xs[n] - self.xs[last]).abs();
                if t <= self.horizon {
                    total += self.count(n, steps + 1, t, memo);
                }
            }
        }
        memo.insert(key, total);
        total
    }

    fn collect(&self, seq: &mut Vec<usize>, used: f64, out: &mut Vec<Vec<usize>>) {
        out.push(seq.clone());
        if seq.len() >= self.max_steps {
            return;
        }
        let last = *seq.last().unwrap();
        for n in neighbours(self.allowed, last) {
            let t = used + (self.xs[n] - self.xs[last]).abs();
            if t <= self.horizon {
                seq.push(n);
                self.collect(seq, t, out);
                seq.pop();
            }
        }
    }
}

/// Counts the sequences [`enumerate_agent`] would produce.
pub fn count_agent(config: &MissionConfig, start: f64, horizon: f64, max_steps: usize, allowed: &[usize]) -> f64 {
    let w = Walker { xs: config.targets().iter().map(|t| t.position).collect(), allowed, horizon, max_steps };
    let mut memo = HashMap::new();
    let mut total = 0.0;
    if max_steps > 0 {
        for &i in allowed {
            let t = (w.xs[i] - start).abs();
            if t <= horizon {
                total += w.count(i, 1, t, &mut memo);
            }
        }
    }
    total.max(1.0)
}

/// Depth-first enumeration of visit sequences for one agent.
///
/// The first visit may be any allowed target reachable within the horizon.
/// Later moves go to a neighbouring allowed target only: skipping over a
/// target is the same trajectory as visiting it with zero dwell, so those
/// sequences are covered already. Consecutive repeats never occur. Every
/// prefix is a sequence in its own right. When nothing is reachable the
/// empty sequence (stay put) is returned.
pub fn enumerate_agent(
    config: &MissionConfig,
    start: f64,
    horizon: f64,
    max_steps: usize,
    allowed: &[usize],
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    let estimate = count_agent(config, start, horizon, max_steps, allowed);
    if estimate > cap as f64 {
        return Err(Error::EnumerationCap { estimate, cap });
    }
    let w = Walker { xs: config.targets().iter().map(|t| t.position).collect(), allowed, horizon, max_steps };
    let mut out = Vec::new();
    if max_steps > 0 {
        for &i in allowed {
            let t = (w.xs[i] - start).abs();
            if t <= horizon {
                w.collect(&mut vec![i], t, &mut out);
            }
        }
    }
    if out.is_empty() {
        out.push(Vec::new());
    }
    Ok(out)
}

/// Per-agent sequence lists over all targets. Fails when the joint product
/// exceeds `cap`.
pub fn enumerate_sequences(config: &MissionConfig, horizon: f64, max_steps: usize, cap: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    let all: Vec<usize> = (0..config.num_targets()).collect();
    let mut product = 1.0;
    for a in config.agents() {
        product *= count_agent(config, a.initial_position, horizon, max_steps, &all);
    }
    if product > cap as f64 {
        return Err(Error::EnumerationCap { estimate: product, cap });
    }
    config
        .agents()
        .iter()
        .map(|a| enumerate_agent(config, a.initial_position, horizon, max_steps, &all, cap))
        .collect()
}

/// Closed walks over neighbouring allowed targets with at most `max_len`
/// visits per cycle. Rotations are kept since they differ in where the
/// agent first joins the cycle. A single target (parking) is a cycle of length one.
pub fn closed_walks(allowed: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    fn extend(allowed: &[usize], max_len: usize, walk: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *walk.last().unwrap();
        let first = walk[0];
        if walk.len() >= 2 && neighbours(allowed, last).any(|n| n == first) {
            out.push(walk.clone());
        }
        if walk.len() >= max_len {
            return;
        }
        for n in neighbours(allowed, last) {
            walk.push(n);
            extend(allowed, max_len, walk, out);
            walk.pop();
        }
    }
    let mut out = Vec::new();
    for &i in allowed {
        out.push(vec![i]);
        if max_len >= 2 {
            extend(allowed, max_len, &mut vec![i], &mut out);
        }
    }
    // Drop cycles that are a shorter cycle repeated.
    out.retain(|c| {
        let p = c.len();
        !(1..p).any(|d| p % d == 0 && (0..p).all(|k| c[k] == c[k % d]))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentSpec, Target};

    fn cfg(t: f64) -> MissionConfig {
        let targets = [5.0, 10.0, 15.0].iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
        MissionConfig::new(20.0, targets, vec![AgentSpec::new(0.0, 2.0)], t, false).unwrap()
    }

    #[test]
    fn short_budget_reaches_first_target_only() {
        let c = cfg(9.0);
        let s = enumerate_agent(&c, 0.0, 9.0, 10, &[0, 1, 2], 1000).unwrap();
        assert_eq!(s, vec![vec![0]]);
    }

    #[test]
    fn longer_budget() {
        let c = cfg(15.0);
        let s = enumerate_agent(&c, 0.0, 15.0, 10, &[0, 1, 2], 1000).unwrap();
        assert!(s.contains(&vec![0]) && s.contains(&vec![0, 1]) && s.contains(&vec![1]) && s.contains(&vec![2]));
        assert!(!s.iter().any(|q| q.len() > 1 && q[0] == 2));
        assert!(s.iter().all(|q| q.windows(2).all(|w| w[0] != w[1])));
        assert_eq!(count_agent(&c, 0.0, 15.0, 10, &[0, 1, 2]) as usize, s.len());
    }

    #[test]
    fn cap_is_enforced() {
        let c = cfg(200.0);
        let e = enumerate_agent(&c, 0.0, 200.0, 41, &[0, 1, 2], 1000).unwrap_err();
        assert!(matches!(e, Error::EnumerationCap { .. }));
    }

    #[test]
    fn cycles() {
        let c = closed_walks(&[0, 1, 2], 4);
        assert!(c.contains(&vec![0, 1, 2, 1]));
        assert!(c.contains(&vec![1, 2]));
        assert!(c.contains(&vec![1]));
        assert!(!c.contains(&vec![0, 1, 0, 1]));
        assert!(!c.contains(&vec![0, 2]));
    }
}
