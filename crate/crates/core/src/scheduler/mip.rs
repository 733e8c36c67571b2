//! Export of the visit-assignment model in CPLEX LP text form.
//!
//! Binary `a_j_i_k` is 1 when agent `j` sits at target `i` on step `k`.
//! Position, travel and dwell are continuous per step. The travel time is
//! linearized with the usual pair of inequalities. The true objective (mean
//! uncertainty) is not linear in the dwell times, so the file carries a
//! linear surrogate that an external solver can replace.

use std::fmt::Write;

use crate::model::MissionConfig;

/// Appends `label: t1 t2 ...` with at most eight terms per line, since LP
/// readers cap line length.
fn row(s: &mut String, label: &str, terms: &[String], tail: &str) {
    let _ = write!(s, " {label}:");
    for (k, t) in terms.iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            s.push_str("\n   ");
        }
        let _ = write!(s, " {t}");
    }
    let _ = writeln!(s, "{tail}");
}

/// LP text for `steps` visits per agent over the configured horizon.
pub fn export_lp(config: &MissionConfig, steps: usize) -> String {
    let m = config.num_targets();
    let n = config.num_agents();
    let xs: Vec<f64> = config.targets().iter().map(|t| t.position).collect();
    let horizon = config.horizon();
    let mut s = String::new();
    let _ = writeln!(s, "\\ Visit assignment for {n} agent(s), {m} targets, {steps} steps, horizon {horizon}");
    let _ = writeln!(s, "\\ Objective: total travel time (linear surrogate for the mean uncertainty)");
    s.push_str("Minimize\n");
    let obj: Vec<String> = (1..=n).flat_map(|j| (1..=steps).map(move |k| format!("+ dt_{j}_{k}"))).collect();
    row(&mut s, "obj", &obj, "");
    s.push_str("Subject To\n");
    for j in 1..=n {
        let start = config.agents()[j - 1].initial_position;
        for k in 1..=steps {
            let a: Vec<String> = (1..=m).map(|i| format!("+ a_{j}_{i}_{k}")).collect();
            row(&mut s, &format!("assign_{j}_{k}"), &a, " = 1");
            let mut p = vec![format!("p_{j}_{k}")];
            p.extend((1..=m).map(|i| format!("- {} a_{j}_{i}_{k}", xs[i - 1])));
            row(&mut s, &format!("pos_{j}_{k}"), &p, " = 0");
            if k == 1 {
                let _ = writeln!(s, " up_{j}_{k}: dt_{j}_{k} - p_{j}_{k} >= {}", -start);
                let _ = writeln!(s, " down_{j}_{k}: dt_{j}_{k} + p_{j}_{k} >= {start}");
            } else {
                let q = k - 1;
                let _ = writeln!(s, " up_{j}_{k}: dt_{j}_{k} - p_{j}_{k} + p_{j}_{q} >= 0");
                let _ = writeln!(s, " down_{j}_{k}: dt_{j}_{k} + p_{j}_{k} - p_{j}_{q} >= 0");
                for i in 1..=m {
                    let _ = writeln!(s, " repeat_{j}_{i}_{k}: a_{j}_{i}_{q} + a_{j}_{i}_{k} <= 1");
                }
            }
        }
        let b: Vec<String> = (1..=steps).flat_map(|k| [format!("+ dt_{j}_{k}"), format!("+ dd_{j}_{k}")]).collect();
        row(&mut s, &format!("budget_{j}"), &b, &format!(" <= {horizon}"));
    }
    s.push_str("Bounds\n");
    for j in 1..=n {
        for k in 1..=steps {
            let _ = writeln!(s, " {} <= p_{j}_{k} <= {}", xs[0], xs[m - 1]);
            let _ = writeln!(s, " dt_{j}_{k} >= 0");
            let _ = writeln!(s, " dd_{j}_{k} >= 0");
        }
    }
    s.push_str("Binary\n");
    for j in 1..=n {
        for k in 1..=steps {
            for i in 1..=m {
                let _ = writeln!(s, " a_{j}_{i}_{k}");
            }
        }
    }
    s.push_str("End\n");
    s
}
