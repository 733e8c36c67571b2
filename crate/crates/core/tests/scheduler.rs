use pmon_core::scheduler::*;
use pmon_core::sim::simulate_params;
use pmon_core::{AgentSpec, Error, MissionConfig, Target, UncertaintyRate};

fn line(xs: &[f64], start: f64, horizon: f64) -> MissionConfig {
    let targets = xs.iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
    MissionConfig::new(20.0, targets, vec![AgentSpec::new(start, 2.0)], horizon, false).unwrap()
}

fn sim_cost(s: &VisitSchedule, cfg: &MissionConfig) -> f64 {
    simulate_params(&s.to_params(cfg), cfg, &UncertaintyRate::Deterministic).unwrap().cost
}

#[test]
fn enumeration_respects_budget() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 9.0);
    let s = enumerate_sequences(&c, 9.0, 10, 1000).unwrap();
    assert_eq!(s, vec![vec![vec![0]]]);
    let s = &enumerate_sequences(&c, 15.0, 10, 1000).unwrap()[0];
    for want in [vec![0], vec![0, 1], vec![1]] {
        assert!(s.contains(&want), "missing {want:?}");
    }
    assert!(s.iter().all(|q| q.windows(2).all(|w| w[0] != w[1])));
    assert_eq!(default_max_steps(&c, 100.0), 21);
}

#[test]
fn single_visit_dwells_to_horizon() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 30.0);
    let s = optimize_dwells(&[0], &c, &ScheduleOptions::default()).unwrap();
    assert_eq!(s.agents[0].arrival, vec![5.0]);
    assert_eq!(s.agents[0].dwell, vec![25.0]);
    assert!(matches!(optimize_dwells(&[], &c, &ScheduleOptions::default()), Err(Error::Infeasible(_))));
    assert!(matches!(optimize_dwells(&[2, 0, 2, 0], &c, &ScheduleOptions::default()), Err(Error::Infeasible(_))));
}

#[test]
fn mirrored_orders_give_mirrored_timing() {
    let c = line(&[5.0, 15.0], 10.0, 40.0);
    let opts = ScheduleOptions::default();
    let a = optimize_dwells(&[0, 1, 0], &c, &opts).unwrap();
    let b = optimize_dwells(&[1, 0, 1], &c, &opts).unwrap();
    assert!((a.cost - b.cost).abs() < 1e-9, "{} vs {}", a.cost, b.cost);
    for (x, y) in a.agents[0].dwell.iter().zip(&b.agents[0].dwell) {
        assert!((x - y).abs() < 1e-6);
    }
    let best = solve(&c, &opts).unwrap();
    assert!(best.cost <= a.cost + 1e-12);
}

#[test]
fn reported_cost_is_the_simulator_cost() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 40.0);
    let s = solve(&c, &ScheduleOptions::default()).unwrap();
    assert_eq!(s.cost, sim_cost(&s, &c));
    for a in &s.agents {
        let total: f64 = a.travel.iter().chain(&a.dwell).sum();
        assert!(total <= 40.0 + 1e-9);
        assert!(a.dwell.iter().all(|&d| d >= 0.0));
    }
}

/// Best cost over every sequence with at most four visits, dwell times on a
/// 0.1 grid. Also returns the largest cost change between neighbouring grid
/// points, which bounds how far the grid can be from the continuous optimum.
fn grid_oracle(c: &MissionConfig) -> (f64, f64) {
    let seqs = enumerate_agent(c, 0.0, c.horizon(), 4, &[0, 1, 2], 1_000_000).unwrap();
    let xs: Vec<f64> = c.targets().iter().map(|t| t.position).collect();
    let mut best = f64::INFINITY;
    let mut step = 0.0f64;
    for s in seqs {
        let mut travel = 0.0;
        let mut pos = 0.0;
        for &i in &s {
            travel += (xs[i] - pos).abs();
            pos = xs[i];
        }
        let n = ((c.horizon() - travel) / 0.1 + 1e-9).floor() as usize;
        let free = s.len() - 1;
        let mut idx = vec![0usize; free];
        let cost = |idx: &[usize]| {
            let p = pmon_core::sim::TrajectoryParams {
                agents: vec![pmon_core::sim::AgentParams {
                    theta: s.iter().map(|&i| xs[i]).collect(),
                    omega: idx.iter().map(|&k| k as f64 * 0.1).collect(),
                }],
            };
            simulate_params(&p, c, &UncertaintyRate::Deterministic).unwrap().cost
        };
        loop {
            if idx.iter().sum::<usize>() <= n {
                let v = cost(&idx);
                best = best.min(v);
                for q in 0..free {
                    if idx.iter().sum::<usize>() < n {
                        let mut nb = idx.clone();
                        nb[q] += 1;
                        step = step.max((cost(&nb) - v).abs());
                    }
                }
            }
            // Odometer over the dwell grid.
            let mut q = 0;
            while q < free {
                idx[q] += 1;
                if idx[q] <= n {
                    break;
                }
                idx[q] = 0;
                q += 1;
            }
            if q == free {
                break;
            }
        }
    }
    (best, step)
}

#[test]
fn matches_dwell_grid_oracle() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 24.0);
    let (best, step) = grid_oracle(&c);
    let opts = ScheduleOptions { max_steps: Some(4), ..Default::default() };
    let s = solve(&c, &opts).unwrap();
    println!("solve {} grid {} resolution {}", s.cost, best, step);
    assert!(s.cost <= best + step, "solve {} grid {} resolution {}", s.cost, best, step);
    assert!(s.agents[0].sequence.len() <= 4);
}

#[test]
fn extension_of_full_window_is_identity() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 40.0);
    let s = solve(&c, &ScheduleOptions::default()).unwrap();
    let e = extend_periodic(&c, &s, 0.5).unwrap();
    assert_eq!(e.agents, s.agents);
    assert_eq!(e.cost, s.cost);
}

#[test]
fn tiling_covers_long_horizon() {
    let c = line(&[5.0, 10.0, 15.0], 5.0, 500.0);
    let w = VisitSchedule {
        agents: vec![AgentSchedule {
            sequence: vec![1, 0],
            arrival: vec![5.0, 12.0],
            travel: vec![5.0, 5.0],
            dwell: vec![2.0, 48.0],
            cycle: None,
        }],
        horizon: 60.0,
        cost: 0.0,
    };
    let e = extend_periodic(&c, &w, 0.5).unwrap();
    let a = &e.agents[0];
    // Eight full windows plus a 20 s tail that still fits both visits.
    assert_eq!(a.sequence.len(), 18);
    for k in 0..9 {
        assert!((a.arrival[2 * k] - (60.0 * k as f64 + 5.0)).abs() < 1e-9);
        assert!((a.arrival[2 * k + 1] - (60.0 * k as f64 + 12.0)).abs() < 1e-9);
    }
    assert!((a.dwell[17] - 8.0).abs() < 1e-9);
    assert_eq!(e.cost, sim_cost(&e, &c));
}

#[test]
fn refuses_to_tile_open_schedule() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 200.0);
    let s = solve(&c.with_horizon(30.0).unwrap(), &ScheduleOptions::default()).unwrap();
    assert!(matches!(extend_periodic(&c, &s, 0.5), Err(Error::Aperiodic(_))));
}

#[test]
fn cyclic_schedule_extends_by_cycling() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 200.0);
    let opts = ScheduleOptions { periodic: true, window: Some(50.0), max_cycle_len: 4, ..Default::default() };
    let w = solve(&c, &opts).unwrap();
    assert_eq!(w.horizon, 50.0);
    let e = solve_extended(&c, &opts).unwrap();
    assert_eq!(e.horizon, 200.0);
    let cyc = e.agents[0].cycle.clone().unwrap();
    let seq = &e.agents[0].sequence;
    for (k, &i) in seq.iter().enumerate() {
        assert_eq!(i, cyc.targets[k % cyc.targets.len()]);
    }
    assert_eq!(e.cost, sim_cost(&e, &c));
}

#[test]
fn long_horizon_hits_cap() {
    let c = line(&[5.0, 10.0, 15.0], 0.0, 500.0);
    match solve(&c, &ScheduleOptions::default()) {
        Err(Error::EnumerationCap { estimate, cap }) => assert!(estimate > cap as f64),
        other => panic!("expected cap error, got {other:?}"),
    }
}

#[test]
fn two_agents_stay_ordered() {
    let targets = [4.0, 8.0, 12.0].iter().map(|&x| Target::new(x, 1.0, 5.0, 1.0)).collect();
    let c = MissionConfig::new(16.0, targets, vec![AgentSpec::new(0.0, 2.0), AgentSpec::new(14.0, 2.0)], 20.0, true).unwrap();
    for joint in [JointSearch::Exhaustive, JointSearch::Partitioned] {
        let s = solve(&c, &ScheduleOptions { joint, ..Default::default() }).unwrap();
        assert!(s.cost.is_finite());
        let tr = simulate_params(&s.to_params(&c), &c, &UncertaintyRate::Deterministic).unwrap();
        assert!(tr.diagnostics.crossings.is_empty());
        assert_eq!(s.cost, tr.cost);
    }
}
