//! Combined descent objective: mean uncertainty plus the decayed field term,
//! averaged over the random realizations drawn for an iteration.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ipa::{gradient_from_trace_only, SensingView};
use crate::model::{MissionConfig, UncertaintyRate};
use crate::potential::{j2_gradient, j2_value, DecayMode, PotentialConfig, PotentialField, TimeWeight};
use crate::sim::{params_cost, simulate_params, TrajectoryParams};
use crate::stochastic::{sub_seed, Cadence, RandomModel};

/// One realization of the mission used during an iteration.
#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    pub config: MissionConfig,
    pub rates: UncertaintyRate,
    field: Option<PotentialField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Value the line search works on. Infinite when agents cross under `no_cross`.
    pub combined: f64,
    /// Mean uncertainty (averaged over realizations).
    pub j1: f64,
    /// Field contribution already multiplied by its weight.
    pub j2: f64,
    pub gradient: Option<Vec<f64>>,
    pub crossed: bool,
}

#[derive(Debug, Clone)]
pub struct Objective {
    config: MissionConfig,
    excitation: PotentialConfig,
    random: RandomModel,
}

impl Objective {
    pub fn new(config: MissionConfig, excitation: PotentialConfig, random: RandomModel) -> Result<Self> {
        if excitation.enabled {
            excitation.validate()?;
        }
        random.validate(&config)?;
        Ok(Objective { config, excitation, random })
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    pub fn random(&self) -> &RandomModel {
        &self.random
    }

    pub fn excitation(&self) -> &PotentialConfig {
        &self.excitation
    }

    /// Realizations drawn for iteration `k`. A deterministic model yields the
    /// nominal mission once.
    pub fn realizations(&self, k: usize) -> Result<Vec<Realization>> {
        let draws: Vec<u64> = if self.random.is_random() {
            let it = match self.random.cadence {
                Cadence::PerIteration => k as u64,
                Cadence::PerRun => 0,
            };
            (0..self.random.samples as u64).map(|r| sub_seed(self.random.master_seed, it, r)).collect()
        } else {
            vec![0]
        };
        draws
            .into_iter()
            .map(|seed| {
                let (config, rates) = self.random.realize(&self.config, seed)?;
                let field = if self.excitation.enabled {
                    Some(PotentialField::new(&config, self.excitation.grid)?)
                } else {
                    None
                };
                Ok(Realization { seed, config, rates, field })
            })
            .collect()
    }

    /// Realizations used to score a final iterate: `count` fresh draws that
    /// are disjoint from every descent iteration.
    pub fn scoring_realizations(&self, count: usize) -> Result<Vec<Realization>> {
        if !self.random.is_random() {
            return self.realizations(0);
        }
        (0..count as u64)
            .map(|r| {
                let seed = sub_seed(self.random.master_seed, u64::MAX, r);
                let (config, rates) = self.random.realize(&self.config, seed)?;
                Ok(Realization { seed, config, rates, field: None })
            })
            .collect()
    }

    /// Multiplier of the field term at iteration `k` (1 in mission-time mode,
    /// where the decay sits inside the time integral).
    pub fn field_multiplier(&self, k: usize) -> f64 {
        if !self.excitation.enabled {
            return 0.0;
        }
        match self.excitation.decay_mode {
            DecayMode::PerIteration => (-self.excitation.beta * k as f64).exp(),
            DecayMode::MissionTime => 1.0,
        }
    }

    fn time_weight(&self) -> TimeWeight {
        match self.excitation.decay_mode {
            DecayMode::PerIteration => TimeWeight::Flat,
            DecayMode::MissionTime => TimeWeight::Exponential(self.excitation.beta),
        }
    }

    fn evaluate_one(&self, params: &TrajectoryParams, real: &Realization, k: usize, gradient: bool) -> Result<Evaluation> {
        let mult = self.field_multiplier(k);
        let use_field = mult > 0.0 && real.field.is_some();
        if !gradient && !use_field {
            let (j1, ok) = params_cost(params, &real.config, &real.rates)?;
            return Ok(Evaluation { combined: j1, j1, j2: 0.0, gradient: None, crossed: self.config.no_cross() && !ok });
        }
        let trace = simulate_params(params, &real.config, &real.rates)?;
        let crossed = self.config.no_cross() && !trace.diagnostics.crossings.is_empty();
        let j1 = trace.cost;
        let layout = params.layout();
        let view = SensingView::from_config(&real.config);
        let (j2, grad) = match (&real.field, use_field, gradient) {
            (Some(f), true, true) => {
                let (v, g2) = j2_gradient(&trace, f, &view, &layout, self.time_weight())?;
                let mut g = gradient_from_trace_only(&trace, &view, &layout)?;
                for (a, b) in g.iter_mut().zip(&g2) {
                    *a += mult * b;
                }
                (mult * v, Some(g))
            }
            (Some(f), true, false) => (mult * j2_value(&trace, f, self.time_weight()), None),
            _ => (0.0, if gradient { Some(gradient_from_trace_only(&trace, &view, &layout)?) } else { None }),
        };
        Ok(Evaluation { combined: j1 + j2, j1, j2, gradient: grad, crossed })
    }

    /// Averages value (and optionally gradient) over the realizations.
    pub fn evaluate(&self, params: &TrajectoryParams, reals: &[Realization], k: usize, gradient: bool) -> Result<Evaluation> {
        if reals.is_empty() {
            return Err(Error::Config("no realizations to evaluate".into()));
        }
        let parts: Vec<Evaluation> = reals
            .par_iter()
            .map(|r| self.evaluate_one(params, r, k, gradient))
            .collect::<Result<_>>()?;
        let n = parts.len() as f64;
        let j1 = parts.iter().map(|e| e.j1).sum::<f64>() / n;
        let j2 = parts.iter().map(|e| e.j2).sum::<f64>() / n;
        let crossed = parts.iter().any(|e| e.crossed);
        let grad = if gradient {
            let len = params.layout().len;
            let mut g = vec![0.0; len];
            for e in &parts {
                for (a, b) in g.iter_mut().zip(e.gradient.as_ref().unwrap()) {
                    *a += b / n;
                }
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
            Some(g)
        } else {
            None
        };
        let combined = if crossed { f64::INFINITY } else { j1 + j2 };
        Ok(Evaluation { combined, j1, j2, gradient: grad, crossed })
    }

    /// Mean and sample standard deviation of the uncertainty cost over
    /// scoring realizations.
    pub fn score(&self, params: &TrajectoryParams, count: usize) -> Result<(f64, f64)> {
        let reals = self.scoring_realizations(count)?;
        let costs: Vec<f64> = reals
            .par_iter()
            .map(|r| params_cost(params, &r.config, &r.rates).map(|c| c.0))
            .collect::<Result<_>>()?;
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = if costs.len() > 1 { costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Ok((mean, var.sqrt()))
    }
}
