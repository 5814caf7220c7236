//! Cross-entropy-method baseline over the weights of a small deterministic
//! policy network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::env::{run_episode, EnvState, Features, MicrogridParams, STATE_DIM};
use crate::error::{Error, Result};
use crate::experiment::metrics::EpisodeMetrics;
use crate::ndiff::{ActionBounds, Activation, Mlp, MlpSpec};
use crate::policies::Policy;
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub init_mean: f64,
    pub init_sd: f64,
    pub sd_floor: f64,
    pub generations: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 50,
            elite_fraction: 0.2,
            init_mean: 0.0,
            init_sd: 0.5,
            sd_floor: 0.01,
            generations: 40,
            hidden: vec![16],
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("cem: population must be >= 2".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config("cem: elite_fraction must lie in (0, 1]".into()));
        }
        if !(self.sd_floor > 0.0) || !(self.init_sd >= 0.0) {
            return Err(Error::Config("cem: need sd_floor > 0 and init_sd >= 0".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("cem: need at least one hidden layer".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population)
    }

    /// Policy network: tanh everywhere, output scaled to the action bounds.
    pub fn policy_spec(&self) -> MlpSpec {
        let mut w = vec![STATE_DIM];
        w.extend(&self.hidden);
        w.push(1);
        MlpSpec::new(w, Activation::Tanh, Activation::Tanh).expect("validated widths")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub mean_fitness: f64,
    pub best_fitness: f64,
    pub best_ever: f64,
    /// Smallest sampling SD used this generation.
    pub min_sd: f64,
    /// Sampling mean after the refit.
    pub mean: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CemResult {
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationStats>,
}

/// Maximises `objective` over `dim` parameters with a diagonal Gaussian.
///
/// Candidates are drawn before any is scored, so parallel scoring leaves
/// the result unchanged.
pub fn cem_optimize<F>(dim: usize, cfg: &CemConfig, objective: F) -> Result<CemResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = vec![cfg.init_mean; dim];
    let mut sd = vec![cfg.init_sd.max(cfg.sd_floor); dim];
    let n_elite = cfg.elite_count();
    let mut best_params = mean.clone();
    let mut best_fitness = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.generations);

    for generation in 0..cfg.generations {
        let candidates: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| {
                (0..dim)
                    .map(|k| {
                        let z: f64 = rng.sample(StandardNormal);
                        mean[k] + sd[k] * z
                    })
                    .collect()
            })
            .collect();
        let fitness: Vec<f64> = candidates
            .par_iter()
            .map(|c| objective(c))
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        if fitness[order[0]] > best_fitness {
            best_fitness = fitness[order[0]];
            best_params = candidates[order[0]].clone();
        }

        let min_sd = sd.iter().copied().fold(f64::INFINITY, f64::min);
        let elites = &order[..n_elite];
        for k in 0..dim {
            let m = elites.iter().map(|&i| candidates[i][k]).sum::<f64>() / n_elite as f64;
            let var = elites.iter().map(|&i| (candidates[i][k] - m).powi(2)).sum::<f64>() / n_elite as f64;
            mean[k] = m;
            sd[k] = var.sqrt().max(cfg.sd_floor);
        }

        history.push(GenerationStats {
            generation,
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best_fitness: fitness[order[0]],
            best_ever: best_fitness,
            min_sd,
            mean: mean.clone(),
        });
    }
    Ok(CemResult {
        best_params,
        best_fitness,
        history,
    })
}

/// Deterministic policy network used by CEM.
#[derive(Clone, Debug)]
pub struct CemPolicy {
    pub net: Mlp,
    pub bounds: ActionBounds,
}

impl Policy for CemPolicy {
    fn act(&mut self, _state: &EnvState, features: &Features) -> f64 {
        let out = self.net.forward_row(features)[0];
        self.bounds.mid() + self.bounds.half_width() * out
    }
}

#[derive(Clone, Debug)]
pub struct CemOutcome {
    pub best: CemPolicy,
    pub best_reward: f64,
    pub metrics: Vec<EpisodeMetrics>,
    pub history: Vec<GenerationStats>,
}

/// Fitness is the reported reward of one deterministic episode.
pub fn cem_train(scenario: &Scenario, params: &MicrogridParams, cfg: &CemConfig) -> Result<CemOutcome> {
    params.validate()?;
    let spec = cfg.policy_spec();
    let bounds = crate::sac::bounds_of(params);
    let rollout = |theta: &[f64]| -> Result<f64> {
        let mut policy = CemPolicy {
            net: Mlp::from_params(spec.clone(), theta.to_vec())?,
            bounds,
        };
        Ok(run_episode(&mut policy, scenario, params, 0)?.1.reported_reward)
    };
    let res = cem_optimize(spec.param_count(), cfg, rollout)?;
    let metrics = res
        .history
        .iter()
        .map(|h| EpisodeMetrics {
            episode: h.generation,
            rho: 0.0,
            reported_reward: h.mean_fitness,
            penalty_count: 0,
            eval_reward: h.best_ever,
            wall_seconds: 0.0,
        })
        .collect();
    Ok(CemOutcome {
        best: CemPolicy {
            net: Mlp::from_params(spec, res.best_params)?,
            bounds,
        },
        best_reward: res.best_fitness,
        metrics,
        history: res.history,
    })
}
