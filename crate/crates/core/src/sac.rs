//! Soft actor-critic with a learned temperature, trained from a mix of
//! rule-based demonstrations and the agent's own experience.
//!
//! Vanilla SAC is the same loop with no demonstration buffer and `rho = 0`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::env::{Env, EnvState, Features, MicrogridParams, Transition, STATE_DIM};
use crate::error::{Error, Result};
use crate::experiment::metrics::EpisodeMetrics;
use crate::ndiff::{
    squashed_gaussian_action, squashed_sample, ActionBounds, Activation, AdamState, Checkpoint, Graph, Mlp, MlpSpec,
    Tensor, Var,
};
use crate::policies::{collect_demonstrations, Policy, ThresholdRule};
use crate::replay::{sample_joint, ReplayBuffer, RhoSchedule};
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub target_entropy: f64,
    pub init_log_alpha: f64,
    pub updates_per_step: usize,
    /// Uniform-random steps before learning starts; only used without
    /// demonstrations.
    pub warmup_steps: usize,
    pub episodes: usize,
    pub schedule: RhoSchedule,
    /// Multiplies rewards before they enter the critic targets.
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Experience buffer capacity; `None` picks `min(2 * E * T, 10^6)`.
    pub buffer_capacity: Option<usize>,
    pub record_wall_time: bool,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 256,
            target_entropy: -1.0,
            init_log_alpha: 0.0,
            updates_per_step: 1,
            warmup_steps: 1000,
            episodes: 200,
            schedule: RhoSchedule::Linear { total_episodes: 200 },
            reward_scale: 1e-3,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            buffer_capacity: None,
            record_wall_time: false,
            seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("sac: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("need at least one hidden layer of width >= 1");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.lr_alpha >= 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.reward_scale > 0.0) {
            return fail("reward_scale must be positive");
        }
        if self.buffer_capacity == Some(0) {
            return fail("buffer_capacity must be >= 1");
        }
        self.schedule.rho(0)?;
        Ok(())
    }

    pub fn actor_spec(&self) -> MlpSpec {
        let mut w = vec![STATE_DIM];
        w.extend(&self.hidden);
        w.push(2);
        MlpSpec::new(w, self.activation, Activation::Linear).expect("validated widths")
    }

    pub fn critic_spec(&self) -> MlpSpec {
        let mut w = vec![STATE_DIM + 1];
        w.extend(&self.hidden);
        w.push(1);
        MlpSpec::new(w, self.activation, Activation::Linear).expect("validated widths")
    }
}

/// Actor, twin critics, their targets and the log-temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct SacNetworks {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub log_alpha: f64,
}

impl SacNetworks {
    pub fn init<R: Rng>(cfg: &SacConfig, rng: &mut R) -> Self {
        let actor = Mlp::init(cfg.actor_spec(), rng);
        let critic1 = Mlp::init(cfg.critic_spec(), rng);
        let critic2 = Mlp::init(cfg.critic_spec(), rng);
        SacNetworks {
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha: cfg.init_log_alpha,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (name, net) in [
            ("actor", &self.actor),
            ("critic1", &self.critic1),
            ("critic2", &self.critic2),
            ("target1", &self.target1),
            ("target2", &self.target2),
        ] {
            ck.push(name, net.spec.to_string(), net.params.clone());
        }
        ck.push("log_alpha", "scalar", vec![self.log_alpha]);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let net = |name: &str| -> Result<Mlp> {
            let e = ck.require(name)?;
            let spec: MlpSpec = e.meta.parse()?;
            Ok(Mlp::from_params(spec, e.values.clone())?)
        };
        let la = ck.require("log_alpha")?;
        let [log_alpha] = la.values[..] else {
            return Err(Error::Checkpoint("log_alpha must hold one value".into()));
        };
        Ok(SacNetworks {
            actor: net("actor")?,
            critic1: net("critic1")?,
            critic2: net("critic2")?,
            target1: net("target1")?,
            target2: net("target2")?,
            log_alpha,
        })
    }
}

/// Loads just the actor from a checkpoint.
pub fn load_actor(ck: &Checkpoint) -> Result<Mlp> {
    let e = ck.require("actor")?;
    let spec: MlpSpec = e.meta.parse()?;
    Ok(Mlp::from_params(spec, e.values.clone())?)
}

/// Column-stacked view of a list of transitions.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Tensor,
    /// Executed actions in MW, `n x 1`.
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let states: Vec<Features> = ts.iter().map(|t| t.state).collect();
        let next: Vec<Features> = ts.iter().map(|t| t.next_state).collect();
        let actions: Vec<f64> = ts.iter().map(|t| t.action).collect();
        Ok(Batch {
            states: Tensor::from_rows(&states)?,
            actions: Tensor::column(&actions),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: Tensor::from_rows(&next)?,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Standard-normal draws consumed by one gradient update.
#[derive(Clone, Debug)]
pub struct UpdateNoise {
    /// For the next-state action in the critic target.
    pub next: Tensor,
    /// For the reparameterised actor sample.
    pub current: Tensor,
}

impl UpdateNoise {
    pub fn sample<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut draw = || Tensor::column(&(0..n).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>());
        UpdateNoise {
            next: draw(),
            current: draw(),
        }
    }
}

fn normalize_actions(actions: &Tensor, bounds: ActionBounds) -> Tensor {
    actions.map(|a| (a - bounds.mid()) / bounds.half_width())
}

fn with_action(states: &Tensor, norm_actions: &Tensor) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = (0..states.rows())
        .map(|i| {
            let mut r = states.row(i).to_vec();
            r.push(norm_actions.data()[i]);
            r
        })
        .collect();
    Ok(Tensor::from_rows(&rows)?)
}

/// Bootstrapped critic targets. Episode ends are truncations, so every
/// transition bootstraps from its successor.
pub fn critic_targets(
    nets: &SacNetworks,
    batch: &Batch,
    cfg: &SacConfig,
    bounds: ActionBounds,
    noise: &Tensor,
) -> Result<Vec<f64>> {
    let heads = nets.actor.forward(&batch.next_states)?;
    let alpha = nets.alpha();
    let mut next_norm = Vec::with_capacity(batch.len());
    let mut next_logp = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (a, lp) = squashed_sample(heads.get(i, 0), heads.get(i, 1), noise.data()[i], bounds)?;
        next_norm.push((a - bounds.mid()) / bounds.half_width());
        next_logp.push(lp);
    }
    let x = with_action(&batch.next_states, &Tensor::column(&next_norm))?;
    let q1 = nets.target1.forward(&x)?;
    let q2 = nets.target2.forward(&x)?;
    Ok((0..batch.len())
        .map(|i| {
            let soft_v = q1.data()[i].min(q2.data()[i]) - alpha * next_logp[i];
            cfg.reward_scale * batch.rewards[i] + cfg.gamma * soft_v
        })
        .collect())
}

/// Critic loss on a graph: the sum of both critics' mean squared errors.
pub struct CriticGraph {
    pub graph: Graph,
    pub loss: Var,
    pub critic1_vars: Vec<Var>,
    pub critic2_vars: Vec<Var>,
}

pub fn critic_loss_graph(nets: &SacNetworks, batch: &Batch, targets: &[f64], bounds: ActionBounds) -> Result<CriticGraph> {
    let mut g = Graph::new();
    let x = with_action(&batch.states, &normalize_actions(&batch.actions, bounds))?;
    let x = g.constant(x)?;
    let y = g.constant(Tensor::column(targets))?;
    let c1 = nets.critic1.bind(&mut g, true)?;
    let c2 = nets.critic2.bind(&mut g, true)?;
    let q1 = nets.critic1.forward_graph(&mut g, &c1, x)?;
    let q2 = nets.critic2.forward_graph(&mut g, &c2, x)?;
    let d1 = g.sub(q1, y)?;
    let d2 = g.sub(q2, y)?;
    let s1 = g.square(d1)?;
    let s2 = g.square(d2)?;
    let l1 = g.mean(s1)?;
    let l2 = g.mean(s2)?;
    let loss = g.add(l1, l2)?;
    Ok(CriticGraph {
        graph: g,
        loss,
        critic1_vars: c1,
        critic2_vars: c2,
    })
}

/// Actor objective `mean(alpha * log_pi - min(Q1, Q2))` with the critics
/// held fixed.
pub struct ActorGraph {
    pub graph: Graph,
    pub loss: Var,
    pub actor_vars: Vec<Var>,
    pub log_prob: Var,
}

pub fn actor_loss_graph(nets: &SacNetworks, batch: &Batch, bounds: ActionBounds, noise: &Tensor) -> Result<ActorGraph> {
    let mut g = Graph::new();
    let s = g.constant(batch.states.clone())?;
    let av = nets.actor.bind(&mut g, true)?;
    let heads = nets.actor.forward_graph(&mut g, &av, s)?;
    let mean = g.column(heads, 0)?;
    let log_std = g.column(heads, 1)?;
    let (action, log_prob) = squashed_gaussian_action(&mut g, mean, log_std, noise, bounds)?;
    let centered = g.offset(action, -bounds.mid())?;
    let norm = g.scale(centered, 1.0 / bounds.half_width())?;
    let x = g.concat(s, norm)?;
    let c1 = nets.critic1.bind(&mut g, false)?;
    let c2 = nets.critic2.bind(&mut g, false)?;
    let q1 = nets.critic1.forward_graph(&mut g, &c1, x)?;
    let q2 = nets.critic2.forward_graph(&mut g, &c2, x)?;
    let q = g.min(q1, q2)?;
    let ent = g.scale(log_prob, nets.alpha())?;
    let obj = g.sub(ent, q)?;
    let loss = g.mean(obj)?;
    Ok(ActorGraph {
        graph: g,
        loss,
        actor_vars: av,
        log_prob,
    })
}

/// Temperature objective `mean(-alpha * (log_pi + target_entropy))` with
/// `alpha = exp(log_alpha)` and `log_pi` held fixed.
pub fn alpha_loss_graph(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> Result<(Graph, Var, Var)> {
    let mut g = Graph::new();
    let la = g.param(Tensor::scalar(log_alpha))?;
    let alpha = g.exp(la)?;
    let shifted: Vec<f64> = log_probs.iter().map(|lp| lp + target_entropy).collect();
    let c = g.constant(Tensor::column(&shifted))?;
    let prod = g.mul_scalar(c, alpha)?;
    let m = g.mean(prod)?;
    let loss = g.neg(m)?;
    Ok((g, loss, la))
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

/// Networks plus optimiser state.
#[derive(Clone, Debug)]
pub struct SacLearner {
    pub cfg: SacConfig,
    pub nets: SacNetworks,
    pub bounds: ActionBounds,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    alpha_opt: AdamState,
}

impl SacLearner {
    pub fn new<R: Rng>(cfg: SacConfig, bounds: ActionBounds, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let nets = SacNetworks::init(&cfg, rng);
        Ok(SacLearner::from_networks(cfg, bounds, nets))
    }

    pub fn from_networks(cfg: SacConfig, bounds: ActionBounds, nets: SacNetworks) -> Self {
        SacLearner {
            actor_opt: AdamState::new(nets.actor.params.len(), cfg.lr_actor),
            critic1_opt: AdamState::new(nets.critic1.params.len(), cfg.lr_critic),
            critic2_opt: AdamState::new(nets.critic2.params.len(), cfg.lr_critic),
            alpha_opt: AdamState::new(1, cfg.lr_alpha),
            cfg,
            nets,
            bounds,
        }
    }

    /// One gradient step on both critics; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &Batch, noise: &UpdateNoise) -> Result<f64> {
        let targets = critic_targets(&self.nets, batch, &self.cfg, self.bounds, &noise.next)?;
        let cg = critic_loss_graph(&self.nets, batch, &targets, self.bounds)?;
        let loss = cg.graph.value(cg.loss).item();
        let grads = cg.graph.backward(cg.loss)?;
        let g1 = self.nets.critic1.collect_grads(&grads, &cg.critic1_vars);
        let g2 = self.nets.critic2.collect_grads(&grads, &cg.critic2_vars);
        self.critic1_opt.update(&mut self.nets.critic1.params, &g1)?;
        self.critic2_opt.update(&mut self.nets.critic2.params, &g2)?;
        Ok(loss)
    }

    /// One step on the actor and one on the log-temperature, both from the
    /// same reparameterised sample.
    pub fn actor_and_alpha_update(&mut self, batch: &Batch, noise: &UpdateNoise) -> Result<(f64, f64)> {
        let ag = actor_loss_graph(&self.nets, batch, self.bounds, &noise.current)?;
        let actor_loss = ag.graph.value(ag.loss).item();
        let log_probs = ag.graph.value(ag.log_prob).data().to_vec();
        let grads = ag.graph.backward(ag.loss)?;
        let ga = self.nets.actor.collect_grads(&grads, &ag.actor_vars);
        self.actor_opt.update(&mut self.nets.actor.params, &ga)?;

        let (g, loss, la) = alpha_loss_graph(self.nets.log_alpha, &log_probs, self.cfg.target_entropy)?;
        let alpha_loss = g.value(loss).item();
        let grads = g.backward(loss)?;
        let dla = grads.wrt(la).map_or(0.0, Tensor::item);
        let mut p = [self.nets.log_alpha];
        self.alpha_opt.update(&mut p, &[dla])?;
        self.nets.log_alpha = p[0];
        Ok((actor_loss, alpha_loss))
    }

    pub fn soft_update_targets(&mut self) {
        soft_update(&mut self.nets.target1, &self.nets.critic1, self.cfg.tau);
        soft_update(&mut self.nets.target2, &self.nets.critic2, self.cfg.tau);
    }

    /// Full update: critics, actor and temperature, then target smoothing.
    pub fn update<R: Rng>(&mut self, transitions: &[Transition], rng: &mut R) -> Result<UpdateStats> {
        let batch = Batch::from_transitions(transitions)?;
        let noise = UpdateNoise::sample(batch.len(), rng);
        let critic_loss = self.critic_update(&batch, &noise)?;
        let (actor_loss, alpha_loss) = self.actor_and_alpha_update(&batch, &noise)?;
        self.soft_update_targets();
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha: self.nets.alpha(),
        })
    }

    /// Stochastic action in MW.
    pub fn sample_action<R: Rng>(&self, features: &Features, rng: &mut R) -> Result<f64> {
        let h = self.nets.actor.forward_row(features);
        let z: f64 = rng.sample(StandardNormal);
        Ok(squashed_sample(h[0], h[1], z, self.bounds)?.0)
    }
}

/// Deterministic actor: the squashed mean.
#[derive(Clone, Debug)]
pub struct ActorPolicy<'a> {
    pub actor: &'a Mlp,
    pub bounds: ActionBounds,
}

impl Policy for ActorPolicy<'_> {
    fn act(&mut self, _state: &EnvState, features: &Features) -> f64 {
        let h = self.actor.forward_row(features);
        self.bounds.squash(h[0])
    }
}

pub fn bounds_of(params: &MicrogridParams) -> ActionBounds {
    ActionBounds {
        low: params.p_b_min,
        high: params.p_b_max,
    }
}

/// Reported reward (negated grid cost) of a deterministic rollout of the
/// actor's mean action.
pub fn evaluate(actor: &Mlp, scenario: &Scenario, params: &MicrogridParams) -> Result<f64> {
    let mut policy = ActorPolicy {
        actor,
        bounds: bounds_of(params),
    };
    let (_, m) = crate::env::run_episode(&mut policy, scenario, params, 0)?;
    Ok(m.reported_reward)
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub learner: SacLearner,
    /// Actor with the highest evaluation reward seen.
    pub best_actor: Mlp,
    pub best_eval_reward: f64,
    pub demo_checksum_before: Option<u64>,
    pub demo_checksum_after: Option<u64>,
    /// Executed actions all stayed within the action bounds.
    pub actions_in_bounds: bool,
    pub min_alpha: f64,
}

/// Runs the demonstration episode (if a rule is given) and then
/// `cfg.episodes` training episodes with one batch of updates per step.
pub fn train(
    scenario: &Scenario,
    params: &MicrogridParams,
    demo_rule: Option<&ThresholdRule>,
    cfg: &SacConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = Env::new(scenario, params.clone())?;
    let bounds = bounds_of(params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut learner = SacLearner::new(cfg.clone(), bounds, &mut rng)?;

    let horizon = scenario.horizon();
    let mut demo = ReplayBuffer::new(horizon.max(1));
    if let Some(rule) = demo_rule {
        for t in collect_demonstrations(rule, scenario, params)? {
            demo.push(t);
        }
    }
    let has_demos = !demo.is_empty();
    let demo_checksum_before = has_demos.then(|| demo.checksum());
    let capacity = cfg
        .buffer_capacity
        .unwrap_or_else(|| (2 * cfg.episodes * horizon).clamp(1, 1_000_000));
    let mut exp = ReplayBuffer::new(capacity);
    let warmup = if has_demos { 0 } else { cfg.warmup_steps };

    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut best_actor = learner.nets.actor.clone();
    let mut best_eval = f64::NEG_INFINITY;
    let mut total_steps = 0usize;
    let mut actions_in_bounds = true;
    let mut min_alpha = learner.nets.alpha();

    for episode in 0..cfg.episodes {
        let started = Instant::now();
        let rho = if has_demos { cfg.schedule.rho(episode)? } else { 0.0 };
        env.reset();
        let mut cost = 0.0;
        let mut penalties = 0;
        while !env.is_done() {
            let obs = env.observation();
            let action = if total_steps < warmup {
                rng.gen_range(bounds.low..=bounds.high)
            } else {
                learner.sample_action(&obs, &mut rng)?
            };
            let (tr, info) = env.step(action)?;
            actions_in_bounds &= (bounds.low..=bounds.high).contains(&tr.action);
            cost += info.grid_cost;
            penalties += usize::from(info.corrected);
            exp.push(tr);
            total_steps += 1;

            if total_steps >= warmup {
                for _ in 0..cfg.updates_per_step {
                    let batch = sample_joint(&demo, &exp, cfg.batch_size, rho, &mut rng)?;
                    let stats = learner.update(&batch.transitions, &mut rng)?;
                    min_alpha = min_alpha.min(stats.alpha);
                }
            }
        }
        let eval_reward = evaluate(&learner.nets.actor, scenario, params)?;
        if eval_reward > best_eval {
            best_eval = eval_reward;
            best_actor = learner.nets.actor.clone();
        }
        metrics.push(EpisodeMetrics {
            episode,
            rho,
            reported_reward: -cost,
            penalty_count: penalties,
            eval_reward,
            wall_seconds: if cfg.record_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }

    Ok(TrainOutcome {
        metrics,
        learner,
        best_actor,
        best_eval_reward: best_eval,
        demo_checksum_before,
        demo_checksum_after: has_demos.then(|| demo.checksum()),
        actions_in_bounds,
        min_alpha,
    })
}
