//! Non-learned controllers behind a common [`Policy`] interface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{run_episode, EnvState, Features, MicrogridParams, Transition};
use crate::error::Result;
use crate::scenario::Scenario;

/// Maps the current state to a requested battery power in MW.
///
/// Requests are raw: the environment's security layer corrects them.
pub trait Policy {
    fn act(&mut self, state: &EnvState, features: &Features) -> f64;

    /// Called at the start of every episode.
    fn reset(&mut self, _seed: u64) {}
}

impl<F: FnMut(&EnvState, &Features) -> f64> Policy for F {
    fn act(&mut self, state: &EnvState, features: &Features) -> f64 {
        self(state, features)
    }
}

/// Price-threshold demonstrator: discharge at full rate above the
/// threshold, charge at full rate at or below it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub discharge_mw: f64,
    pub charge_mw: f64,
}

impl ThresholdRule {
    pub fn new(threshold: f64, params: &MicrogridParams) -> Self {
        ThresholdRule {
            threshold,
            discharge_mw: params.p_b_max,
            charge_mw: params.p_b_min,
        }
    }
}

pub fn rule_action(rule: &ThresholdRule, state: &EnvState) -> f64 {
    if state.price > rule.threshold {
        rule.discharge_mw
    } else {
        rule.charge_mw
    }
}

impl Policy for ThresholdRule {
    fn act(&mut self, state: &EnvState, _features: &Features) -> f64 {
        rule_action(self, state)
    }
}

/// Never touches the battery.
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedAction;

pub fn fixed_action_policy() -> FixedAction {
    FixedAction
}

impl Policy for FixedAction {
    fn act(&mut self, _state: &EnvState, _features: &Features) -> f64 {
        0.0
    }
}

/// Uniform random requests over the action bounds.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    low: f64,
    high: f64,
    rng: ChaCha8Rng,
}

pub fn random_policy(seed: u64, params: &MicrogridParams) -> RandomPolicy {
    RandomPolicy {
        low: params.p_b_min,
        high: params.p_b_max,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

impl RandomPolicy {
    pub fn sample(&mut self) -> f64 {
        self.rng.gen_range(self.low..=self.high)
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _state: &EnvState, _features: &Features) -> f64 {
        self.sample()
    }
}

/// One full episode of `rule`, returning every transition.
pub fn collect_demonstrations(
    rule: &ThresholdRule,
    scenario: &Scenario,
    params: &MicrogridParams,
) -> Result<Vec<Transition>> {
    let mut rule = *rule;
    let (transitions, _) = run_episode(&mut rule, scenario, params, 0)?;
    Ok(transitions)
}
