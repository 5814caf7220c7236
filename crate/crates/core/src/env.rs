//! Grid-connected microgrid with a single battery, stepped hourly.
//!
//! Sign conventions: battery power is positive when discharging and negative
//! when charging; grid power is positive when buying and negative when
//! selling. The SOC carried in [`EnvState`] is the value *before* the action
//! of that hour is applied.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::experiment::metrics::EpisodeMetrics;
use crate::policies::Policy;
use crate::scenario::Scenario;

/// Length of the observation vector.
pub const STATE_DIM: usize = 7;

/// Observation in network-ready form:
/// `(price, re, demand, soc, sin_h, cos_h, workday)`.
pub type Features = [f64; STATE_DIM];

/// How the SOC-derived caps of the security layer treat efficiencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClampMode {
    /// Caps ignore efficiencies; with a discharge efficiency above one the
    /// post-step SOC can undershoot the lower bound before the final clip.
    PaperLiteral,
    /// Caps invert the SOC update so the next SOC lands inside its bounds.
    EfficiencyAware,
}

impl std::str::FromStr for ClampMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_literal" => Ok(ClampMode::PaperLiteral),
            "efficiency_aware" => Ok(ClampMode::EfficiencyAware),
            other => Err(Error::Config(format!("unknown clamp_mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ClampMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClampMode::PaperLiteral => "paper_literal",
            ClampMode::EfficiencyAware => "efficiency_aware",
        })
    }
}

/// Battery and plant constants. Defaults are the Alberta case-study values.
#[derive(Clone, Debug, PartialEq)]
pub struct MicrogridParams {
    /// Battery capacity in MWh.
    pub cav: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// SOC at the start of every episode.
    pub soc_initial: f64,
    /// Maximum charge rate (negative), MW.
    pub p_b_min: f64,
    /// Maximum discharge rate, MW.
    pub p_b_max: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    /// Self-discharge fraction per step.
    pub sigma: f64,
    /// Auxiliary cost added to purchases, C$/MWh.
    pub c_a: f64,
    /// Step length in hours.
    pub delta_t: f64,
    /// Penalty for a corrected action, C$.
    pub omega: f64,
    pub clamp_mode: ClampMode,
    pub wind_capacity_mw: f64,
    pub pv_capacity_mw: f64,
}

impl Default for MicrogridParams {
    fn default() -> Self {
        MicrogridParams {
            cav: 100.0,
            soc_min: 0.2,
            soc_max: 0.8,
            soc_initial: 0.5,
            p_b_min: -20.0,
            p_b_max: 20.0,
            eta_charge: 0.92,
            eta_discharge: 1.0 / 0.92,
            sigma: 0.0,
            c_a: 10.0,
            delta_t: 1.0,
            omega: 10.0,
            clamp_mode: ClampMode::EfficiencyAware,
            wind_capacity_mw: 22.5,
            pv_capacity_mw: 5.0,
        }
    }
}

impl MicrogridParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("microgrid: {m}")));
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return fail("need 0 <= soc_min < soc_max <= 1");
        }
        if !(self.soc_min <= self.soc_initial && self.soc_initial <= self.soc_max) {
            return fail("soc_initial outside [soc_min, soc_max]");
        }
        if !(self.p_b_min < 0.0 && 0.0 < self.p_b_max) {
            return fail("need p_b_min < 0 < p_b_max");
        }
        if !(0.0 < self.eta_charge && self.eta_charge <= 1.0 && 1.0 <= self.eta_discharge) {
            return fail("need 0 < eta_charge <= 1 <= eta_discharge");
        }
        if !(0.0 <= self.sigma && self.sigma < 1.0) {
            return fail("need 0 <= sigma < 1");
        }
        if !(self.cav > 0.0 && self.delta_t > 0.0 && self.omega >= 0.0 && self.c_a.is_finite()) {
            return fail("need cav > 0, delta_t > 0, omega >= 0");
        }
        Ok(())
    }

    /// Midpoint and half-width of the action interval.
    pub fn action_mid_half(&self) -> (f64, f64) {
        (0.5 * (self.p_b_max + self.p_b_min), 0.5 * (self.p_b_max - self.p_b_min))
    }

    /// SOC after self-discharge and the executed battery power.
    pub fn next_soc(&self, soc: f64, executed: f64) -> f64 {
        let eta = if executed < 0.0 { self.eta_charge } else { self.eta_discharge };
        soc * (1.0 - self.sigma) - eta * executed * self.delta_t / self.cav
    }

    /// Grid cost of a (signed) grid exchange at wholesale price `price`.
    pub fn grid_cost(&self, grid_mw: f64, price: f64) -> f64 {
        if grid_mw >= 0.0 {
            grid_mw * (price + self.c_a)
        } else {
            grid_mw * price
        }
    }
}

/// Divisors that bring raw observations to O(1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureScale {
    pub price: f64,
    pub re: f64,
    pub demand: f64,
}

impl FeatureScale {
    pub fn new(params: &MicrogridParams, scenario: &Scenario) -> Self {
        let positive = |v: f64| if v > 0.0 { v } else { 1.0 };
        FeatureScale {
            price: 100.0,
            re: positive(params.wind_capacity_mw + params.pv_capacity_mw),
            demand: positive(scenario.max_demand()),
        }
    }
}

/// Environment state at the start of hour `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub price: f64,
    pub re_mw: f64,
    pub demand_mw: f64,
    /// SOC before this hour's action.
    pub soc: f64,
    pub sin_h: f64,
    pub cos_h: f64,
    pub workday: bool,
}

impl EnvState {
    /// State at hour `t` (wrapping around the scenario) with the given SOC.
    pub fn at(scenario: &Scenario, t: usize, soc: f64) -> Self {
        let r = scenario.record(t % scenario.horizon());
        let angle = 2.0 * PI * (t % 24) as f64 / 24.0;
        EnvState {
            t,
            price: r.price,
            re_mw: r.re_mw(),
            demand_mw: r.demand_mw,
            soc,
            sin_h: angle.sin(),
            cos_h: angle.cos(),
            workday: r.workday,
        }
    }

    pub fn features(&self, scale: &FeatureScale) -> Features {
        [
            self.price / scale.price,
            self.re_mw / scale.re,
            self.demand_mw / scale.demand,
            self.soc,
            self.sin_h,
            self.cos_h,
            if self.workday { 1.0 } else { 0.0 },
        ]
    }
}

/// Free-standing form of [`EnvState::features`].
pub fn features(state: &EnvState, scale: &FeatureScale) -> Features {
    state.features(scale)
}

/// One stored experience tuple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: Features,
    /// Executed (corrected) action, MW.
    pub action: f64,
    /// Cost reward including the correction penalty, C$.
    pub reward: f64,
    pub next_state: Features,
    /// Set on the last hour of the horizon.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub grid_power_mw: f64,
    pub grid_cost: f64,
    pub corrected: bool,
    pub raw_action: f64,
    pub executed_action: f64,
    /// SOC from the update equation before the safety clip.
    pub unclipped_soc: f64,
}

/// Projects a requested battery power onto the feasible set given the
/// rate limits, the SOC window and the renewable power available for
/// charging.
pub fn security_layer(action: f64, state: &EnvState, p: &MicrogridParams) -> f64 {
    let corrected = if action >= 0.0 {
        action.min(p.p_b_max).min(discharge_cap(state, p))
    } else {
        action.max(p.p_b_min).max(-state.re_mw).max(charge_cap(state, p))
    };
    // normalises -0.0
    corrected + 0.0
}

fn discharge_cap(state: &EnvState, p: &MicrogridParams) -> f64 {
    let cap = match p.clamp_mode {
        ClampMode::PaperLiteral => (state.soc - p.soc_min) * p.cav / p.delta_t,
        ClampMode::EfficiencyAware => {
            (state.soc * (1.0 - p.sigma) - p.soc_min) * p.cav / (p.delta_t * p.eta_discharge)
        }
    };
    cap.max(0.0)
}

fn charge_cap(state: &EnvState, p: &MicrogridParams) -> f64 {
    let cap = match p.clamp_mode {
        ClampMode::PaperLiteral => (state.soc - p.soc_max) * p.cav / p.delta_t,
        ClampMode::EfficiencyAware => {
            (state.soc * (1.0 - p.sigma) - p.soc_max) * p.cav / (p.delta_t * p.eta_charge)
        }
    };
    cap.min(0.0)
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub transition: Transition,
    pub info: StepInfo,
    pub next: EnvState,
}

/// Applies `action` in `state`.
///
/// The grid exchange closes the power balance, the cost uses the
/// buy/sell asymmetry, and the reward subtracts `omega` whenever the
/// security layer had to change the action. The next state after the last
/// hour wraps to hour 0 of the scenario; episodes end by truncation.
pub fn step(
    state: &EnvState,
    action: f64,
    p: &MicrogridParams,
    scenario: &Scenario,
    scale: &FeatureScale,
) -> Result<StepOutcome> {
    let horizon = scenario.horizon();
    if state.t >= horizon {
        return Err(Error::EpisodeFinished { t: state.t, horizon });
    }
    let executed = security_layer(action, state, p);
    let corrected = executed != action;
    let grid = state.demand_mw - state.re_mw - executed;
    let cost = p.grid_cost(grid, state.price);
    let penalty = if corrected { p.omega } else { 0.0 };
    let reward = -cost - penalty;

    let unclipped_soc = p.next_soc(state.soc, executed);
    let soc = unclipped_soc.clamp(p.soc_min, p.soc_max);
    let mut next = EnvState::at(scenario, (state.t + 1) % horizon, soc);
    next.t = state.t + 1;

    Ok(StepOutcome {
        transition: Transition {
            state: state.features(scale),
            action: executed,
            reward,
            next_state: next.features(scale),
            truncated: state.t + 1 == horizon,
        },
        info: StepInfo {
            grid_power_mw: grid,
            grid_cost: cost,
            corrected,
            raw_action: action,
            executed_action: executed,
            unclipped_soc,
        },
        next,
    })
}

/// Stateful episodic wrapper over [`step`].
pub struct Env<'a> {
    scenario: &'a Scenario,
    params: MicrogridParams,
    scale: FeatureScale,
    state: EnvState,
}

impl<'a> Env<'a> {
    pub fn new(scenario: &'a Scenario, params: MicrogridParams) -> Result<Self> {
        params.validate()?;
        let scale = FeatureScale::new(&params, scenario);
        let state = EnvState::at(scenario, 0, params.soc_initial);
        Ok(Env {
            scenario,
            params,
            scale,
            state,
        })
    }

    pub fn reset(&mut self) -> EnvState {
        self.state = EnvState::at(self.scenario, 0, self.params.soc_initial);
        self.state
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn observation(&self) -> Features {
        self.state.features(&self.scale)
    }

    pub fn params(&self) -> &MicrogridParams {
        &self.params
    }

    pub fn scale(&self) -> &FeatureScale {
        &self.scale
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn horizon(&self) -> usize {
        self.scenario.horizon()
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.scenario.horizon()
    }

    pub fn step(&mut self, action: f64) -> Result<(Transition, StepInfo)> {
        let out = step(&self.state, action, &self.params, self.scenario, &self.scale)?;
        self.state = out.next;
        Ok((out.transition, out.info))
    }
}

/// Rolls `policy` over the full scenario.
///
/// The reported reward is the negated grid cost, without correction
/// penalties.
pub fn run_episode(
    policy: &mut dyn Policy,
    scenario: &Scenario,
    params: &MicrogridParams,
    seed: u64,
) -> Result<(Vec<Transition>, EpisodeMetrics)> {
    let mut env = Env::new(scenario, params.clone())?;
    policy.reset(seed);
    env.reset();
    let mut transitions = Vec::with_capacity(env.horizon());
    let mut cost = 0.0;
    let mut penalties = 0;
    while !env.is_done() {
        let obs = env.observation();
        let action = policy.act(env.state(), &obs);
        let (tr, info) = env.step(action)?;
        cost += info.grid_cost;
        penalties += usize::from(info.corrected);
        transitions.push(tr);
    }
    let reported = -cost;
    let metrics = EpisodeMetrics {
        episode: 0,
        rho: 0.0,
        reported_reward: reported,
        penalty_count: penalties,
        eval_reward: reported,
        wall_seconds: 0.0,
    };
    Ok((transitions, metrics))
}
