//! Dispatch oracles: backward induction on a discretised SOC grid and
//! exhaustive search for very short horizons.
//!
//! Both maximise the negated grid cost. Actions go through the security
//! layer, so neither ever incurs a correction penalty worth counting.

use rayon::prelude::*;

use crate::env::{security_layer, EnvState, MicrogridParams};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Exhaustive search refuses more sequences than this.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;
pub const BRUTE_FORCE_MAX_HORIZON: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct DpGrid {
    soc_points: Vec<f64>,
    action_points: Vec<f64>,
    horizon: usize,
}

impl DpGrid {
    /// Arbitrary sorted grids; duplicates are dropped.
    pub fn new(mut soc_points: Vec<f64>, mut action_points: Vec<f64>, horizon: usize) -> Result<Self> {
        if soc_points.iter().chain(&action_points).any(|v| !v.is_finite()) {
            return Err(Error::Config("dp grid: non-finite point".into()));
        }
        soc_points.sort_by(f64::total_cmp);
        soc_points.dedup();
        action_points.sort_by(f64::total_cmp);
        action_points.dedup();
        if soc_points.len() < 2 {
            return Err(Error::Config("dp grid: need at least 2 SOC points".into()));
        }
        if !action_points.contains(&0.0) {
            return Err(Error::Config("dp grid: action grid must contain 0".into()));
        }
        Ok(DpGrid {
            soc_points,
            action_points,
            horizon,
        })
    }

    /// Evenly spaced grids over the SOC window and the action bounds, with
    /// 0 added to the action grid if it is not already a point.
    pub fn uniform(params: &MicrogridParams, n_soc: usize, n_actions: usize, horizon: usize) -> Result<Self> {
        if n_soc < 2 || n_actions < 2 {
            return Err(Error::Config("dp grid: need at least 2 points per axis".into()));
        }
        let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    if i + 1 == n {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect()
        };
        let soc = lin(params.soc_min, params.soc_max, n_soc);
        let mut actions: Vec<f64> = lin(params.p_b_min, params.p_b_max, n_actions)
            .into_iter()
            .map(|a| if a.abs() < 1e-12 { 0.0 } else { a })
            .collect();
        if !actions.contains(&0.0) {
            actions.push(0.0);
        }
        DpGrid::new(soc, actions, horizon)
    }

    pub fn soc_points(&self) -> &[f64] {
        &self.soc_points
    }

    pub fn action_points(&self) -> &[f64] {
        &self.action_points
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Index of the grid point closest to `soc` (lower point on ties).
    pub fn snap(&self, soc: f64) -> usize {
        let pts = &self.soc_points;
        let hi = pts.partition_point(|&p| p < soc);
        if hi == 0 {
            0
        } else if hi == pts.len() {
            pts.len() - 1
        } else if soc - pts[hi - 1] <= pts[hi] - soc {
            hi - 1
        } else {
            hi
        }
    }

    fn max_gap(points: &[f64]) -> f64 {
        points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Action indices ordered by |a| so ties favour the smallest move.
    fn action_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.action_points.len()).collect();
        order.sort_by(|&a, &b| {
            self.action_points[a]
                .abs()
                .total_cmp(&self.action_points[b].abs())
                .then(a.cmp(&b))
        });
        order
    }
}

#[derive(Clone, Debug)]
pub struct DpSolution {
    /// `values[t][i]`: best reward-to-go from hour `t` at SOC point `i`.
    pub values: Vec<Vec<f64>>,
    /// Greedy requested actions (grid points).
    pub actions: Vec<f64>,
    /// The same actions after the security layer.
    pub executed: Vec<f64>,
    /// Snapped SOC trajectory, `horizon + 1` entries.
    pub soc_path: Vec<f64>,
    /// Root value of the table.
    pub total_reward: f64,
    /// Reward-to-go summed along the greedy path in table order.
    pub path_reward: f64,
    /// Discretisation allowance on the whole horizon.
    pub delta: f64,
    /// Largest single-step share of `delta`.
    pub step_delta_max: f64,
}

fn step_reward(state: &EnvState, action: f64, p: &MicrogridParams) -> (f64, f64, f64) {
    let executed = security_layer(action, state, p);
    let grid = state.demand_mw - state.re_mw - executed;
    let reward = -p.grid_cost(grid, state.price);
    let next = p.next_soc(state.soc, executed).clamp(p.soc_min, p.soc_max);
    (reward, executed, next)
}

/// Backward induction with nearest-point SOC snapping.
///
/// `delta` bounds the discretisation error against the continuous problem:
/// per hour, half a SOC gap times a Lipschitz bound on the value of stored
/// energy, plus half an action gap times the marginal value of power in
/// that hour.
pub fn dp_solve(scenario: &Scenario, p: &MicrogridParams, grid: &DpGrid) -> Result<DpSolution> {
    p.validate()?;
    let horizon = grid.horizon;
    if horizon > scenario.horizon() {
        return Err(Error::Config(format!(
            "dp horizon {horizon} exceeds scenario length {}",
            scenario.horizon()
        )));
    }
    let n = grid.soc_points.len();
    let order = grid.action_order();
    let mut values = vec![vec![0.0; n]; horizon + 1];
    let mut policy = vec![vec![0usize; n]; horizon];

    for t in (0..horizon).rev() {
        let next_values = &values[t + 1];
        let row: Vec<(f64, usize)> = grid
            .soc_points
            .par_iter()
            .map(|&soc| {
                let state = EnvState::at(scenario, t, soc);
                let mut best = (f64::NEG_INFINITY, order[0]);
                for &k in &order {
                    let (r, _, next) = step_reward(&state, grid.action_points[k], p);
                    let v = r + next_values[grid.snap(next)];
                    if v > best.0 {
                        best = (v, k);
                    }
                }
                best
            })
            .collect();
        for (i, (v, k)) in row.into_iter().enumerate() {
            values[t][i] = v;
            policy[t][i] = k;
        }
    }

    let mut i = grid.snap(p.soc_initial);
    let root = i;
    let mut actions = Vec::with_capacity(horizon);
    let mut executed = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut soc_path = vec![grid.soc_points[i]];
    for (t, row) in policy.iter().enumerate().take(horizon) {
        let a = grid.action_points[row[i]];
        let state = EnvState::at(scenario, t, grid.soc_points[i]);
        let (r, ex, next) = step_reward(&state, a, p);
        actions.push(a);
        executed.push(ex);
        rewards.push(r);
        i = grid.snap(next);
        soc_path.push(grid.soc_points[i]);
    }
    let path_reward = rewards.iter().rev().fold(0.0, |acc, r| r + acc);

    let max_price = scenario.records()[..horizon]
        .iter()
        .map(|r| r.price.abs())
        .fold(0.0, f64::max);
    let lipschitz = p.cav * (max_price + p.c_a) * (1.0 / p.eta_charge).max(1.0 / p.eta_discharge);
    let soc_gap = DpGrid::max_gap(&grid.soc_points);
    let action_gap = DpGrid::max_gap(&grid.action_points);
    let eta_max = p.eta_charge.max(p.eta_discharge);
    let mut delta = 0.0;
    let mut step_delta_max: f64 = 0.0;
    for r in &scenario.records()[..horizon] {
        let d = 0.5 * soc_gap * lipschitz
            + 0.5 * action_gap * (r.price.abs() + p.c_a + lipschitz * eta_max * p.delta_t / p.cav);
        delta += d;
        step_delta_max = step_delta_max.max(d);
    }

    Ok(DpSolution {
        total_reward: values[0][root],
        values,
        actions,
        executed,
        soc_path,
        path_reward,
        delta,
        step_delta_max,
    })
}

/// Exact optimum over every sequence of grid actions, with continuous SOC.
pub fn brute_force(
    scenario: &Scenario,
    p: &MicrogridParams,
    actions: &[f64],
    horizon: usize,
) -> Result<(Vec<f64>, f64)> {
    p.validate()?;
    if actions.is_empty() {
        return Err(Error::Config("brute force needs at least one action".into()));
    }
    let sequences = (actions.len() as f64).powi(horizon as i32);
    if horizon > BRUTE_FORCE_MAX_HORIZON || sequences > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::HorizonTooLarge {
            sequences,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if horizon > scenario.horizon() {
        return Err(Error::Config("brute force horizon exceeds scenario length".into()));
    }
    let mut order: Vec<usize> = (0..actions.len()).collect();
    order.sort_by(|&a, &b| actions[a].abs().total_cmp(&actions[b].abs()).then(a.cmp(&b)));

    struct Search<'a> {
        scenario: &'a Scenario,
        p: &'a MicrogridParams,
        actions: &'a [f64],
        order: Vec<usize>,
        horizon: usize,
        path: Vec<f64>,
        best: (f64, Vec<f64>),
    }

    impl Search<'_> {
        fn go(&mut self, t: usize, soc: f64, acc: f64) {
            if t == self.horizon {
                if acc > self.best.0 {
                    self.best = (acc, self.path.clone());
                }
                return;
            }
            let state = EnvState::at(self.scenario, t, soc);
            for k in 0..self.order.len() {
                let a = self.actions[self.order[k]];
                let (r, _, next) = step_reward(&state, a, self.p);
                self.path.push(a);
                self.go(t + 1, next, acc + r);
                self.path.pop();
            }
        }
    }

    let mut s = Search {
        scenario,
        p,
        actions,
        order,
        horizon,
        path: Vec::with_capacity(horizon),
        best: (f64::NEG_INFINITY, Vec::new()),
    };
    s.go(0, p.soc_initial, 0.0);
    let (reward, seq) = s.best;
    Ok((seq, reward))
}

/// Every SOC reachable from the initial SOC within `horizon` steps using
/// the given requested actions.
pub fn reachable_socs(scenario: &Scenario, p: &MicrogridParams, actions: &[f64], horizon: usize) -> Vec<f64> {
    let mut all = vec![p.soc_initial];
    let mut frontier = vec![p.soc_initial];
    for t in 0..horizon {
        let mut next_frontier = Vec::new();
        for &soc in &frontier {
            let state = EnvState::at(scenario, t, soc);
            for &a in actions {
                next_frontier.push(step_reward(&state, a, p).2);
            }
        }
        next_frontier.sort_by(f64::total_cmp);
        next_frontier.dedup();
        all.extend(&next_frontier);
        frontier = next_frontier;
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioRecord;

    fn two_step() -> Scenario {
        let rec = |t, price, re| ScenarioRecord {
            hour_index: t,
            price,
            wind_mw: re,
            pv_mw: 0.0,
            demand_mw: 0.0,
            workday: true,
        };
        Scenario::new(vec![rec(0, 10.0, 20.0), rec(1, 100.0, 0.0)], 0, "two step").unwrap()
    }

    #[test]
    fn two_step_worked_instance() {
        let p = MicrogridParams::default();
        let sc = two_step();
        let (seq, r) = brute_force(&sc, &p, &[-20.0, 0.0, 20.0], 2).unwrap();
        assert_eq!(seq, vec![0.0, 20.0]);
        assert!((r - 2200.0).abs() < 1e-9);

        let grid = DpGrid::new(reachable_socs(&sc, &p, &[-20.0, 0.0, 20.0], 2), vec![-20.0, 0.0, 20.0], 2).unwrap();
        let sol = dp_solve(&sc, &p, &grid).unwrap();
        assert_eq!(sol.actions, vec![0.0, 20.0]);
        assert!((sol.total_reward - 2200.0).abs() < 1e-9);
        assert_eq!(sol.path_reward, sol.total_reward);
    }

    #[test]
    fn zero_price_zero_demand() {
        let p = MicrogridParams::default();
        let records = (0..6)
            .map(|t| ScenarioRecord {
                hour_index: t,
                price: 0.0,
                wind_mw: 5.0,
                pv_mw: 0.0,
                demand_mw: 0.0,
                workday: false,
            })
            .collect();
        let sc = Scenario::new(records, 0, "flat").unwrap();
        let grid = DpGrid::uniform(&p, 21, 5, 6).unwrap();
        let sol = dp_solve(&sc, &p, &grid).unwrap();
        assert_eq!(sol.total_reward, 0.0);
        assert!(sol.actions.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_null_step() {
        let p = MicrogridParams::default();
        let sc = two_step();
        let (seq, r) = brute_force(&sc, &p, &[0.0], 1).unwrap();
        assert_eq!(seq, vec![0.0]);
        assert_eq!(r, 200.0);
    }

    #[test]
    fn too_long_for_brute_force() {
        let p = MicrogridParams::default();
        let sc = two_step();
        assert!(matches!(
            brute_force(&sc, &p, &[-1.0, 0.0, 1.0], 7),
            Err(Error::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn grid_rules() {
        let p = MicrogridParams::default();
        assert!(DpGrid::new(vec![0.5], vec![0.0], 1).is_err());
        assert!(DpGrid::new(vec![0.2, 0.8], vec![-1.0, 1.0], 1).is_err());
        let g = DpGrid::uniform(&p, 201, 41, 10).unwrap();
        assert_eq!(g.soc_points().len(), 201);
        assert_eq!(g.action_points().len(), 41);
        assert!(g.action_points().contains(&0.0));
        assert_eq!(g.soc_points()[g.snap(0.5)], 0.5);
        let even = DpGrid::uniform(&p, 11, 4, 10).unwrap();
        assert!(even.action_points().contains(&0.0));
        assert_eq!(g.snap(-3.0), 0);
        assert_eq!(g.snap(3.0), 200);
    }
}
