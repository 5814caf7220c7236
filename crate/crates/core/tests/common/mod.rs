#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sacfd::env::{MicrogridParams, Transition, STATE_DIM};
use sacfd::scenario::{Scenario, ScenarioRecord};

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, 1e-5)` over all components. The floor
/// keeps components near zero, where central differences are dominated
/// by round-off, from producing meaningless ratios.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-5))
        .fold(0.0, f64::max)
}

pub fn random_transitions(n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let mut state = [0.0; STATE_DIM];
            let mut next_state = [0.0; STATE_DIM];
            for k in 0..STATE_DIM {
                state[k] = rng.gen_range(-1.0..1.0);
                next_state[k] = rng.gen_range(-1.0..1.0);
            }
            Transition {
                state,
                action: rng.gen_range(-20.0..=20.0),
                reward: rng.gen_range(-2000.0..2000.0),
                next_state,
                truncated: rng.gen_bool(0.05),
            }
        })
        .collect()
}

/// Scenario of `hours` random hours within the default capacities.
pub fn random_scenario(hours: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = MicrogridParams::default();
    let records = (0..hours)
        .map(|t| ScenarioRecord {
            hour_index: t,
            price: rng.gen_range(0.0..150.0),
            wind_mw: rng.gen_range(0.0..p.wind_capacity_mw),
            pv_mw: rng.gen_range(0.0..p.pv_capacity_mw),
            demand_mw: rng.gen_range(0.0..30.0),
            workday: rng.gen_bool(0.7),
        })
        .collect();
    Scenario::new(records, 0, "random").unwrap()
}

/// The two-hour instance: prices (10, 100), renewables (20, 0), no demand.
pub fn two_step_scenario() -> Scenario {
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

pub mod grad {
    use super::{max_rel_err, numeric_grad, random_transitions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use sacfd::ndiff::{squashed_gaussian_action, ActionBounds, Graph, Tensor};
    use sacfd::sac::{
        actor_loss_graph, alpha_loss_graph, critic_loss_graph, critic_targets, Batch, SacConfig, SacNetworks,
        UpdateNoise,
    };

    pub const H: f64 = 1e-6;
    pub const BOUNDS: ActionBounds = ActionBounds { low: -20.0, high: 20.0 };

    fn setup(seed: u64) -> (SacConfig, SacNetworks, Batch, UpdateNoise) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SacConfig {
            init_log_alpha: -1.3,
            ..SacConfig::default()
        };
        let nets = SacNetworks::init(&cfg, &mut rng);
        let batch = Batch::from_transitions(&random_transitions(32, &mut rng)).unwrap();
        let noise = UpdateNoise::sample(32, &mut rng);
        (cfg, nets, batch, noise)
    }

    /// Worst relative error over both critics' parameters.
    pub fn critic_err(seed: u64) -> f64 {
        let (cfg, nets, batch, noise) = setup(seed);
        let targets = critic_targets(&nets, &batch, &cfg, BOUNDS, &noise.next).unwrap();
        let cg = critic_loss_graph(&nets, &batch, &targets, BOUNDS).unwrap();
        let grads = cg.graph.backward(cg.loss).unwrap();
        let mut worst: f64 = 0.0;
        for which in 0..2 {
            let (net, vars) = if which == 0 {
                (&nets.critic1, &cg.critic1_vars)
            } else {
                (&nets.critic2, &cg.critic2_vars)
            };
            let analytic = net.collect_grads(&grads, vars);
            let f = |theta: &[f64]| {
                let mut n = nets.clone();
                let target = if which == 0 { &mut n.critic1 } else { &mut n.critic2 };
                target.params.copy_from_slice(theta);
                let cg = critic_loss_graph(&n, &batch, &targets, BOUNDS).unwrap();
                cg.graph.value(cg.loss).item()
            };
            worst = worst.max(max_rel_err(&analytic, &numeric_grad(&f, &net.params, H)));
        }
        worst
    }

    pub fn actor_err(seed: u64) -> f64 {
        let (_, nets, batch, noise) = setup(seed);
        let ag = actor_loss_graph(&nets, &batch, BOUNDS, &noise.current).unwrap();
        let grads = ag.graph.backward(ag.loss).unwrap();
        let analytic = nets.actor.collect_grads(&grads, &ag.actor_vars);
        let f = |theta: &[f64]| {
            let mut n = nets.clone();
            n.actor.params.copy_from_slice(theta);
            let ag = actor_loss_graph(&n, &batch, BOUNDS, &noise.current).unwrap();
            ag.graph.value(ag.loss).item()
        };
        max_rel_err(&analytic, &numeric_grad(&f, &nets.actor.params, H))
    }

    pub fn alpha_err(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lps: Vec<f64> = (0..32).map(|_| rng.gen_range(-8.0..3.0)).collect();
        let la = rng.gen_range(-5.0..1.0);
        let (g, loss, var) = alpha_loss_graph(la, &lps, -1.0).unwrap();
        let analytic = g.backward(loss).unwrap().wrt(var).unwrap().item();
        let f = |x: &[f64]| {
            let (g, loss, _) = alpha_loss_graph(x[0], &lps, -1.0).unwrap();
            g.value(loss).item()
        };
        max_rel_err(&[analytic], &numeric_grad(&f, &[la], H))
    }

    /// Gradient of the summed log-density with respect to mean and log-std.
    pub fn log_prob_err(seed: u64, bounds: ActionBounds) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 32;
        let mean: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let log_std: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..1.0)).collect();
        let noise = Tensor::column(&(0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
        let total = |m: &[f64], s: &[f64]| {
            let mut g = Graph::new();
            let mv = g.param(Tensor::column(m)).unwrap();
            let sv = g.param(Tensor::column(s)).unwrap();
            let (_, lp) = squashed_gaussian_action(&mut g, mv, sv, &noise, bounds).unwrap();
            let out = g.sum(lp).unwrap();
            (g, out, mv, sv)
        };
        let (g, out, mv, sv) = total(&mean, &log_std);
        let grads = g.backward(out).unwrap();
        let mut analytic = grads.wrt(mv).unwrap().data().to_vec();
        analytic.extend_from_slice(grads.wrt(sv).unwrap().data());
        let mut x = mean.clone();
        x.extend_from_slice(&log_std);
        let f = |x: &[f64]| {
            let (g, out, _, _) = total(&x[..n], &x[n..]);
            g.value(out).item()
        };
        max_rel_err(&analytic, &numeric_grad(&f, &x, H))
    }
}
