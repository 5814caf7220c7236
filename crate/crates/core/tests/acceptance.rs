//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sacfd::cem::{cem_train, CemConfig};
use sacfd::env::{run_episode, security_layer, step, EnvState, FeatureScale, MicrogridParams};
use sacfd::experiment::runner::{metrics_path, run_agent, sweep_thresholds, RunReport};
use sacfd::experiment::{AgentKind, ExperimentConfig, ScenarioSource, ScheduleKind, Threshold};
use sacfd::ndiff::ActionBounds;
use sacfd::oracle::{brute_force, dp_solve, reachable_socs, DpGrid};
use sacfd::policies::{fixed_action_policy, random_policy, ThresholdRule};
use sacfd::replay::{sample_joint, ReplayBuffer, RhoSchedule};
use sacfd::sac::{train, SacConfig};
use sacfd::scenario::{mean_price, ExogenousConfig, Scenario, ScenarioRecord};

const GRAD_TOL: f64 = 1e-4;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn report(o: &Outcome) {
    let within = o.elapsed <= o.limit;
    println!(
        "{:<4} {}  {} ({:.1} s, limit {} s)",
        o.id,
        if o.pass && within { "PASS" } else { "FAIL" },
        o.detail,
        o.elapsed.as_secs_f64(),
        o.limit.as_secs()
    );
}

fn one_hour(price: f64, re: f64, demand: f64) -> Scenario {
    Scenario::new(
        vec![ScenarioRecord {
            hour_index: 0,
            price,
            wind_mw: re,
            pv_mw: 0.0,
            demand_mw: demand,
            workday: true,
        }],
        0,
        "one hour",
    )
    .unwrap()
}

fn a1() -> (bool, String) {
    let p = MicrogridParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_soc: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut failures = Vec::new();
    for k in 0..100_000 {
        let price = rng.gen_range(0.0..300.0);
        let re = rng.gen_range(0.0..27.5);
        let demand = rng.gen_range(0.0..40.0);
        let soc = rng.gen_range(p.soc_min..=p.soc_max);
        let a = rng.gen_range(-40.0..40.0);
        let b = rng.gen_range(-40.0..40.0);
        let sc = one_hour(price, re, demand);
        let scale = FeatureScale::new(&p, &sc);
        let st = EnvState::at(&sc, 0, soc);
        let out = step(&st, a, &p, &sc, &scale).unwrap();
        let info = out.info;
        let ac = info.executed_action;
        if info.grid_power_mw != demand - re - ac {
            failures.push(format!("pair {k}: power balance"));
        }
        worst_sum = worst_sum.max((re + ac + info.grid_power_mw - demand).abs() / (1.0 + demand + re));
        worst_soc = worst_soc
            .max(p.soc_min - info.unclipped_soc)
            .max(info.unclipped_soc - p.soc_max);
        if security_layer(ac, &st, &p) != ac {
            failures.push(format!("pair {k}: not idempotent"));
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if security_layer(lo, &st, &p) > security_layer(hi, &st, &p) {
            failures.push(format!("pair {k}: not monotone"));
        }
        if !info.corrected && out.transition.reward != -info.grid_cost {
            failures.push(format!("pair {k}: reward != -C_G"));
        }
    }
    let pass = failures.is_empty() && worst_soc <= 1e-12 && worst_sum <= 1e-12;
    (
        pass,
        format!(
            "1e5 pairs, {} violations, worst SOC excursion {worst_soc:.1e}, worst summed balance residual {worst_sum:.1e}{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn a2() -> (bool, String) {
    let p = MicrogridParams::default();
    let run = |price, re, demand, soc, a| {
        let sc = one_hour(price, re, demand);
        let scale = FeatureScale::new(&p, &sc);
        step(&EnvState::at(&sc, 0, soc), a, &p, &sc, &scale).unwrap()
    };
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
    let mut ok = true;

    let o = run(60.0, 15.0, 10.0, 0.5, 20.0);
    ok &= close(o.info.executed_action, 20.0)
        && close(o.info.grid_power_mw, -25.0)
        && close(o.info.grid_cost, -1500.0)
        && close(o.transition.reward, 1500.0)
        && close(o.next.soc, 0.5 - 20.0 / 0.92 / 100.0);

    let o = run(40.0, 15.0, 10.0, 0.5, -20.0);
    ok &= close(o.info.executed_action, -15.0)
        && o.info.corrected
        && close(o.info.grid_power_mw, 10.0)
        && close(o.info.grid_cost, 500.0)
        && close(o.transition.reward, -510.0)
        && close(o.next.soc, 0.638);

    let o = run(55.0, 12.0, 12.0, 0.4, 0.0);
    ok &= o.info.grid_power_mw == 0.0 && o.info.grid_cost == 0.0 && o.transition.reward == 0.0 && o.next.soc == 0.4;
    (ok, "discharge, corrected charge (reward -510) and null step".into())
}

fn a3() -> (bool, String) {
    let p = MicrogridParams::default();
    let actions = [-20.0, 0.0, 20.0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let horizon = rng.gen_range(1..=5);
        let sc = common::random_scenario(horizon, 1000 + k);
        let grid = DpGrid::new(reachable_socs(&sc, &p, &actions, horizon), actions.to_vec(), horizon).unwrap();
        let dp = dp_solve(&sc, &p, &grid).unwrap().total_reward;
        let (_, bf) = brute_force(&sc, &p, &actions, horizon).unwrap();
        worst = worst.max((dp - bf).abs());
    }
    let sc = common::two_step_scenario();
    let (seq, bf) = brute_force(&sc, &p, &actions, 2).unwrap();
    let grid = DpGrid::new(reachable_socs(&sc, &p, &actions, 2), actions.to_vec(), 2).unwrap();
    let sol = dp_solve(&sc, &p, &grid).unwrap();
    let worked = seq == [0.0, 20.0]
        && sol.actions == [0.0, 20.0]
        && (bf - 2200.0).abs() < 1e-9
        && (sol.total_reward - 2200.0).abs() < 1e-9;
    (
        worst <= 1e-9 && worked,
        format!(
            "100 instances, worst |dp - brute force| {worst:.1e}; 2-step instance {} with {:?}",
            sol.total_reward, sol.actions
        ),
    )
}

fn a4() -> (bool, String) {
    let mut errs = Vec::new();
    for seed in 0..2 {
        errs.push(("critic", common::grad::critic_err(seed)));
        errs.push(("actor", common::grad::actor_err(seed)));
        errs.push(("alpha", common::grad::alpha_err(seed)));
        errs.push(("log_prob", common::grad::log_prob_err(seed, common::grad::BOUNDS)));
    }
    errs.push(("log_prob_asym", common::grad::log_prob_err(9, ActionBounds { low: -5.0, high: 30.0 })));
    let (name, worst) = errs.iter().copied().fold(("", 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    (worst < GRAD_TOL, format!("worst relative error {worst:.2e} ({name})"))
}

fn a9() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut demo = ReplayBuffer::new(100);
    let mut exp = ReplayBuffer::new(2000);
    for t in common::random_transitions(100, &mut rng) {
        demo.push(t);
    }
    for t in common::random_transitions(2000, &mut rng) {
        exp.push(t);
    }
    let mut count_ok = true;
    for _ in 0..1000 {
        let b = rng.gen_range(1..=1024usize);
        let rho: f64 = rng.gen_range(0.0..=1.0);
        let batch = sample_joint(&demo, &exp, b, rho, &mut rng).unwrap();
        // half-up rounding of a non-negative product
        let expected = (b as f64 * rho + 0.5).floor() as usize;
        count_ok &= batch.n_demo == expected.min(b);
    }

    let lin = RhoSchedule::Linear { total_episodes: 200 };
    let lambda = std::hint::black_box(0.9f64);
    let table_ok = lin.rho(0).unwrap() == 1.0
        && lin.rho(100).unwrap() == 0.5
        && lin.rho(199).unwrap() == 0.005
        && RhoSchedule::Exponential { lambda }.rho(10).unwrap() == lambda.powi(10)
        && (0..50).all(|e| RhoSchedule::Harmonic.rho(e).unwrap() == 1.0 / (e as f64 + 1.0));

    let sc = common::random_scenario(48, 99);
    let p = MicrogridParams::default();
    let rule = ThresholdRule::new(mean_price(&sc), &p);
    let cfg = SacConfig {
        episodes: 3,
        schedule: RhoSchedule::Linear { total_episodes: 3 },
        batch_size: 32,
        hidden: vec![16, 16],
        ..SacConfig::default()
    };
    let out = train(&sc, &p, Some(&rule), &cfg).unwrap();
    let checksum_ok = out.demo_checksum_before.is_some() && out.demo_checksum_before == out.demo_checksum_after;
    (
        count_ok && table_ok && checksum_ok,
        format!("counts {count_ok}, rho table {table_ok}, demo checksum unchanged {checksum_ok}"),
    )
}

/// Desk-scale experiment shared by the learning criteria.
fn desk_config(out: &Path) -> ExperimentConfig {
    let episodes = 40;
    ExperimentConfig {
        scenario: ScenarioSource::Generated {
            seed: 7,
            hours: 336,
            cfg: ExogenousConfig::default(),
        },
        sac: SacConfig {
            gamma: 0.95,
            reward_scale: 0.01,
            lr_actor: 3e-3,
            lr_critic: 3e-3,
            lr_alpha: 3e-3,
            init_log_alpha: -3.0,
            batch_size: 64,
            ..SacConfig::default()
        },
        episodes,
        seeds: vec![0, 1, 2],
        out: out.to_path_buf(),
        save_checkpoints: false,
        ..ExperimentConfig::default()
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn best_evals(r: &RunReport) -> Vec<f64> {
    r.runs.iter().map(|s| s.best_eval).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() {
    let mut outcomes = Vec::new();
    let mut push = |id, (pass, detail): (bool, String), elapsed, limit_s: u64| {
        let o = Outcome {
            id,
            pass,
            detail,
            elapsed,
            limit: Duration::from_secs(limit_s),
        };
        report(&o);
        outcomes.push(o);
    };

    let (r, t) = timed(a1);
    push("A1", r, t, 30);
    let (r, t) = timed(a2);
    push("A2", r, t, 1);
    let (r, t) = timed(a3);
    push("A3", r, t, 120);
    let (r, t) = timed(a4);
    push("A4", r, t, 120);
    let (r, t) = timed(a9);
    push("A9", r, t, 10);

    let tmp = tempfile::tempdir().unwrap();
    let cfg = desk_config(tmp.path());
    let scenario = cfg.scenario.load().unwrap();
    let p = cfg.microgrid.clone();
    let threshold = mean_price(&scenario);
    let rule_reward = run_episode(&mut ThresholdRule::new(threshold, &p), &scenario, &p, 0)
        .unwrap()
        .1
        .reported_reward;
    let fixed_reward = run_episode(&mut fixed_action_policy(), &scenario, &p, 0)
        .unwrap()
        .1
        .reported_reward;

    // A5 and A6 share their runs
    let ((sacfd, sac), t56) = timed(|| {
        let a = run_agent(AgentKind::Sacfd, &cfg, &scenario, threshold, &tmp.path().join("linear")).unwrap();
        let b = run_agent(AgentKind::Sac, &cfg, &scenario, threshold, &tmp.path().join("linear")).unwrap();
        (a, b)
    });
    let fd_best = best_evals(&sacfd);
    let sac_best = best_evals(&sac);
    let fd_mean = mean(&fd_best);
    push(
        "A5",
        (
            fd_mean >= rule_reward && fd_mean >= fixed_reward,
            format!(
                "SACfD mean best eval {fd_mean:.1} (seeds {fd_best:.1?}) vs rule {rule_reward:.1}, fixed {fixed_reward:.1}"
            ),
        ),
        t56,
        1200,
    );
    let wins = fd_best.iter().zip(&sac_best).filter(|(f, s)| s < f).count();
    push(
        "A6",
        (
            wins >= 2,
            format!("SAC below SACfD in {wins}/3 seeds (SAC best evals {sac_best:.1?})"),
        ),
        t56,
        1200,
    );

    let exp_cfg = ExperimentConfig {
        schedule: ScheduleKind::Exponential(0.9),
        ..cfg.clone()
    };
    let (exp_run, t7) = timed(|| {
        run_agent(AgentKind::Sacfd, &exp_cfg, &scenario, threshold, &tmp.path().join("exponential")).unwrap()
    });
    let at40 = |r: &RunReport| mean(&r.runs.iter().map(|s| s.metrics[39].eval_reward).collect::<Vec<_>>());
    let (lin40, exp40) = (at40(&sacfd), at40(&exp_run));
    push(
        "A7",
        (
            lin40 >= exp40,
            format!("episode-40 mean eval: linear {lin40:.1}, exponential(0.9) {exp40:.1}"),
        ),
        t7,
        1200,
    );

    let sweep_cfg = ExperimentConfig {
        out: tmp.path().join("sweep"),
        ..cfg.clone()
    };
    let thresholds = [
        Threshold::Percentile(5.0),
        Threshold::Percentile(50.0),
        Threshold::Percentile(95.0),
    ];
    let (pairs, t8) = timed(|| sweep_thresholds(&sweep_cfg, &thresholds).unwrap());
    let p50 = &pairs[1];
    let p5 = &pairs[0];
    push(
        "A8",
        (
            p50.sacfd_reward > p50.rule_reward && p5.sacfd_reward >= fixed_reward,
            pairs
                .iter()
                .map(|q| format!("{}: rule {:.1} / SACfD {:.1}", q.label, q.rule_reward, q.sacfd_reward))
                .collect::<Vec<_>>()
                .join("; ")
                + &format!("; fixed {fixed_reward:.1}"),
        ),
        t8,
        1800,
    );

    let (r10, t10) = timed(|| {
        let grid = DpGrid::uniform(&p, 201, 41, scenario.horizon()).unwrap();
        let sol = dp_solve(&scenario, &p, &grid).unwrap();
        let bound = sol.total_reward + sol.delta;
        let mut evals: Vec<(String, f64)> = vec![
            ("rule".into(), rule_reward),
            ("fixed".into(), fixed_reward),
            (
                "random".into(),
                run_episode(&mut random_policy(0, &p), &scenario, &p, 0)
                    .unwrap()
                    .1
                    .reported_reward,
            ),
        ];
        let cem = cem_train(&scenario, &p, &CemConfig::default()).unwrap();
        evals.push(("cem".into(), cem.best_reward));
        for (name, rep) in [("sacfd", &sacfd), ("sac", &sac), ("sacfd-exp", &exp_run)] {
            for s in &rep.runs {
                for m in &s.metrics {
                    evals.push((format!("{name} seed {} ep {}", s.seed, m.episode), m.eval_reward));
                }
            }
        }
        let (worst_name, worst) = evals
            .iter()
            .cloned()
            .fold((String::new(), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        (
            worst <= bound,
            format!(
                "oracle {:.1} + allowance {:.1}; best of {} policy evaluations {worst:.1} ({worst_name})",
                sol.total_reward,
                sol.delta,
                evals.len()
            ),
        )
    });
    push("A10", r10, t10, 300);

    let (r11, t11) = timed(|| {
        let again = ExperimentConfig {
            seeds: vec![0],
            ..cfg.clone()
        };
        let dir = tmp.path().join("rerun");
        run_agent(AgentKind::Sacfd, &again, &scenario, threshold, &dir).unwrap();
        let a = std::fs::read(metrics_path(&tmp.path().join("linear"), AgentKind::Sacfd, 0)).unwrap();
        let b = std::fs::read(metrics_path(&dir, AgentKind::Sacfd, 0)).unwrap();
        (a == b, format!("SACfD seed 0 metrics file re-run: {} bytes, identical {}", a.len(), a == b))
    });
    let limit11 = (t56.as_secs() / 6).max(1) * 2 + 60;
    push("A11", r11, t11, limit11);

    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !(o.pass && o.elapsed <= o.limit))
        .map(|o| o.id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", outcomes.len());
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
