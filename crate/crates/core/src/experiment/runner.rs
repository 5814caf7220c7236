//! Multi-seed orchestration, threshold sweeps, oracle runs and checkpoint
//! evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{AgentKind, ExperimentConfig, Threshold};
use super::metrics::{aggregate, aggregate_to_csv, mean_sd, write_metrics, AggregateRow, EpisodeMetrics};
use crate::cem::{cem_train, CemPolicy};
use crate::env::{run_episode, MicrogridParams};
use crate::error::{Error, Result};
use crate::ndiff::{Checkpoint, Mlp, MlpSpec};
use crate::oracle::{dp_solve, DpGrid, DpSolution};
use crate::policies::{fixed_action_policy, random_policy, ThresholdRule};
use crate::sac::{bounds_of, evaluate, load_actor, train};
use crate::scenario::Scenario;

/// Result of one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    /// Highest evaluation reward over the run.
    pub best_eval: f64,
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub agent: AgentKind,
    pub threshold: f64,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
    pub metrics_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
}

impl RunReport {
    pub fn mean_best_eval(&self) -> f64 {
        mean_sd(&self.runs.iter().map(|r| r.best_eval).collect::<Vec<_>>()).0
    }

    /// Mean over seeds of the evaluation reward after the last episode.
    pub fn mean_final_eval(&self) -> f64 {
        let last: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.metrics.last().map(|m| m.eval_reward))
            .collect();
        mean_sd(&last).0
    }
}

fn single_row(reward: f64, penalties: usize) -> Vec<EpisodeMetrics> {
    vec![EpisodeMetrics {
        episode: 0,
        rho: 0.0,
        reported_reward: reward,
        penalty_count: penalties,
        eval_reward: reward,
        wall_seconds: 0.0,
    }]
}

/// Trains or rolls out one agent for one seed, in memory.
pub fn run_seed(
    agent: AgentKind,
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    threshold: f64,
    seed: u64,
) -> Result<SeedRun> {
    let p = &cfg.microgrid;
    let run = match agent {
        AgentKind::Sacfd | AgentKind::Sac => {
            let rule = ThresholdRule::new(threshold, p);
            let demo = (agent == AgentKind::Sacfd).then_some(&rule);
            let out = train(scenario, p, demo, &cfg.sac_for_seed(seed))?;
            let mut ck = out.learner.nets.to_checkpoint();
            ck.push("best_actor", out.best_actor.spec.to_string(), out.best_actor.params.clone());
            SeedRun {
                seed,
                best_eval: out.best_eval_reward,
                metrics: out.metrics,
                checkpoint: Some(ck),
            }
        }
        AgentKind::Cem => {
            let out = cem_train(scenario, p, &cfg.cem_for_seed(seed))?;
            let mut ck = Checkpoint::default();
            ck.push("cem_policy", out.best.net.spec.to_string(), out.best.net.params.clone());
            SeedRun {
                seed,
                best_eval: out.best_reward,
                metrics: out.metrics,
                checkpoint: Some(ck),
            }
        }
        AgentKind::Rule => {
            let mut rule = ThresholdRule::new(threshold, p);
            let (_, m) = run_episode(&mut rule, scenario, p, seed)?;
            baseline_run(seed, m.reported_reward, m.penalty_count)
        }
        AgentKind::Fixed => {
            let (_, m) = run_episode(&mut fixed_action_policy(), scenario, p, seed)?;
            baseline_run(seed, m.reported_reward, m.penalty_count)
        }
        AgentKind::Random => {
            let (_, m) = run_episode(&mut random_policy(seed, p), scenario, p, seed)?;
            baseline_run(seed, m.reported_reward, m.penalty_count)
        }
    };
    Ok(run)
}

fn baseline_run(seed: u64, reward: f64, penalties: usize) -> SeedRun {
    SeedRun {
        seed,
        metrics: single_row(reward, penalties),
        best_eval: reward,
        checkpoint: None,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn metrics_path(out: &Path, agent: AgentKind, seed: u64) -> PathBuf {
    out.join(format!("{agent}_seed{seed}.csv"))
}

pub fn aggregate_path(out: &Path, agent: AgentKind) -> PathBuf {
    out.join(format!("{agent}_aggregate.csv"))
}

/// Runs `agent` for every seed (in parallel) and writes
/// `<agent>_seed<k>.csv`, `<agent>_aggregate.csv` and, for learning agents,
/// `<agent>_seed<k>.ckpt` into `out`.
pub fn run_agent(
    agent: AgentKind,
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    threshold: f64,
    out: &Path,
) -> Result<RunReport> {
    cfg.validate()?;
    create_dir(out)?;
    let runs: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(agent, cfg, scenario, threshold, seed))
        .collect::<Result<_>>()?;

    let mut metrics_files = Vec::with_capacity(runs.len());
    for r in &runs {
        let path = metrics_path(out, agent, r.seed);
        write_metrics(&path, &r.metrics)?;
        metrics_files.push(path);
        if let (Some(ck), true) = (&r.checkpoint, cfg.save_checkpoints) {
            ck.save(out.join(format!("{agent}_seed{}.ckpt", r.seed)))?;
        }
    }
    let per_seed: Vec<Vec<EpisodeMetrics>> = runs.iter().map(|r| r.metrics.clone()).collect();
    let agg = aggregate(&per_seed)?;
    let aggregate_file = aggregate_path(out, agent);
    write_text(&aggregate_file, &aggregate_to_csv(&agg))?;
    Ok(RunReport {
        agent,
        threshold,
        runs,
        aggregate: agg,
        metrics_files,
        aggregate_file,
    })
}

/// Runs the configured agent into the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let scenario = cfg.scenario.load()?;
    let threshold = cfg.threshold.resolve(&scenario);
    run_agent(cfg.agent, cfg, &scenario, threshold, &cfg.out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPair {
    pub label: String,
    pub threshold: f64,
    pub rule_reward: f64,
    /// Mean over seeds of the evaluation reward of the trained (best) actor.
    pub sacfd_reward: f64,
    /// Mean over seeds of the evaluation reward after the last episode.
    pub sacfd_final_reward: f64,
}

pub const SWEEP_HEADER: &str = "label,threshold,rule_reward,sacfd_reward,sacfd_final_reward";

/// For each threshold: the rule's reward and SACfD's evaluation reward
/// after training (mean over seeds). Per-threshold runs land in
/// `out/threshold_<label>/`; the pairs go to `out/sweep.csv`.
pub fn sweep_thresholds(cfg: &ExperimentConfig, thresholds: &[Threshold]) -> Result<Vec<SweepPair>> {
    if thresholds.is_empty() {
        return Err(Error::Config("sweep needs at least one threshold".into()));
    }
    let scenario = cfg.scenario.load()?;
    create_dir(&cfg.out)?;
    let mut pairs = Vec::with_capacity(thresholds.len());
    for th in thresholds {
        let value = th.resolve(&scenario);
        let label = th.to_string();
        let dir = cfg.out.join(format!("threshold_{label}"));
        let rule = run_seed(AgentKind::Rule, cfg, &scenario, value, 0)?;
        let report = run_agent(AgentKind::Sacfd, cfg, &scenario, value, &dir)?;
        pairs.push(SweepPair {
            label,
            threshold: value,
            rule_reward: rule.best_eval,
            sacfd_reward: report.mean_best_eval(),
            sacfd_final_reward: report.mean_final_eval(),
        });
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    for p in &pairs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.label, p.threshold, p.rule_reward, p.sacfd_reward, p.sacfd_final_reward
        );
    }
    write_text(&cfg.out.join("sweep.csv"), &csv)?;
    Ok(pairs)
}

pub const ORACLE_ACTIONS_HEADER: &str = "hour,requested_mw,executed_mw,soc";

/// Solves the configured scenario with the DP oracle. Writes `oracle.csv`
/// (metrics schema, one row), `oracle_actions.csv` and `oracle_summary.txt`.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<DpSolution> {
    let scenario = cfg.scenario.load()?;
    let grid = DpGrid::uniform(
        &cfg.microgrid,
        cfg.oracle_soc_points,
        cfg.oracle_action_points,
        scenario.horizon(),
    )?;
    let sol = dp_solve(&scenario, &cfg.microgrid, &grid)?;
    create_dir(&cfg.out)?;
    write_metrics(&cfg.out.join("oracle.csv"), &single_row(sol.total_reward, 0))?;
    let mut csv = format!("{ORACLE_ACTIONS_HEADER}\n");
    for (t, (a, e)) in sol.actions.iter().zip(&sol.executed).enumerate() {
        let _ = writeln!(csv, "{t},{a},{e},{}", sol.soc_path[t]);
    }
    write_text(&cfg.out.join("oracle_actions.csv"), &csv)?;
    let summary = format!(
        "total_reward = {}\ndelta = {}\nstep_delta_max = {}\nsoc_points = {}\naction_points = {}\n",
        sol.total_reward, sol.delta, sol.step_delta_max, cfg.oracle_soc_points, cfg.oracle_action_points
    );
    write_text(&cfg.out.join("oracle_summary.txt"), &summary)?;
    Ok(sol)
}

/// Reported reward of a saved policy on a scenario. SAC checkpoints use the
/// best actor if present; CEM checkpoints hold a `cem_policy` entry.
pub fn evaluate_checkpoint(ck: &Checkpoint, scenario: &Scenario, params: &MicrogridParams) -> Result<f64> {
    if let Some(e) = ck.get("cem_policy") {
        let spec: MlpSpec = e.meta.parse()?;
        let mut policy = CemPolicy {
            net: Mlp::from_params(spec, e.values.clone())?,
            bounds: bounds_of(params),
        };
        return Ok(run_episode(&mut policy, scenario, params, 0)?.1.reported_reward);
    }
    let actor = match ck.get("best_actor") {
        Some(e) => Mlp::from_params(e.meta.parse()?, e.values.clone())?,
        None => load_actor(ck)?,
    };
    evaluate(&actor, scenario, params)
}
