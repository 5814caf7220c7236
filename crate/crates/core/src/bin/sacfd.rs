use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sacfd::experiment::{
    emit_plots, evaluate_checkpoint, run_experiment, run_oracle, sweep_thresholds, Baseline, ExperimentConfig,
    RewardColumn, ScenarioSource, SeriesInput, Threshold,
};
use sacfd::ndiff::Checkpoint;
use sacfd::scenario::write_scenario;
use sacfd::{Error, Result};

#[derive(Parser)]
#[command(name = "sacfd", version, about = "Microgrid battery dispatch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (or file, for generate-scenario and plot).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario CSV.
    GenerateScenario {
        #[command(flatten)]
        common: Common,
        /// Number of hours to generate (defaults to the config's).
        #[arg(long)]
        hours: Option<usize>,
    },
    /// Train or roll out the configured agent for every seed.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved policy on the configured scenario.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Solve the configured scenario with the DP oracle.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Rule versus SACfD for several rule thresholds.
    SweepThresholds {
        #[command(flatten)]
        common: Common,
        /// Comma-separated thresholds: `mean`, `pNN` or a price.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<String>>,
    },
    /// Draw reward curves from metrics files.
    Plot {
        #[command(flatten)]
        common: Common,
        /// `label=file1,file2,...`, one per curve.
        #[arg(long, required = true)]
        series: Vec<String>,
        /// `label=value` horizontal line.
        #[arg(long)]
        baseline: Vec<String>,
        /// Plot the training-episode reward instead of the evaluation reward.
        #[arg(long)]
        reported: bool,
        #[arg(long, default_value = "reward per episode")]
        title: String,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_text("", None)?,
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn split_label(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .ok_or_else(|| Error::Config(format!("expected `label=value`, got `{s}`")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateScenario { common, hours } => {
            let mut cfg = load_config(&common)?;
            let ScenarioSource::Generated {
                seed,
                hours: cfg_hours,
                cfg: exo,
            } = &mut cfg.scenario
            else {
                return Err(Error::Config("config names a scenario file; nothing to generate".into()));
            };
            if let Some(s) = common.seed {
                *seed = s;
            }
            if let Some(h) = hours {
                *cfg_hours = h;
            }
            let scenario = sacfd::scenario::generate_exogenous(*seed, *cfg_hours, exo)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("scenario.csv"));
            write_scenario(&scenario, &out)?;
            println!("wrote {} hours to {}", scenario.horizon(), out.display());
        }
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let report = run_experiment(&cfg)?;
            for r in &report.runs {
                println!("{} seed {}: best eval reward {:.2}", report.agent, r.seed, r.best_eval);
            }
            println!("aggregate written to {}", report.aggregate_file.display());
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let scenario = cfg.scenario.load()?;
            let ck = Checkpoint::load(&checkpoint)?;
            let reward = evaluate_checkpoint(&ck, &scenario, &cfg.microgrid)?;
            println!("{reward}");
        }
        Command::Oracle { common } => {
            let cfg = load_config(&common)?;
            let sol = run_oracle(&cfg)?;
            println!("oracle reward {} (allowance {})", sol.total_reward, sol.delta);
        }
        Command::SweepThresholds { common, thresholds } => {
            let cfg = load_config(&common)?;
            let thresholds = match thresholds {
                Some(list) => list.iter().map(|t| t.parse()).collect::<Result<Vec<Threshold>>>()?,
                None => cfg.sweep_thresholds.clone(),
            };
            for p in sweep_thresholds(&cfg, &thresholds)? {
                println!(
                    "{} ({:.2}): rule {:.2}, sacfd {:.2}",
                    p.label, p.threshold, p.rule_reward, p.sacfd_reward
                );
            }
        }
        Command::Plot {
            common,
            series,
            baseline,
            reported,
            title,
        } => {
            let series = series
                .iter()
                .map(|s| {
                    let (label, files) = split_label(s)?;
                    Ok(SeriesInput {
                        label: label.to_string(),
                        files: files.split(',').filter(|f| !f.is_empty()).map(PathBuf::from).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let baselines = baseline
                .iter()
                .map(|b| {
                    let (label, v) = split_label(b)?;
                    let value = v
                        .parse()
                        .map_err(|_| Error::Config(format!("bad baseline value `{v}`")))?;
                    Ok(Baseline {
                        label: label.to_string(),
                        value,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let col = if reported {
                RewardColumn::Reported
            } else {
                RewardColumn::Eval
            };
            let out = common.out.unwrap_or_else(|| PathBuf::from("rewards.svg"));
            emit_plots(&series, &baselines, col, &title, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
