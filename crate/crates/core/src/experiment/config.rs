//! Plain-text experiment configuration: `key = value` lines, `#` comments,
//! dotted section prefixes (`sac.gamma = 0.99`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cem::CemConfig;
use crate::env::MicrogridParams;
use crate::error::{Error, Result};
use crate::replay::RhoSchedule;
use crate::sac::SacConfig;
use crate::scenario::{generate_exogenous, load_scenario, mean_price, ExogenousConfig, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    Sacfd,
    Sac,
    Cem,
    Rule,
    Fixed,
    Random,
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sacfd" => AgentKind::Sacfd,
            "sac" => AgentKind::Sac,
            "cem" => AgentKind::Cem,
            "rule" => AgentKind::Rule,
            "fixed" => AgentKind::Fixed,
            "random" => AgentKind::Random,
            _ => return Err(Error::Config(format!("unknown agent `{s}`"))),
        })
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Sacfd => "sacfd",
            AgentKind::Sac => "sac",
            AgentKind::Cem => "cem",
            AgentKind::Rule => "rule",
            AgentKind::Fixed => "fixed",
            AgentKind::Random => "random",
        })
    }
}

/// Rule threshold: a price, the scenario mean, or a price percentile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Mean,
    Percentile(f64),
    Price(f64),
}

impl Threshold {
    pub fn resolve(&self, scenario: &Scenario) -> f64 {
        match *self {
            Threshold::Mean => mean_price(scenario),
            Threshold::Percentile(p) => scenario.price_percentile(p),
            Threshold::Price(v) => v,
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "mean" {
            return Ok(Threshold::Mean);
        }
        if let Some(p) = s.strip_prefix('p') {
            let pct: f64 = p
                .parse()
                .map_err(|_| Error::Config(format!("bad percentile threshold `{s}`")))?;
            if !(0.0..=100.0).contains(&pct) {
                return Err(Error::Config(format!("percentile `{s}` outside 0..100")));
            }
            return Ok(Threshold::Percentile(pct));
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Threshold::Price)
            .ok_or_else(|| Error::Config(format!("bad threshold `{s}` (use mean, pNN or a price)")))
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Mean => f.write_str("mean"),
            Threshold::Percentile(p) => write!(f, "p{p}"),
            Threshold::Price(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    Generated { seed: u64, hours: usize, cfg: ExogenousConfig },
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::File(p) => load_scenario(p),
            ScenarioSource::Generated { seed, hours, cfg } => generate_exogenous(*seed, *hours, cfg),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub microgrid: MicrogridParams,
    pub agent: AgentKind,
    pub sac: SacConfig,
    pub cem: CemConfig,
    pub threshold: Threshold,
    pub sweep_thresholds: Vec<Threshold>,
    pub schedule: ScheduleKind,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub oracle_soc_points: usize,
    pub oracle_action_points: usize,
    pub save_checkpoints: bool,
}

/// Schedule as written in the config; the linear variant takes its length
/// from `episodes`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleKind {
    Linear,
    Exponential(f64),
    Harmonic,
    Constant(f64),
}

impl ScheduleKind {
    pub fn schedule(&self, episodes: usize) -> RhoSchedule {
        match *self {
            ScheduleKind::Linear => RhoSchedule::Linear {
                total_episodes: episodes,
            },
            ScheduleKind::Exponential(lambda) => RhoSchedule::Exponential { lambda },
            ScheduleKind::Harmonic => RhoSchedule::Harmonic,
            ScheduleKind::Constant(v) => RhoSchedule::Constant(v),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    /// `linear`, `harmonic`, `exponential:0.9`, `constant:0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.and_then(|a| a.parse().ok())
                .ok_or_else(|| Error::Config(format!("schedule `{s}` needs a numeric argument")))
        };
        Ok(match kind {
            "linear" => ScheduleKind::Linear,
            "harmonic" => ScheduleKind::Harmonic,
            "exponential" => ScheduleKind::Exponential(num(arg)?),
            "constant" => ScheduleKind::Constant(num(arg)?),
            _ => return Err(Error::Config(format!("unknown schedule `{s}`"))),
        })
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Linear => f.write_str("linear"),
            ScheduleKind::Harmonic => f.write_str("harmonic"),
            ScheduleKind::Exponential(l) => write!(f, "exponential:{l}"),
            ScheduleKind::Constant(v) => write!(f, "constant:{v}"),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let episodes = 200;
        ExperimentConfig {
            scenario: ScenarioSource::Generated {
                seed: 0,
                hours: 8760,
                cfg: ExogenousConfig::default(),
            },
            microgrid: MicrogridParams::default(),
            agent: AgentKind::Sacfd,
            sac: SacConfig::default(),
            cem: CemConfig::default(),
            threshold: Threshold::Mean,
            sweep_thresholds: vec![
                Threshold::Percentile(5.0),
                Threshold::Percentile(50.0),
                Threshold::Percentile(95.0),
            ],
            schedule: ScheduleKind::Linear,
            episodes,
            seeds: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("runs"),
            oracle_soc_points: 201,
            oracle_action_points: 41,
            save_checkpoints: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults. Relative scenario paths
    /// are resolved against `base_dir` when given.
    pub fn from_text(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut gen_seed = 0u64;
        let mut gen_hours = 8760usize;
        let mut exo = ExogenousConfig::default();
        let mut file: Option<PathBuf> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let k = key;
            let m = &mut cfg.microgrid;
            let s = &mut cfg.sac;
            let c = &mut cfg.cem;
            match key {
                "agent" => cfg.agent = parse(k, value)?,
                "episodes" => cfg.episodes = parse(k, value)?,
                "seeds" => cfg.seeds = parse_list(k, value)?,
                "out" => cfg.out = PathBuf::from(value),
                "schedule" => cfg.schedule = parse(k, value)?,
                "save_checkpoints" => cfg.save_checkpoints = parse(k, value)?,
                "rule.threshold" => cfg.threshold = parse(k, value)?,
                "sweep.thresholds" => cfg.sweep_thresholds = parse_list(k, value)?,
                "oracle.soc_points" => cfg.oracle_soc_points = parse(k, value)?,
                "oracle.action_points" => cfg.oracle_action_points = parse(k, value)?,

                "scenario.file" => {
                    let p = PathBuf::from(value);
                    file = Some(match base_dir {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p,
                    });
                }
                "scenario.seed" => gen_seed = parse(k, value)?,
                "scenario.hours" => gen_hours = parse(k, value)?,
                "scenario.wind_capacity_factor" => exo.wind_capacity_factor = parse(k, value)?,
                "scenario.pv_capacity_factor" => exo.pv_capacity_factor = parse(k, value)?,
                "scenario.mean_price" => exo.mean_price = parse(k, value)?,
                "scenario.price_diurnal_amplitude" => exo.price_diurnal_amplitude = parse(k, value)?,
                "scenario.price_volatility" => exo.price_volatility = parse(k, value)?,
                "scenario.price_persistence" => exo.price_persistence = parse(k, value)?,
                "scenario.start_weekday" => exo.start_weekday = parse(k, value)?,
                "scenario.load.peak_mw" => exo.load.peak_mw = parse(k, value)?,
                "scenario.load.standby_mw" => exo.load.standby_mw = parse(k, value)?,
                "scenario.load.shift_start_hour" => exo.load.shift_start_hour = parse(k, value)?,
                "scenario.load.shift_end_hour" => exo.load.shift_end_hour = parse(k, value)?,
                "scenario.load.weekly_noise_sd" => exo.load.weekly_noise_sd = parse(k, value)?,
                "scenario.load.hourly_noise_sd" => exo.load.hourly_noise_sd = parse(k, value)?,
                "scenario.load.seasonal_amplitude" => exo.load.seasonal_amplitude = parse(k, value)?,
                "scenario.load.holidays" => exo.load.holidays = parse_list(k, value)?,
                "scenario.load.seed" => exo.load.seed = parse(k, value)?,

                "microgrid.cav" => m.cav = parse(k, value)?,
                "microgrid.soc_min" => m.soc_min = parse(k, value)?,
                "microgrid.soc_max" => m.soc_max = parse(k, value)?,
                "microgrid.soc_initial" => m.soc_initial = parse(k, value)?,
                "microgrid.p_b_min" => m.p_b_min = parse(k, value)?,
                "microgrid.p_b_max" => m.p_b_max = parse(k, value)?,
                "microgrid.eta_charge" => m.eta_charge = parse(k, value)?,
                "microgrid.eta_discharge" => m.eta_discharge = parse(k, value)?,
                "microgrid.sigma" => m.sigma = parse(k, value)?,
                "microgrid.c_a" => m.c_a = parse(k, value)?,
                "microgrid.delta_t" => m.delta_t = parse(k, value)?,
                "microgrid.omega" => m.omega = parse(k, value)?,
                "microgrid.clamp_mode" => m.clamp_mode = parse(k, value)?,
                "microgrid.wind_capacity_mw" => m.wind_capacity_mw = parse(k, value)?,
                "microgrid.pv_capacity_mw" => m.pv_capacity_mw = parse(k, value)?,

                "sac.gamma" => s.gamma = parse(k, value)?,
                "sac.tau" => s.tau = parse(k, value)?,
                "sac.lr_actor" => s.lr_actor = parse(k, value)?,
                "sac.lr_critic" => s.lr_critic = parse(k, value)?,
                "sac.lr_alpha" => s.lr_alpha = parse(k, value)?,
                "sac.batch_size" => s.batch_size = parse(k, value)?,
                "sac.target_entropy" => s.target_entropy = parse(k, value)?,
                "sac.init_log_alpha" => s.init_log_alpha = parse(k, value)?,
                "sac.updates_per_step" => s.updates_per_step = parse(k, value)?,
                "sac.warmup_steps" => s.warmup_steps = parse(k, value)?,
                "sac.reward_scale" => s.reward_scale = parse(k, value)?,
                "sac.hidden" => s.hidden = parse_list(k, value)?,
                "sac.activation" => s.activation = parse(k, value)?,
                "sac.buffer_capacity" => s.buffer_capacity = Some(parse(k, value)?),
                "sac.record_wall_time" => s.record_wall_time = parse(k, value)?,

                "cem.population" => c.population = parse(k, value)?,
                "cem.elite_fraction" => c.elite_fraction = parse(k, value)?,
                "cem.init_mean" => c.init_mean = parse(k, value)?,
                "cem.init_sd" => c.init_sd = parse(k, value)?,
                "cem.sd_floor" => c.sd_floor = parse(k, value)?,
                "cem.generations" => c.generations = parse(k, value)?,
                "cem.hidden" => c.hidden = parse_list(k, value)?,

                _ => return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1))),
            }
        }

        // the microgrid's renewable capacities drive the generator too
        exo.wind_capacity_mw = cfg.microgrid.wind_capacity_mw;
        exo.pv_capacity_mw = cfg.microgrid.pv_capacity_mw;
        cfg.scenario = match file {
            Some(p) => ScenarioSource::File(p),
            None => ScenarioSource::Generated {
                seed: gen_seed,
                hours: gen_hours,
                cfg: exo,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_text(&text, path.parent())
    }

    /// SAC settings with the experiment-level episode count, schedule and
    /// seed folded in.
    pub fn sac_for_seed(&self, seed: u64) -> SacConfig {
        SacConfig {
            episodes: self.episodes,
            schedule: self.schedule.schedule(self.episodes),
            seed,
            ..self.sac.clone()
        }
    }

    pub fn cem_for_seed(&self, seed: u64) -> CemConfig {
        CemConfig {
            generations: self.episodes,
            seed,
            ..self.cem.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if self.oracle_soc_points < 2 || self.oracle_action_points < 2 {
            return Err(Error::Config("oracle grids need at least 2 points".into()));
        }
        self.microgrid.validate()?;
        self.sac_for_seed(0).validate()?;
        self.cem_for_seed(0).validate()?;
        self.schedule.schedule(self.episodes).rho(0)?;
        if let ScenarioSource::Generated { hours, cfg, .. } = &self.scenario {
            if *hours == 0 {
                return Err(Error::Config("scenario.hours must be >= 1".into()));
            }
            cfg.load.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "\
# desk run
agent = sac   # trailing comment
episodes = 40
seeds = 0, 1, 2
schedule = exponential:0.9
rule.threshold = p50
sac.gamma = 0.95
sac.hidden = 32,32
microgrid.omega = 5
scenario.hours = 336
";
        let cfg = ExperimentConfig::from_text(text, None).unwrap();
        assert_eq!(cfg.agent, AgentKind::Sac);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.schedule, ScheduleKind::Exponential(0.9));
        assert_eq!(cfg.threshold, Threshold::Percentile(50.0));
        assert_eq!(cfg.sac.gamma, 0.95);
        assert_eq!(cfg.sac.hidden, vec![32, 32]);
        assert_eq!(cfg.microgrid.omega, 5.0);
        assert!(matches!(cfg.scenario, ScenarioSource::Generated { hours: 336, .. }));
        assert_eq!(cfg.sac_for_seed(3).schedule, RhoSchedule::Exponential { lambda: 0.9 });
    }

    #[test]
    fn defaults_have_five_seeds() {
        let cfg = ExperimentConfig::from_text("", None).unwrap();
        assert_eq!(cfg.seeds.len(), 5);
        assert_eq!(cfg.threshold, Threshold::Mean);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "agent = ppo",
            "nonsense",
            "sac.gamma = high",
            "seeds = ",
            "unknown.key = 1",
            "schedule = exponential",
            "rule.threshold = p150",
            "microgrid.soc_min = 0.9",
        ] {
            assert!(ExperimentConfig::from_text(bad, None).is_err(), "{bad}");
        }
    }

    #[test]
    fn relative_scenario_path() {
        let cfg = ExperimentConfig::from_text("scenario.file = data/s.csv", Some(Path::new("/cfg"))).unwrap();
        assert_eq!(cfg.scenario, ScenarioSource::File(PathBuf::from("/cfg/data/s.csv")));
    }
}
