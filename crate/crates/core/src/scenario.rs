//! Hourly exogenous inputs: wholesale price, renewable output, factory demand.
//!
//! Scenarios are read from and written to a canonical comma-separated file,
//! or produced synthetically by [`generate_exogenous`] and [`generate_load`].

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Header of the canonical scenario file.
pub const SCENARIO_HEADER: &str = "hour,price_cad_per_mwh,wind_mw,pv_mw,demand_mw,workday";

const COLUMNS: [&str; 6] = [
    "hour",
    "price_cad_per_mwh",
    "wind_mw",
    "pv_mw",
    "demand_mw",
    "workday",
];

/// One hour of exogenous data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioRecord {
    pub hour_index: usize,
    /// Wholesale price in C$/MWh.
    pub price: f64,
    pub wind_mw: f64,
    pub pv_mw: f64,
    pub demand_mw: f64,
    pub workday: bool,
}

impl ScenarioRecord {
    /// Available renewable power.
    pub fn re_mw(&self) -> f64 {
        self.wind_mw + self.pv_mw
    }

    pub fn hour_of_day(&self) -> usize {
        self.hour_index % 24
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    records: Vec<ScenarioRecord>,
    /// Weekday of hour 0, Monday = 0.
    pub start_weekday: u8,
    pub metadata: String,
}

impl Scenario {
    /// Builds a scenario, checking every record invariant.
    pub fn new(records: Vec<ScenarioRecord>, start_weekday: u8, metadata: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidScenario("scenario has no records".into()));
        }
        if start_weekday > 6 {
            return Err(Error::InvalidScenario(format!("start_weekday {start_weekday} not in 0..=6")));
        }
        for (row, r) in records.iter().enumerate() {
            if r.hour_index != row {
                return Err(Error::ScenarioParse {
                    row: row + 1,
                    column: "hour".into(),
                    reason: format!("expected hour {row}, found {}", r.hour_index),
                });
            }
            check_record(r, row + 1)?;
        }
        Ok(Scenario {
            records,
            start_weekday,
            metadata: metadata.into(),
        })
    }

    pub fn records(&self) -> &[ScenarioRecord] {
        &self.records
    }

    pub fn record(&self, t: usize) -> &ScenarioRecord {
        &self.records[t]
    }

    /// Horizon T in hours.
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price).collect()
    }

    pub fn max_demand(&self) -> f64 {
        self.records.iter().map(|r| r.demand_mw).fold(0.0, f64::max)
    }

    /// Checks the per-hour renewable output against installed capacities.
    pub fn check_capacities(&self, wind_capacity_mw: f64, pv_capacity_mw: f64) -> Result<()> {
        for r in &self.records {
            if r.wind_mw > wind_capacity_mw + 1e-9 || r.pv_mw > pv_capacity_mw + 1e-9 {
                return Err(Error::InvalidScenario(format!(
                    "hour {}: renewable output exceeds installed capacity",
                    r.hour_index
                )));
            }
        }
        Ok(())
    }

    /// Prefix of the first `hours` records.
    pub fn truncated(&self, hours: usize) -> Result<Self> {
        let n = hours.min(self.records.len());
        Scenario::new(self.records[..n].to_vec(), self.start_weekday, self.metadata.clone())
    }

    /// Linear-interpolated percentile (0..=100) of the price column.
    pub fn price_percentile(&self, pct: f64) -> f64 {
        let mut p = self.prices();
        p.sort_by(f64::total_cmp);
        let pos = (pct.clamp(0.0, 100.0) / 100.0) * (p.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        p[lo] + (p[hi] - p[lo]) * (pos - lo as f64)
    }
}

fn check_record(r: &ScenarioRecord, row: usize) -> Result<()> {
    let fields = [
        ("price_cad_per_mwh", r.price, false),
        ("wind_mw", r.wind_mw, true),
        ("pv_mw", r.pv_mw, true),
        ("demand_mw", r.demand_mw, true),
    ];
    for (column, v, non_negative) in fields {
        if !v.is_finite() {
            return Err(Error::ScenarioParse {
                row,
                column: column.into(),
                reason: format!("non-finite value {v}"),
            });
        }
        if non_negative && v < 0.0 {
            return Err(Error::ScenarioParse {
                row,
                column: column.into(),
                reason: format!("negative power {v}"),
            });
        }
    }
    Ok(())
}

/// Arithmetic mean of the price column.
pub fn mean_price(s: &Scenario) -> f64 {
    s.records.iter().map(|r| r.price).sum::<f64>() / s.records.len() as f64
}

/// Reads and validates a canonical scenario file.
///
/// Rows are numbered from 1 (the first data row after the header).
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != COLUMNS {
        return Err(Error::ScenarioHeader {
            expected: SCENARIO_HEADER.into(),
            found: found.join(","),
        });
    }

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::ScenarioParse {
            row,
            column: "*".into(),
            reason: e.to_string(),
        })?;
        if rec.len() != COLUMNS.len() {
            return Err(Error::ScenarioParse {
                row,
                column: "*".into(),
                reason: format!("expected {} fields, found {}", COLUMNS.len(), rec.len()),
            });
        }
        let num = |col: usize| -> Result<f64> {
            rec[col].parse::<f64>().map_err(|e| Error::ScenarioParse {
                row,
                column: COLUMNS[col].into(),
                reason: format!("`{}`: {e}", &rec[col]),
            })
        };
        let hour_index = rec[0].parse::<usize>().map_err(|e| Error::ScenarioParse {
            row,
            column: "hour".into(),
            reason: format!("`{}`: {e}", &rec[0]),
        })?;
        let workday = match &rec[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::ScenarioParse {
                    row,
                    column: "workday".into(),
                    reason: format!("expected 0 or 1, found `{other}`"),
                })
            }
        };
        let record = ScenarioRecord {
            hour_index,
            price: num(1)?,
            wind_mw: num(2)?,
            pv_mw: num(3)?,
            demand_mw: num(4)?,
            workday,
        };
        if record.hour_index != records.len() {
            return Err(Error::ScenarioParse {
                row,
                column: "hour".into(),
                reason: format!(
                    "hour index must increase by 1 from 0: expected {}, found {}",
                    records.len(),
                    record.hour_index
                ),
            });
        }
        check_record(&record, row)?;
        records.push(record);
    }
    Scenario::new(records, 0, path.display().to_string())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::InvalidScenario(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the canonical form of a scenario.
///
/// Floats use the shortest representation that parses back to the same
/// value, so a canonical file survives a load/write round trip unchanged.
pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{SCENARIO_HEADER}")?;
        for r in &s.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.hour_index,
                r.price,
                r.wind_mw,
                r.pv_mw,
                r.demand_mw,
                u8::from(r.workday)
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Statutory holidays of 2018 in Alberta as day-of-year indices (Jan 1 = 0).
pub const ALBERTA_2018_HOLIDAYS: [usize; 11] = [0, 49, 88, 140, 182, 217, 245, 280, 315, 358, 359];

/// Synthetic single-shift factory load.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadGenConfig {
    pub peak_mw: f64,
    pub standby_mw: f64,
    /// First shift hour (inclusive).
    pub shift_start_hour: usize,
    /// Last shift hour (exclusive).
    pub shift_end_hour: usize,
    /// SD of the multiplicative per-week factor.
    pub weekly_noise_sd: f64,
    /// SD of additive hourly noise, as a fraction of `peak_mw`.
    pub hourly_noise_sd: f64,
    /// Relative demand increase at midwinter and midsummer.
    pub seasonal_amplitude: f64,
    pub holidays: Vec<usize>,
    pub seed: u64,
}

impl Default for LoadGenConfig {
    fn default() -> Self {
        LoadGenConfig {
            peak_mw: 25.0,
            standby_mw: 0.0,
            shift_start_hour: 6,
            shift_end_hour: 18,
            weekly_noise_sd: 0.1,
            hourly_noise_sd: 0.05,
            seasonal_amplitude: 0.15,
            holidays: ALBERTA_2018_HOLIDAYS.to_vec(),
            seed: 0,
        }
    }
}

impl LoadGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.standby_mw >= 0.0 && self.standby_mw <= self.peak_mw) {
            return bad(format!(
                "load: need 0 <= standby_mw ({}) <= peak_mw ({})",
                self.standby_mw, self.peak_mw
            ));
        }
        for (name, sd) in [("weekly_noise_sd", self.weekly_noise_sd), ("hourly_noise_sd", self.hourly_noise_sd)] {
            if !(0.0..=1.0).contains(&sd) {
                return bad(format!("load: {name} = {sd} outside [0, 1]"));
            }
        }
        if !(self.seasonal_amplitude >= 0.0) {
            return bad("load: seasonal_amplitude must be >= 0".into());
        }
        if self.shift_start_hour >= self.shift_end_hour || self.shift_end_hour > 24 {
            return bad(format!(
                "load: shift hours {}..{} invalid",
                self.shift_start_hour, self.shift_end_hour
            ));
        }
        Ok(())
    }

    /// Noise-free shape of a workday hour in [0, 1]: two peaks around
    /// mid-morning and mid-afternoon with a lunch dip between them.
    pub fn template(&self, hour_of_day: usize) -> f64 {
        if hour_of_day < self.shift_start_hour || hour_of_day >= self.shift_end_hour {
            return 0.0;
        }
        let h = hour_of_day as f64;
        let bump = |c: f64| (-((h - c) / 1.5).powi(2)).exp();
        (0.75 + 0.25 * (bump(10.0) + bump(14.0))).min(1.0)
    }

    /// Seasonal multiplier, >= 1, peaking near midwinter and midsummer.
    pub fn seasonal_factor(&self, day_of_year: usize) -> f64 {
        let phase = 4.0 * PI * (day_of_year as f64 - 172.0) / 365.0;
        1.0 + self.seasonal_amplitude * 0.5 * (1.0 + phase.cos())
    }
}

/// Weekday (Monday = 0) of day `day`.
pub fn weekday(start_weekday: u8, day: usize) -> usize {
    (start_weekday as usize + day) % 7
}

pub fn is_workday(start_weekday: u8, day: usize, holidays: &[usize]) -> bool {
    weekday(start_weekday, day) < 5 && !holidays.contains(&(day % 365))
}

/// Hourly factory demand.
///
/// Off days sit at `standby_mw`. Workday hours follow the shift template,
/// scaled by a per-week Gaussian factor and the seasonal factor, plus hourly
/// Gaussian noise; the result is clipped at zero.
pub fn generate_load(cfg: &LoadGenConfig, hours: usize, start_weekday: u8) -> Result<Vec<f64>> {
    cfg.validate()?;
    if hours == 0 {
        return Err(Error::Config("load: horizon must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weeks = hours.div_ceil(168);
    let weekly: Vec<f64> = (0..weeks)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (1.0 + cfg.weekly_noise_sd * z).max(0.0)
        })
        .collect();

    let span = cfg.peak_mw - cfg.standby_mw;
    let mut out = Vec::with_capacity(hours);
    for t in 0..hours {
        // one draw per hour keeps the stream aligned whatever the calendar
        let z: f64 = rng.sample(StandardNormal);
        let day = t / 24;
        let h = t % 24;
        if !is_workday(start_weekday, day, &cfg.holidays) {
            out.push(cfg.standby_mw);
            continue;
        }
        let shape = cfg.template(h);
        let base = cfg.standby_mw + span * shape * weekly[t / 168] * cfg.seasonal_factor(day % 365);
        let noisy = base + cfg.hourly_noise_sd * cfg.peak_mw * z;
        out.push(noisy.max(0.0));
    }
    Ok(out)
}

/// Targets and shape parameters for the synthetic exogenous series.
#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousConfig {
    pub wind_capacity_mw: f64,
    pub pv_capacity_mw: f64,
    pub wind_capacity_factor: f64,
    pub pv_capacity_factor: f64,
    pub mean_price: f64,
    /// Relative amplitude of the diurnal price pattern.
    pub price_diurnal_amplitude: f64,
    /// Stationary SD of the AR(1) price deviation, relative to the mean.
    pub price_volatility: f64,
    /// Hourly persistence of the AR(1) price deviation.
    pub price_persistence: f64,
    pub start_weekday: u8,
    pub load: LoadGenConfig,
}

impl Default for ExogenousConfig {
    fn default() -> Self {
        ExogenousConfig {
            wind_capacity_mw: 22.5,
            pv_capacity_mw: 5.0,
            wind_capacity_factor: 0.508,
            pv_capacity_factor: 0.17,
            mean_price: 50.0,
            price_diurnal_amplitude: 0.4,
            price_volatility: 0.6,
            price_persistence: 0.9,
            start_weekday: 0,
            load: LoadGenConfig::default(),
        }
    }
}

/// Generates a full scenario: wind, PV, price and demand.
///
/// Wind and PV are latent autoregressive processes passed through a
/// saturating transform whose offset/scale is solved by bisection so the
/// realized capacity factor hits the target. Prices are a clipped AR(1)
/// around the target mean plus a diurnal term, rescaled to the exact mean.
pub fn generate_exogenous(seed: u64, hours: usize, cfg: &ExogenousConfig) -> Result<Scenario> {
    if hours == 0 {
        return Err(Error::Config("scenario horizon must be >= 1".into()));
    }
    let cf_ok = |v: f64| (0.0..1.0).contains(&v);
    if !cf_ok(cfg.wind_capacity_factor) || !cf_ok(cfg.pv_capacity_factor) {
        return Err(Error::InfeasibleTarget(format!(
            "capacity factors must lie in [0, 1): wind {}, pv {}",
            cfg.wind_capacity_factor, cfg.pv_capacity_factor
        )));
    }
    if !(cfg.mean_price > 0.0) {
        return Err(Error::InfeasibleTarget(format!("mean price {} must be > 0", cfg.mean_price)));
    }
    if !(cfg.wind_capacity_mw >= 0.0 && cfg.pv_capacity_mw >= 0.0) {
        return Err(Error::Config("installed capacities must be >= 0".into()));
    }
    if !(0.0..1.0).contains(&cfg.price_persistence) || cfg.price_volatility < 0.0 {
        return Err(Error::Config("price process: need 0 <= persistence < 1 and volatility >= 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wind = wind_series(&mut rng, hours, cfg)?;
    let pv = pv_series(&mut rng, hours, cfg)?;
    let price = price_series(&mut rng, hours, cfg);

    let mut load_cfg = cfg.load.clone();
    load_cfg.seed = rng.gen();
    let demand = generate_load(&load_cfg, hours, cfg.start_weekday)?;

    let records = (0..hours)
        .map(|t| ScenarioRecord {
            hour_index: t,
            price: price[t],
            wind_mw: wind[t],
            pv_mw: pv[t],
            demand_mw: demand[t],
            workday: is_workday(cfg.start_weekday, t / 24, &cfg.load.holidays),
        })
        .collect();
    Scenario::new(
        records,
        cfg.start_weekday,
        format!("synthetic seed={seed} hours={hours}"),
    )
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    // unit stationary variance
    let innov = (1.0 - phi * phi).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        let z: f64 = rng.sample(StandardNormal);
        x = phi * x + innov * z;
    }
    out
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for increasing `f`.
fn bisect(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn wind_series(rng: &mut ChaCha8Rng, hours: usize, cfg: &ExogenousConfig) -> Result<Vec<f64>> {
    let latent = ar1(rng, hours, 0.97);
    let cap = cfg.wind_capacity_mw;
    if cfg.wind_capacity_factor == 0.0 || cap == 0.0 {
        return Ok(vec![0.0; hours]);
    }
    let cf = |offset: f64| latent.iter().map(|z| logistic(offset + 2.0 * z)).sum::<f64>() / hours as f64;
    let offset = bisect(-60.0, 60.0, cfg.wind_capacity_factor, cf);
    Ok(latent.iter().map(|z| cap * logistic(offset + 2.0 * z)).collect())
}

/// Clear-sky PV shape in [0, 1]; zero outside daylight hours.
pub fn pv_clear_sky(hour_of_day: usize, day_of_year: usize) -> f64 {
    // daylight from ~8 h at midwinter to ~16 h at midsummer, solar noon at 13
    let season = (2.0 * PI * (day_of_year as f64 - 172.0) / 365.0).cos();
    let half_day = 6.0 + 2.0 * season;
    let x = (hour_of_day as f64 + 0.5 - 13.0) / half_day;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * PI * x).cos() * (0.75 + 0.25 * season)
    }
}

fn pv_series(rng: &mut ChaCha8Rng, hours: usize, cfg: &ExogenousConfig) -> Result<Vec<f64>> {
    let days = hours.div_ceil(24);
    let cloud_latent = ar1(rng, days, 0.6);
    let cap = cfg.pv_capacity_mw;
    if cfg.pv_capacity_factor == 0.0 || cap == 0.0 {
        return Ok(vec![0.0; hours]);
    }
    let shape: Vec<f64> = (0..hours)
        .map(|t| {
            let cloud = (0.65 + 0.3 * cloud_latent[t / 24]).clamp(0.1, 1.0);
            pv_clear_sky(t % 24, (t / 24) % 365) * cloud
        })
        .collect();
    // saturating every daylight hour at capacity is the ceiling
    let ceiling = shape.iter().filter(|&&s| s > 0.0).count() as f64 / hours as f64;
    if cfg.pv_capacity_factor >= ceiling {
        return Err(Error::InfeasibleTarget(format!(
            "pv capacity factor {} exceeds diurnal ceiling {ceiling:.4}",
            cfg.pv_capacity_factor
        )));
    }
    let cf = |gain: f64| shape.iter().map(|s| (gain * s).min(1.0)).sum::<f64>() / hours as f64;
    let gain = bisect(0.0, 1e6, cfg.pv_capacity_factor, cf);
    Ok(shape.iter().map(|s| cap * (gain * s).min(1.0)).collect())
}

fn price_diurnal(hour_of_day: usize) -> f64 {
    let h = hour_of_day as f64;
    let bump = |c: f64, w: f64| (-((h - c) / w).powi(2)).exp();
    bump(8.0, 2.0) + 1.4 * bump(18.0, 2.5) - 0.45
}

fn price_series(rng: &mut ChaCha8Rng, hours: usize, cfg: &ExogenousConfig) -> Vec<f64> {
    let m = cfg.mean_price;
    let dev = ar1(rng, hours, cfg.price_persistence);
    let raw: Vec<f64> = (0..hours)
        .map(|t| {
            let p = m * (1.0 + cfg.price_diurnal_amplitude * price_diurnal(t % 24) + cfg.price_volatility * dev[t]);
            p.max(0.0)
        })
        .collect();
    let realized = raw.iter().sum::<f64>() / hours as f64;
    if realized <= 0.0 {
        return vec![m; hours];
    }
    raw.iter().map(|p| p * m / realized).collect()
}
