//! Per-episode metrics and their CSV files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "episode,rho,reported_reward,penalty_count,eval_reward,wall_seconds";

pub const AGGREGATE_HEADER: &str =
    "episode,n_seeds,rho_mean,reported_reward_mean,reported_reward_sd,penalty_count_mean,eval_reward_mean,eval_reward_sd";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub rho: f64,
    /// Negated total grid cost of the training episode, penalties excluded.
    pub reported_reward: f64,
    pub penalty_count: usize,
    /// Reported reward of a deterministic evaluation rollout.
    pub eval_reward: f64,
    pub wall_seconds: f64,
}

pub fn metrics_to_csv(rows: &[EpisodeMetrics]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{METRICS_HEADER}");
    for m in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            m.episode, m.rho, m.reported_reward, m.penalty_count, m.eval_reward, m.wall_seconds
        );
    }
    s
}

pub fn write_metrics(path: &Path, rows: &[EpisodeMetrics]) -> Result<()> {
    std::fs::write(path, metrics_to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let bad = |reason: String| Error::Metrics {
        path: PathBuf::from(path),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(bad(format!("expected header `{METRICS_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let f = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| bad(format!("row {}: missing column {k}", i + 1)))?
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))
        };
        let u = |k: usize| -> Result<usize> {
            rec.get(k)
                .ok_or_else(|| bad(format!("row {}: missing column {k}", i + 1)))?
                .parse::<usize>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))
        };
        let m = EpisodeMetrics {
            episode: u(0)?,
            rho: f(1)?,
            reported_reward: f(2)?,
            penalty_count: u(3)?,
            eval_reward: f(4)?,
            wall_seconds: f(5)?,
        };
        if !m.reported_reward.is_finite() {
            return Err(bad(format!("row {}: non-finite reward", i + 1)));
        }
        rows.push(m);
    }
    Ok(rows)
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-episode row of the cross-seed aggregate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub n_seeds: usize,
    pub rho_mean: f64,
    pub reported_reward_mean: f64,
    pub reported_reward_sd: f64,
    pub penalty_count_mean: f64,
    pub eval_reward_mean: f64,
    pub eval_reward_sd: f64,
}

/// Aggregates per-seed runs episode by episode over the common prefix.
pub fn aggregate(runs: &[Vec<EpisodeMetrics>]) -> Result<Vec<AggregateRow>> {
    if runs.is_empty() {
        return Err(Error::Config("cannot aggregate an empty set of runs".into()));
    }
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for e in 0..len {
        let col = |f: fn(&EpisodeMetrics) -> f64| runs.iter().map(|r| f(&r[e])).collect::<Vec<_>>();
        let (rho_mean, _) = mean_sd(&col(|m| m.rho));
        let (rr_m, rr_s) = mean_sd(&col(|m| m.reported_reward));
        let (pc_m, _) = mean_sd(&col(|m| m.penalty_count as f64));
        let (ev_m, ev_s) = mean_sd(&col(|m| m.eval_reward));
        out.push(AggregateRow {
            episode: runs[0][e].episode,
            n_seeds: runs.len(),
            rho_mean,
            reported_reward_mean: rr_m,
            reported_reward_sd: rr_s,
            penalty_count_mean: pc_m,
            eval_reward_mean: ev_m,
            eval_reward_sd: ev_s,
        });
    }
    Ok(out)
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{AGGREGATE_HEADER}");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.episode,
            r.n_seeds,
            r.rho_mean,
            r.reported_reward_mean,
            r.reported_reward_sd,
            r.penalty_count_mean,
            r.eval_reward_mean,
            r.eval_reward_sd
        );
    }
    s
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let bad = |reason: String| Error::Metrics {
        path: PathBuf::from(path),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(AGGREGATE_HEADER) {
        return Err(bad(format!("expected header `{AGGREGATE_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<&str> = l.split(',').collect();
            if v.len() != 8 {
                return Err(bad(format!("row {}: expected 8 fields", i + 1)));
            }
            let f = |k: usize| v[k].parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
            let u = |k: usize| v[k].parse::<usize>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
            Ok(AggregateRow {
                episode: u(0)?,
                n_seeds: u(1)?,
                rho_mean: f(2)?,
                reported_reward_mean: f(3)?,
                reported_reward_sd: f(4)?,
                penalty_count_mean: f(5)?,
                eval_reward_mean: f(6)?,
                eval_reward_sd: f(7)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(e: usize, r: f64) -> EpisodeMetrics {
        EpisodeMetrics {
            episode: e,
            rho: 0.5,
            reported_reward: r,
            penalty_count: 3,
            eval_reward: 2.0 * r,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![row(0, -1234.5), row(1, 0.1 + 0.2)];
        write_metrics(&p, &rows).unwrap();
        assert_eq!(read_metrics(&p).unwrap(), rows);
    }

    #[test]
    fn single_seed_has_zero_spread() {
        let agg = aggregate(&[vec![row(0, -5.0), row(1, -3.0)]]).unwrap();
        assert!(agg.iter().all(|a| a.reported_reward_sd == 0.0 && a.eval_reward_sd == 0.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn malformed_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "episode,reward\n0,1\n").unwrap();
        assert!(read_metrics(&p).is_err());
        std::fs::write(&p, format!("{METRICS_HEADER}\n0,x,1,0,1,0\n")).unwrap();
        assert!(read_metrics(&p).is_err());
    }
}
