//! Per-episode metric records and their on-disk forms.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

/// One episode. Averages are over every slot of the episode; occupancy is
/// the fraction of slots spent in each weather state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    pub phase: Phase,
    pub policy: String,
    pub avg_reward: f64,
    pub avg_aot: f64,
    pub avg_throughput: f64,
    /// Mean training loss over the episode's updates, if any ran.
    pub avg_loss: Option<f64>,
    pub occupancy_excellent: f64,
    pub occupancy_good: f64,
    pub occupancy_fair: f64,
    pub occupancy_poor: f64,
    pub charge_events: u64,
}

impl MetricsRecord {
    pub fn occupancy(&self) -> [f64; 4] {
        [
            self.occupancy_excellent,
            self.occupancy_good,
            self.occupancy_fair,
            self.occupancy_poor,
        ]
    }
}

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const RUN_CONFIG_JSON: &str = "run_config.json";
pub const SUMMARY_CSV: &str = "summary.csv";

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)
        .map_err(csv_err(path))?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err(path))?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const METRICS_HEADER: [&str; 12] = [
    "episode",
    "phase",
    "policy",
    "avg_reward",
    "avg_aot",
    "avg_throughput",
    "avg_loss",
    "occupancy_excellent",
    "occupancy_good",
    "occupancy_fair",
    "occupancy_poor",
    "charge_events",
];

/// Writes `metrics.csv`, `metrics.jsonl` and `run_config.json` into `dir`.
/// Only `run_config.json` carries a timestamp.
pub fn emit_metrics(records: &[MetricsRecord], config: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join(METRICS_CSV), records, &METRICS_HEADER)?;

    let path = dir.join(METRICS_JSONL);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let snapshot = serde_json::json!({
        "config": config,
        "metadata": {
            "created_unix": created,
            "crate_version": env!("CARGO_PKG_VERSION"),
        },
    });
    let path = dir.join(RUN_CONFIG_JSON);
    let text = serde_json::to_string_pretty(&snapshot).expect("config serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedRow {
    pub episode: usize,
    pub phase: Phase,
    pub reward_ma: f64,
    pub aot_ma: f64,
    pub throughput_ma: f64,
}

/// Trailing moving average over at most `window` episodes.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn smooth(records: &[MetricsRecord], window: usize) -> Vec<SmoothedRow> {
    let col = |f: fn(&MetricsRecord) -> f64| moving_average(&records.iter().map(f).collect::<Vec<_>>(), window);
    let reward = col(|r| r.avg_reward);
    let aot = col(|r| r.avg_aot);
    let flow = col(|r| r.avg_throughput);
    records
        .iter()
        .enumerate()
        .map(|(i, r)| SmoothedRow {
            episode: r.episode,
            phase: r.phase,
            reward_ma: reward[i],
            aot_ma: aot[i],
            throughput_ma: flow[i],
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMeans {
    pub phase: Phase,
    pub episodes: usize,
    pub reward: f64,
    pub aot: f64,
    pub throughput: f64,
}

pub fn phase_means(records: &[MetricsRecord], phase: Phase) -> Option<PhaseMeans> {
    let rows: Vec<_> = records.iter().filter(|r| r.phase == phase).collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some(PhaseMeans {
        phase,
        episodes: rows.len(),
        reward: rows.iter().map(|r| r.avg_reward).sum::<f64>() / n,
        aot: rows.iter().map(|r| r.avg_aot).sum::<f64>() / n,
        throughput: rows.iter().map(|r| r.avg_throughput).sum::<f64>() / n,
    })
}

/// Reads `metrics.csv` from `dir`, writes the 10-episode smoothed series to
/// `summary.csv` and returns the per-phase means.
pub fn summarize(dir: &Path) -> Result<Vec<PhaseMeans>> {
    let records = read_metrics_csv(&dir.join(METRICS_CSV))?;
    let rows = smooth(&records, 10);
    write_csv(
        &dir.join(SUMMARY_CSV),
        &rows,
        &["episode", "phase", "reward_ma", "aot_ma", "throughput_ma"],
    )?;
    Ok([Phase::Train, Phase::Eval]
        .into_iter()
        .filter_map(|p| phase_means(&records, p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(episode: usize, phase: Phase, loss: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            episode,
            phase,
            policy: "maf".into(),
            avg_reward: 20.0 + episode as f64 / 3.0,
            avg_aot: 5.0 + 0.1 * episode as f64,
            avg_throughput: 41.0 - 1e-3 * episode as f64,
            avg_loss: loss,
            occupancy_excellent: 0.25,
            occupancy_good: 0.5,
            occupancy_fair: 0.125,
            occupancy_poor: 0.125,
            charge_events: 17,
        }
    }

    #[test]
    fn empty_series_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_metrics(&[], &RunConfig::default(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(METRICS_CSV)).unwrap();
        assert_eq!(text, METRICS_HEADER.join(",") + "\n");
        assert_eq!(fs::read_to_string(dir.path().join(METRICS_JSONL)).unwrap(), "");
        assert!(read_metrics_csv(&dir.path().join(METRICS_CSV)).unwrap().is_empty());
    }

    #[test]
    fn csv_and_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<_> = (0..7)
            .map(|i| record(i, if i < 5 { Phase::Train } else { Phase::Eval }, (i % 2 == 0).then_some(0.1 * i as f64)))
            .collect();
        emit_metrics(&records, &RunConfig::default(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(METRICS_CSV)).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(read_metrics_csv(&dir.path().join(METRICS_CSV)).unwrap(), records);
        assert_eq!(read_metrics_jsonl(&dir.path().join(METRICS_JSONL)).unwrap(), records);
        let snapshot: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(RUN_CONFIG_JSON)).unwrap()).unwrap();
        let cfg: RunConfig = serde_json::from_value(snapshot["config"].clone()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn moving_average_is_trailing() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(moving_average(&v, 2), vec![1.0, 1.5, 2.5, 3.5, 4.5]);
        assert_eq!(moving_average(&v, 10), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn summarize_writes_smoothed_series() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<_> = (0..12)
            .map(|i| record(i, if i < 10 { Phase::Train } else { Phase::Eval }, None))
            .collect();
        emit_metrics(&records, &RunConfig::default(), dir.path()).unwrap();
        let means = summarize(dir.path()).unwrap();
        assert_eq!(means.len(), 2);
        assert_eq!(means[1].episodes, 2);
        assert!((means[1].aot - 6.05).abs() < 1e-12);
        let text = fs::read_to_string(dir.path().join(SUMMARY_CSV)).unwrap();
        assert_eq!(text.lines().count(), 13);
    }
}
