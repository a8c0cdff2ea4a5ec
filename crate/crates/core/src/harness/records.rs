//! CSV record types. Every file starts with a fixed header row, even when
//! it has no records; missing values are empty fields.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::EpisodeRecord;
use crate::adapt::TimelinePoint;
use crate::agents::Algorithm;
use crate::error::HarnessError;
use crate::sim::Scenario;

pub trait CsvRecord: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

/// One evaluated (algorithm, rate, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    pub detection_rate: f64,
    pub seed: u64,
    pub wait_all: Option<f64>,
    pub wait_detected: Option<f64>,
    pub wait_undetected: Option<f64>,
    pub episodes: usize,
}

impl CsvRecord for SweepRecord {
    const HEADER: &'static [&'static str] = &[
        "algorithm",
        "scenario",
        "detection_rate",
        "seed",
        "wait_all",
        "wait_detected",
        "wait_undetected",
        "episodes",
    ];
}

/// Mean and sample standard deviation across seeds of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    pub detection_rate: f64,
    pub seeds: usize,
    pub wait_all_mean: Option<f64>,
    pub wait_all_std: Option<f64>,
    pub wait_detected_mean: Option<f64>,
    pub wait_detected_std: Option<f64>,
    pub wait_undetected_mean: Option<f64>,
    pub wait_undetected_std: Option<f64>,
}

impl CsvRecord for SweepSummary {
    const HEADER: &'static [&'static str] = &[
        "algorithm",
        "scenario",
        "detection_rate",
        "seeds",
        "wait_all_mean",
        "wait_all_std",
        "wait_detected_mean",
        "wait_detected_std",
        "wait_undetected_mean",
        "wait_undetected_std",
    ];
}

impl CsvRecord for TimelinePoint {
    const HEADER: &'static [&'static str] =
        &["step", "detection_rate", "wait_all", "wait_detected", "wait_undetected", "instability_flag"];
}

impl CsvRecord for EpisodeRecord {
    const HEADER: &'static [&'static str] =
        &["episode", "steps", "return_partial", "return_full", "wait_all", "wait_detected", "wait_undetected"];
}

/// Outcome of one deployment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub flags: usize,
    pub points: usize,
    pub online_updates: u64,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl CsvRecord for InstabilityRecord {
    const HEADER: &'static [&'static str] = &["algorithm", "seed", "flags", "points", "online_updates", "status"];
}

/// Greedy evaluation of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    pub detection_rate: f64,
    pub seed: u64,
    pub episodes: usize,
    pub wait_all: Option<f64>,
    pub wait_detected: Option<f64>,
    pub wait_undetected: Option<f64>,
    pub return_mean: f64,
    pub return_std: f64,
    pub queue_mean: f64,
    pub queue_max: usize,
}

impl CsvRecord for EvalRecord {
    const HEADER: &'static [&'static str] = &[
        "algorithm",
        "scenario",
        "detection_rate",
        "seed",
        "episodes",
        "wait_all",
        "wait_detected",
        "wait_undetected",
        "return_mean",
        "return_std",
        "queue_mean",
        "queue_max",
    ];
}

pub fn to_csv_string<T: CsvRecord>(records: &[T]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn from_csv_str<T: CsvRecord>(text: &str) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != T::HEADER {
        return Err(HarnessError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {header:?}, expected {:?}", T::HEADER),
        ))));
    }
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub fn write_csv<T: CsvRecord>(path: &Path, records: &[T]) -> Result<(), HarnessError> {
    write_file(path, to_csv_string(records)?.as_bytes())
}

pub fn read_csv<T: CsvRecord>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    from_csv_str(&text)
}

/// Writes a file, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// Groups sweep cells by (algorithm, rate) and aggregates across seeds.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepSummary> {
    let mut keys: Vec<(Algorithm, Scenario, f64)> = Vec::new();
    for r in records {
        let key = (r.algorithm, r.scenario, r.detection_rate);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    keys.into_iter()
        .map(|(algorithm, scenario, detection_rate)| {
            let cells: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.scenario == scenario && r.detection_rate == detection_rate)
                .collect();
            let stat = |f: fn(&SweepRecord) -> Option<f64>| {
                let v: Vec<f64> = cells.iter().filter_map(|r| f(r)).collect();
                mean_std(&v)
            };
            let all = stat(|r| r.wait_all);
            let det = stat(|r| r.wait_detected);
            let und = stat(|r| r.wait_undetected);
            SweepSummary {
                algorithm,
                scenario,
                detection_rate,
                seeds: cells.len(),
                wait_all_mean: all.map(|s| s.0),
                wait_all_std: all.map(|s| s.1),
                wait_detected_mean: det.map(|s| s.0),
                wait_detected_std: det.map(|s| s.1),
                wait_undetected_mean: und.map(|s| s.0),
                wait_undetected_std: und.map(|s| s.1),
            }
        })
        .collect()
}
