use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::metrics::{confidence_trace, daily_rewards, group_summary, weekly_metrics, StudySummary, WeeklyMetrics};
use super::{StudyConfig, StudyResult};
use crate::engine::EventRecord;
use crate::persist::write_atomic;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Event {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn events_path(dir: &Path, user: &str) -> PathBuf {
    dir.join("events").join(format!("{user}.jsonl"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_atomic(path, bytes).map_err(io_err(path))
}

fn to_csv<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

/// Writes the resolved config and every user's event log, then the report.
pub fn write_run(result: &StudyResult, config: &StudyConfig, dir: &Path) -> Result<StudySummary, ReportError> {
    let cfg_path = dir.join("config.json");
    let cfg = serde_json::to_vec_pretty(config).map_err(|source| ReportError::Json {
        path: cfg_path.clone(),
        source,
    })?;
    write_file(&cfg_path, &cfg)?;
    for run in &result.users {
        let path = events_path(dir, &run.spec.id);
        let mut buf = Vec::new();
        for e in &run.events {
            serde_json::to_writer(&mut buf, e).map_err(|source| ReportError::Json {
                path: path.clone(),
                source,
            })?;
            buf.push(b'\n');
        }
        write_file(&path, &buf)?;
    }
    report(dir)
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, ReportError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ReportError::Event {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Recomputes `metrics.csv`, `summary.json`, `daily_rewards.csv` and the
/// per-user confidence traces from a run directory.
pub fn report(dir: &Path) -> Result<StudySummary, ReportError> {
    let cfg_path = dir.join("config.json");
    let raw = fs::read(&cfg_path).map_err(io_err(&cfg_path))?;
    let config: StudyConfig = serde_json::from_slice(&raw).map_err(|source| ReportError::Json {
        path: cfg_path.clone(),
        source,
    })?;

    let mut rows: Vec<WeeklyMetrics> = Vec::new();
    let mut daily = Vec::new();
    for spec in &config.users {
        let events = read_events(&events_path(dir, &spec.id))?;
        rows.extend(weekly_metrics(
            &spec.id,
            spec.agent,
            &events,
            config.weeks,
            config.supervised.training_weeks,
        ));
        daily.extend(daily_rewards(&events).into_iter().map(|(day, reward)| DailyRow {
            user: spec.id.clone(),
            day,
            reward,
        }));
        let trace = to_csv(confidence_trace(&events))?;
        write_file(&dir.join("traces").join(format!("{}.csv", spec.id)), &trace)?;
    }
    write_file(&dir.join("metrics.csv"), &to_csv(&rows)?)?;
    write_file(&dir.join("daily_rewards.csv"), &to_csv(&daily)?)?;

    let summary = StudySummary {
        seed: config.seed,
        weeks: config.weeks,
        users: config.users.len(),
        groups: group_summary(&rows),
    };
    let summary_path = dir.join("summary.json");
    let json = serde_json::to_vec_pretty(&summary).map_err(|source| ReportError::Json {
        path: summary_path.clone(),
        source,
    })?;
    write_file(&summary_path, &json)?;
    Ok(summary)
}

#[derive(serde::Serialize)]
struct DailyRow {
    user: String,
    day: u64,
    reward: f64,
}
