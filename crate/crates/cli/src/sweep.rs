//! Concurrent execution of many configs with an aggregated `sweep.csv`.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::scenarios::{execute, Summary};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config: String,
    pub scenario: String,
    pub error: Option<String>,
    pub summary: Summary,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn expand(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = glob::glob(pattern).map_err(|e| CliError::Usage(format!("bad glob `{pattern}`: {e}")))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no config files match `{pattern}`")));
    }
    Ok(paths)
}

/// Per-run output directories under `base`, named after the config file stem
/// (suffixed with the position when stems collide).
fn run_dirs(paths: &[PathBuf], base: &Path) -> Vec<PathBuf> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let stems: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()))
        .collect();
    for s in &stems {
        *counts.entry(s.clone()).or_default() += 1;
    }
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if counts[s] > 1 {
                base.join(format!("{s}-{i}"))
            } else {
                base.join(s)
            }
        })
        .collect()
}

fn run_one(path: &Path, dir: PathBuf) -> SweepRow {
    let config = path.display().to_string();
    match ExperimentConfig::load(path) {
        Err(e) => SweepRow {
            config,
            scenario: String::new(),
            error: Some(e.to_string()),
            summary: Summary::new(),
        },
        Ok(mut cfg) => {
            cfg.out_dir = dir;
            let scenario = cfg.scenario.name().to_string();
            match execute(&cfg) {
                Ok(summary) => SweepRow {
                    config,
                    scenario,
                    error: None,
                    summary,
                },
                Err(e) => {
                    let summary = std::fs::read_to_string(cfg.out_dir.join("summary.json"))
                        .ok()
                        .and_then(|t| serde_json::from_str(&t).ok())
                        .unwrap_or_default();
                    SweepRow {
                        config,
                        scenario,
                        error: Some(e.to_string()),
                        summary,
                    }
                }
            }
        }
    }
}

/// Runs every config on a pool of `jobs` workers; rows keep the input order.
pub fn sweep(paths: &[PathBuf], base: &Path, jobs: usize) -> Result<Vec<SweepRow>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("sweep needs at least one config".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let dirs = run_dirs(paths, base);
    let rows: Vec<SweepRow> = pool.install(|| {
        paths
            .par_iter()
            .zip(dirs)
            .map(|(p, d)| run_one(p, d))
            .collect()
    });
    write_sweep_csv(&base.join("sweep.csv"), &rows)?;
    Ok(rows)
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let keys: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| r.summary.keys().map(String::as_str))
        .filter(|k| !matches!(*k, "scenario" | "status"))
        .collect();
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config", "scenario", "status", "error"];
    header.extend(keys.iter().copied());
    out.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.config.clone(),
            r.scenario.clone(),
            if r.ok() { "ok".into() } else { "failed".into() },
            r.error.clone().unwrap_or_default(),
        ];
        record.extend(keys.iter().map(|k| cell(r.summary.get(*k))));
        out.write_record(&record)?;
    }
    let bytes = out
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv buffer: {e}")))?;
    stefan_core::io::write_atomic(path, &bytes)?;
    Ok(())
}
