//! Single scenario runs and their files.

use std::fs;
use std::path::{Path, PathBuf};

use mcaloha_core::sim::{run_scenario, MetricsTrace, RunSeeds, ScenarioConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::fmt_f64;

pub const OUT_DIR_ENV: &str = "MCALOHA_OUT_DIR";

pub const ROUNDS_HEADER: [&str; 12] = [
    "round",
    "sum_rate",
    "sum_log_rate",
    "mean_rate",
    "mean_log_rate",
    "throughput",
    "empirical_throughput",
    "potential",
    "updated_user",
    "switched",
    "converged",
    "mean_attempt",
];
pub const USERS_HEADER: [&str; 6] = ["round", "user", "channel", "attempt", "expected_rate", "empirical_rate"];
pub const CHANNELS_HEADER: [&str; 5] = ["round", "channel", "idle", "idle_estimate_mean", "occupancy"];

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn parse_table(path: &Path) -> CliResult<toml::Table> {
    read_text(path)?
        .parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn scenario_from_table(table: toml::Table, origin: &Path) -> CliResult<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", origin.display(), e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a TOML scenario, or JSON when the file ends in `.json`. A previous
/// run's `summary.json` works too: its `config` entry is used.
pub fn load_scenario(path: &Path) -> CliResult<ScenarioConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let bad = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
        let mut v: serde_json::Value = serde_json::from_str(&read_text(path)?).map_err(bad)?;
        if let Some(inner) = v.get_mut("config") {
            v = inner.take();
        }
        let cfg: ScenarioConfig = serde_json::from_value(v).map_err(bad)?;
        cfg.validate()?;
        return Ok(cfg);
    }
    scenario_from_table(parse_table(path)?, path)
}

/// `--out`, then the config's `output_dir`, then the environment, then `out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return PathBuf::from(p);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("out"),
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config: &'a ScenarioConfig,
    pub seeds: RunSeeds,
    pub rounds: usize,
    pub converged: bool,
    pub convergence_round: Option<usize>,
    pub budget_exhausted: bool,
    pub final_throughput: f64,
    pub final_empirical_throughput: f64,
    pub final_sum_rate: f64,
    pub final_mean_rate: f64,
    pub final_sum_log_rate: f64,
    pub final_mean_log_rate: f64,
    pub final_potential: Option<f64>,
    pub final_channels: Vec<usize>,
    pub final_attempts: Vec<f64>,
    pub final_rates: Vec<f64>,
    pub mean_occupancy: Vec<f64>,
}

pub fn summarize<'a>(cfg: &'a ScenarioConfig, trace: &MetricsTrace) -> Summary<'a> {
    let last = trace.last();
    Summary {
        config: cfg,
        seeds: trace.seeds,
        rounds: trace.records.len(),
        converged: trace.converged,
        convergence_round: trace.convergence_round,
        budget_exhausted: trace.budget_exhausted,
        final_throughput: last.throughput,
        final_empirical_throughput: last.empirical_throughput,
        final_sum_rate: last.sum_rate,
        final_mean_rate: last.mean_rate,
        final_sum_log_rate: last.sum_log_rate,
        final_mean_log_rate: last.mean_log_rate,
        final_potential: last.potential,
        final_channels: last.users.iter().map(|u| u.channel).collect(),
        final_attempts: last.users.iter().map(|u| u.attempt).collect(),
        final_rates: last.users.iter().map(|u| u.expected_rate).collect(),
        mean_occupancy: trace.mean_occupancy(),
    }
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace(dir: &Path, cfg: &ScenarioConfig, trace: &MetricsTrace) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| CliError::io(&p, e)
    };

    let path = dir.join("rounds.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(ROUNDS_HEADER).map_err(io(&path))?;
    for r in &trace.records {
        let mean_attempt = r.users.iter().map(|u| u.attempt).sum::<f64>() / r.users.len() as f64;
        w.write_record([
            r.round.to_string(),
            fmt_f64(r.sum_rate),
            fmt_f64(r.sum_log_rate),
            fmt_f64(r.mean_rate),
            fmt_f64(r.mean_log_rate),
            fmt_f64(r.throughput),
            fmt_f64(r.empirical_throughput),
            r.potential.map(fmt_f64).unwrap_or_default(),
            opt(r.updated_user),
            r.switched.to_string(),
            r.converged.to_string(),
            fmt_f64(mean_attempt),
        ])
        .map_err(io(&path))?;
    }
    finish(w, &path)?;

    let path = dir.join("users.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(USERS_HEADER).map_err(io(&path))?;
    for r in &trace.records {
        for (n, u) in r.users.iter().enumerate() {
            w.write_record([
                r.round.to_string(),
                n.to_string(),
                u.channel.to_string(),
                fmt_f64(u.attempt),
                fmt_f64(u.expected_rate),
                fmt_f64(u.empirical_rate),
            ])
            .map_err(io(&path))?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("channels.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(CHANNELS_HEADER).map_err(io(&path))?;
    for r in &trace.records {
        for (i, c) in r.channels.iter().enumerate() {
            w.write_record([
                r.round.to_string(),
                (i + 1).to_string(),
                fmt_f64(c.idle),
                fmt_f64(c.idle_estimate_mean),
                c.occupancy.to_string(),
            ])
            .map_err(io(&path))?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summarize(cfg, trace)).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
}

/// Runs `cfg` and writes its files into `dir`.
pub fn simulate(cfg: &ScenarioConfig, dir: &Path) -> CliResult<MetricsTrace> {
    let trace = run_scenario(cfg)?;
    write_trace(dir, cfg, &trace)?;
    Ok(trace)
}
