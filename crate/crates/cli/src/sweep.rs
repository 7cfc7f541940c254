//! Replicated runs across one configuration axis.

use std::fs;
use std::path::Path;

use mcaloha_core::seed;
use mcaloha_core::sim::{run_scenario, Hysteresis, MetricsTrace, Policy, PolicyAssignment, ScenarioConfig};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::fmt_f64;
use crate::run::{parse_table, scenario_from_table};

pub const SWEEP_HEADER: [&str; 7] = ["axis", "axis_value", "policy", "metric", "replicates", "mean", "std_error"];
pub const RUNS_HEADER: [&str; 7] = ["axis", "axis_value", "policy", "replicate", "seed", "metric", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NUsers,
    DeltaR,
    SnrDb,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::NUsers => "n_users",
            Axis::DeltaR => "delta_r",
            Axis::SnrDb => "snr_db",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "n_users" => Ok(Axis::NUsers),
            "delta_r" => Ok(Axis::DeltaR),
            "snr_db" => Ok(Axis::SnrDb),
            other => Err(CliError::Usage(format!("unknown axis {other:?} (n_users, delta_r, snr_db)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValue {
    Users(usize),
    Hysteresis(Hysteresis),
    Snr(Vec<f64>),
}

impl AxisValue {
    pub fn label(&self) -> String {
        match self {
            AxisValue::Users(n) => n.to_string(),
            AxisValue::Hysteresis(h) if !h.value().is_finite() => "inf".into(),
            AxisValue::Hysteresis(h) => fmt_f64(h.value()),
            AxisValue::Snr(v) => v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";"),
        }
    }

    fn key(&self) -> u64 {
        match self {
            AxisValue::Users(n) => *n as u64,
            AxisValue::Hysteresis(h) => h.value().to_bits(),
            AxisValue::Snr(v) => seed::derive(v.len() as u64, &v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()),
        }
    }

    fn apply(&self, cfg: &mut ScenarioConfig) {
        match self {
            AxisValue::Users(n) => cfg.n_users = *n,
            AxisValue::Hysteresis(h) => cfg.params.delta_r = *h,
            AxisValue::Snr(v) => cfg.snr_db = v.clone(),
        }
    }

    fn from_toml(axis: Axis, v: &toml::Value) -> CliResult<Self> {
        let bad = || CliError::Config(format!("sweep.values: {v} is not a valid {} value", axis.as_str()));
        let num = |v: &toml::Value| match v {
            toml::Value::Float(x) => Some(*x),
            toml::Value::Integer(i) => Some(*i as f64),
            toml::Value::String(s) => s.trim().parse::<f64>().ok(),
            _ => None,
        };
        match axis {
            Axis::NUsers => match v {
                toml::Value::Integer(i) if *i >= 1 => Ok(AxisValue::Users(*i as usize)),
                _ => Err(bad()),
            },
            Axis::DeltaR => match num(v) {
                Some(x) if x >= 0.0 => Ok(AxisValue::Hysteresis(Hysteresis(x))),
                _ => Err(bad()),
            },
            Axis::SnrDb => match v {
                toml::Value::Array(a) => a.iter().map(|x| num(x).ok_or_else(bad)).collect::<CliResult<_>>().map(AxisValue::Snr),
                other => num(other).map(|x| AxisValue::Snr(vec![x])).ok_or_else(bad),
            },
        }
    }

    /// One command-line item; SNR lists use `;` between channels.
    pub fn parse(axis: Axis, s: &str) -> CliResult<Self> {
        let bad = || CliError::Usage(format!("cannot parse {s:?} as a {} value", axis.as_str()));
        match axis {
            Axis::NUsers => s.trim().parse().ok().filter(|&n| n >= 1).map(AxisValue::Users).ok_or_else(bad),
            Axis::DeltaR => s.trim().parse::<f64>().ok().filter(|&x| x >= 0.0).map(|x| AxisValue::Hysteresis(Hysteresis(x))).ok_or_else(bad),
            Axis::SnrDb => s
                .split(';')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<CliResult<_>>()
                .map(AxisValue::Snr),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepTable {
    axis: Axis,
    values: Vec<toml::Value>,
    #[serde(default = "one")]
    replicates: usize,
    #[serde(default)]
    compare_policies: Vec<Policy>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub base: ScenarioConfig,
    pub axis: Axis,
    pub values: Vec<AxisValue>,
    pub replicates: usize,
    pub compare_policies: Vec<Policy>,
}

/// Reads a scenario file carrying a `[sweep]` table.
pub fn load_plan(path: &Path) -> CliResult<SweepPlan> {
    let mut table = parse_table(path)?;
    let sweep = table
        .remove("sweep")
        .ok_or_else(|| CliError::Config(format!("{}: missing [sweep] table", path.display())))?;
    let spec: SweepTable = sweep
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: sweep: {}", path.display(), e.message())))?;
    let base = scenario_from_table(table, path)?;
    let values = spec
        .values
        .iter()
        .map(|v| AxisValue::from_toml(spec.axis, v))
        .collect::<CliResult<_>>()?;
    Ok(SweepPlan {
        base,
        axis: spec.axis,
        values,
        replicates: spec.replicates,
        compare_policies: spec.compare_policies,
    })
}

impl SweepPlan {
    pub fn validate(&self) -> CliResult<()> {
        if self.values.is_empty() {
            return Err(CliError::Config("sweep.values: axis is empty".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("sweep.replicates: must be at least 1".into()));
        }
        for (_, cfg) in self.variants() {
            cfg.validate()?;
        }
        Ok(())
    }

    fn policy_label(&self, policy: Option<Policy>) -> String {
        match (policy, &self.base.policy) {
            (Some(p), _) => p.as_str().into(),
            (None, PolicyAssignment::Uniform(p)) => p.as_str().into(),
            (None, PolicyAssignment::PerUser(_)) => "mixed".into(),
        }
    }

    /// Every (axis value, policy) configuration, seed not yet set.
    fn variants(&self) -> Vec<((usize, Option<Policy>), ScenarioConfig)> {
        let policies: Vec<Option<Policy>> = if self.compare_policies.is_empty() {
            vec![None]
        } else {
            self.compare_policies.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for (vi, value) in self.values.iter().enumerate() {
            for &p in &policies {
                let mut cfg = self.base.clone();
                value.apply(&mut cfg);
                if let Some(p) = p {
                    cfg.policy = PolicyAssignment::Uniform(p);
                }
                out.push(((vi, p), cfg));
            }
        }
        out
    }

    /// Child seed of a replicate; shared by all policies at the same axis value.
    pub fn child_seed(&self, value: &AxisValue, replicate: usize) -> u64 {
        seed::derive(self.base.seed, &[value.key(), replicate as u64])
    }
}

/// Scalar outcomes of one run, in a fixed order.
pub fn run_metrics(trace: &MetricsTrace) -> Vec<(String, f64)> {
    let last = trace.last();
    let mut m = vec![
        ("mean_rate".to_string(), last.mean_rate),
        ("mean_log_rate".to_string(), last.mean_log_rate),
        ("sum_rate".to_string(), last.sum_rate),
        ("sum_log_rate".to_string(), last.sum_log_rate),
        ("throughput".to_string(), last.throughput),
        ("empirical_throughput".to_string(), last.empirical_throughput),
        ("rounds".to_string(), trace.records.len() as f64),
        ("converged".to_string(), if trace.converged { 1.0 } else { 0.0 }),
    ];
    for (i, c) in last.channels.iter().enumerate() {
        m.push((format!("occupancy_k{}", i + 1), c.occupancy as f64));
    }
    for (i, x) in trace.mean_occupancy().into_iter().enumerate() {
        m.push((format!("mean_occupancy_k{}", i + 1), x));
    }
    m
}

#[derive(Debug, Clone)]
pub struct RunRow {
    pub value: String,
    pub policy: String,
    pub replicate: usize,
    pub seed: u64,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub value: String,
    pub policy: String,
    pub metric: String,
    pub replicates: usize,
    pub mean: f64,
    pub std_error: f64,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every replicate, in parallel, and aggregates per (value, policy, metric).
pub fn execute(plan: &SweepPlan) -> CliResult<(Vec<SummaryRow>, Vec<RunRow>)> {
    plan.validate()?;
    let jobs: Vec<_> = plan
        .variants()
        .into_iter()
        .flat_map(|((vi, p), cfg)| (0..plan.replicates).map(move |r| (vi, p, r, cfg.clone())))
        .collect();
    let runs: Vec<RunRow> = jobs
        .into_par_iter()
        .map(|(vi, p, r, mut cfg)| {
            let value = &plan.values[vi];
            cfg.seed = plan.child_seed(value, r);
            let trace = run_scenario(&cfg)?;
            Ok(RunRow {
                value: value.label(),
                policy: plan.policy_label(p),
                replicate: r,
                seed: cfg.seed,
                metrics: run_metrics(&trace),
            })
        })
        .collect::<CliResult<_>>()?;

    let mut summary = Vec::new();
    for group in runs.chunks(plan.replicates) {
        let first = &group[0];
        for (mi, (name, _)) in first.metrics.iter().enumerate() {
            let xs: Vec<f64> = group.iter().map(|r| r.metrics[mi].1).collect();
            let (mean, std_error) = mean_and_se(&xs);
            summary.push(SummaryRow {
                value: first.value.clone(),
                policy: first.policy.clone(),
                metric: name.clone(),
                replicates: group.len(),
                mean,
                std_error,
            });
        }
    }
    Ok((summary, runs))
}

pub fn write_outputs(dir: &Path, axis: Axis, summary: &[SummaryRow], runs: &[RunRow]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("sweep.csv");
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| CliError::io(&p, e)
    };
    let mut w = csv::Writer::from_path(&path).map_err(io(&path))?;
    w.write_record(SWEEP_HEADER).map_err(io(&path))?;
    for s in summary {
        w.write_record([
            axis.as_str(),
            &s.value,
            &s.policy,
            &s.metric,
            &s.replicates.to_string(),
            &fmt_f64(s.mean),
            &fmt_f64(s.std_error),
        ])
        .map_err(io(&path))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("sweep_runs.csv");
    let mut w = csv::Writer::from_path(&path).map_err(io(&path))?;
    w.write_record(RUNS_HEADER).map_err(io(&path))?;
    for r in runs {
        for (name, v) in &r.metrics {
            w.write_record([
                axis.as_str(),
                &r.value,
                &r.policy,
                &r.replicate.to_string(),
                &r.seed.to_string(),
                name,
                &fmt_f64(*v),
            ])
            .map_err(io(&path))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}
