//! Round-based orchestration: monitor a window of slots, let agents update,
//! record metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{best_channel_for, potential, strictly_greater};
use crate::model::{
    network_throughput, rate_report, ConstraintVector, SingleChannelStrategy, StrategyProfile,
    UtilityMatrix,
};
use crate::seed;

use super::agent::{
    parallel_adaptive_init, sequential_adaptive_step, AdaptiveAgentState, AdaptiveParams,
    Hysteresis, Policy,
};
use super::env::generate_rayleigh_utilities;
use super::observe::{estimate_loads, LoadObservation};
use super::slots::{simulate, SlotLog};

fn default_bandwidth() -> f64 {
    1e7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyAssignment {
    Uniform(Policy),
    PerUser(Vec<Policy>),
}

impl PolicyAssignment {
    pub fn for_user(&self, n: usize) -> Policy {
        match self {
            PolicyAssignment::Uniform(p) => *p,
            PolicyAssignment::PerUser(v) => v[n],
        }
    }
}

/// How the attempt-probability caps of non-adaptive users are set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapModel {
    /// `K/N` for everyone.
    #[default]
    Fixed,
    /// Uniform on `[0, 2K/N]`.
    Uniform,
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub epsilon: f64,
    /// Stop once every sequential agent sees `|b̂ − e⁻¹| ≤ delta` on its channel.
    pub delta: f64,
    pub delta_r: Hysteresis,
    pub p0: f64,
    pub eps_p: f64,
    /// Slots behind each load estimate.
    pub window: usize,
    /// Slots simulated between consecutive updates.
    pub slots_per_round: usize,
    pub max_rounds: usize,
    /// Multiply `delta_r` by `escalation_factor` every `escalation_period` rounds.
    pub delta_r_escalation: bool,
    pub escalation_factor: f64,
    pub escalation_period: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let a = AdaptiveParams::default();
        Self {
            epsilon: a.epsilon,
            delta: a.stop_tolerance,
            delta_r: a.delta_r,
            p0: a.p0,
            eps_p: a.eps_p,
            window: 100,
            slots_per_round: 100,
            max_rounds: 2000,
            delta_r_escalation: false,
            escalation_factor: 1.5,
            escalation_period: 100,
        }
    }
}

impl ScenarioParams {
    pub fn adaptive(&self) -> AdaptiveParams {
        AdaptiveParams {
            epsilon: self.epsilon,
            delta_r: self.delta_r,
            p0: self.p0,
            stop_tolerance: self.delta,
            eps_p: self.eps_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub n_channels: usize,
    /// One value per channel, or a single value for all.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    /// Replaces the Rayleigh draw when given, one row per user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilities: Option<Vec<Vec<f64>>>,
    pub policy: PolicyAssignment,
    #[serde(default)]
    pub caps: CapModel,
    #[serde(default)]
    pub params: ScenarioParams,
    /// Agents see the exact `v_n(k)` instead of a windowed estimate.
    #[serde(default)]
    pub perfect_monitoring: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_users, self.n_channels);
        if n == 0 {
            return Err(Error::config("n_users", "must be at least 1"));
        }
        if k == 0 {
            return Err(Error::config("n_channels", "must be at least 1"));
        }
        if k > u16::MAX as usize {
            return Err(Error::config("n_channels", format!("at most {}", u16::MAX)));
        }
        match &self.utilities {
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::config("utilities", format!("expected {n} rows of {k} values")));
                }
                if rows.iter().flatten().any(|&x| !(x.is_finite() && x >= 0.0)) {
                    return Err(Error::config("utilities", "entries must be finite and non-negative"));
                }
            }
            None => {
                if self.snr_db.len() != k && self.snr_db.len() != 1 {
                    return Err(Error::config(
                        "snr_db",
                        format!("expected 1 or {k} values, got {}", self.snr_db.len()),
                    ));
                }
                if self.snr_db.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config("snr_db", "values must be finite"));
                }
            }
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("bandwidth_hz", "must be positive"));
        }
        if let PolicyAssignment::PerUser(v) = &self.policy {
            if v.len() != n {
                return Err(Error::config("policy", format!("{} entries for {n} users", v.len())));
            }
        }
        if let CapModel::Explicit { values } = &self.caps {
            if values.len() != n {
                return Err(Error::config("caps.values", format!("{} entries for {n} users", values.len())));
            }
            if values.iter().any(|&c| !in_open_unit(c)) {
                return Err(Error::config("caps.values", "caps must lie in (0, 1)"));
            }
        }
        let p = &self.params;
        if !in_open_unit(p.epsilon) {
            return Err(Error::config("params.epsilon", "must lie in (0, 1)"));
        }
        if !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(Error::config("params.delta", "must lie in (0, 1)"));
        }
        if p.delta_r.value().is_nan() || p.delta_r.value() < 0.0 {
            return Err(Error::config("params.delta_r", "must be non-negative"));
        }
        if !in_open_unit(p.p0) {
            return Err(Error::config("params.p0", "must lie in (0, 1)"));
        }
        if !(p.eps_p > 0.0 && p.eps_p < 0.5) {
            return Err(Error::config("params.eps_p", "must lie in (0, 0.5)"));
        }
        if p.window == 0 {
            return Err(Error::config("params.window", "must be at least 1"));
        }
        if p.slots_per_round == 0 {
            return Err(Error::config("params.slots_per_round", "must be at least 1"));
        }
        if p.max_rounds == 0 {
            return Err(Error::config("params.max_rounds", "must be at least 1"));
        }
        if p.delta_r_escalation && !(p.escalation_factor >= 1.0 && p.escalation_factor.is_finite()) {
            return Err(Error::config("params.escalation_factor", "must be finite and at least 1"));
        }
        if p.delta_r_escalation && p.escalation_period == 0 {
            return Err(Error::config("params.escalation_period", "must be at least 1"));
        }
        Ok(())
    }

    fn snr_per_channel(&self) -> Vec<f64> {
        if self.snr_db.len() == 1 {
            vec![self.snr_db[0]; self.n_channels]
        } else {
            self.snr_db.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub channel: usize,
    pub attempt: f64,
    /// `x_n u_n(k) v_n(k)` under the true profile.
    pub expected_rate: f64,
    /// `u_n(k)` times the fraction of this round's slots the user succeeded in.
    pub empirical_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    /// True idle probability `b(k)`.
    pub idle: f64,
    /// Mean over users of `b̂_n(k)`.
    pub idle_estimate_mean: f64,
    pub occupancy: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub users: Vec<UserRecord>,
    pub channels: Vec<ChannelRecord>,
    pub sum_rate: f64,
    pub sum_log_rate: f64,
    pub mean_rate: f64,
    pub mean_log_rate: f64,
    /// Expected successful slots per slot across channels.
    pub throughput: f64,
    pub empirical_throughput: f64,
    /// Defined when every user sits at a fixed cap.
    pub potential: Option<f64>,
    /// User whose update produced this round's profile.
    pub updated_user: Option<usize>,
    pub switched: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub master: u64,
    pub environment: u64,
    pub caps: u64,
    pub placement: u64,
    pub slots: u64,
}

impl RunSeeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            environment: seed::stream(master, "environment"),
            caps: seed::stream(master, "caps"),
            placement: seed::stream(master, "placement"),
            slots: seed::stream(master, "slots"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub n_users: usize,
    pub n_channels: usize,
    pub utilities: UtilityMatrix,
    /// Caps of the non-adaptive users; adaptive users report their initial
    /// attempt probability.
    pub caps: Vec<f64>,
    pub records: Vec<RoundRecord>,
    pub converged: bool,
    pub convergence_round: Option<usize>,
    pub budget_exhausted: bool,
    pub seeds: RunSeeds,
}

impl MetricsTrace {
    pub fn last(&self) -> &RoundRecord {
        self.records.last().expect("a trace holds at least one round")
    }

    /// Mean occupancy of each channel over all recorded rounds, indexed `k-1`.
    pub fn mean_occupancy(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_channels];
        for r in &self.records {
            for (a, c) in acc.iter_mut().zip(&r.channels) {
                *a += c.occupancy as f64;
            }
        }
        let len = self.records.len().max(1) as f64;
        acc.iter().map(|a| a / len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    /// Fixed channel and attempt probability.
    Static,
    BestResponse,
    Sequential,
    /// Parallel agent still waiting for its population estimate.
    Estimating,
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    state: AdaptiveAgentState,
    phase: Phase,
}

fn profile_of(agents: &[Agent]) -> StrategyProfile {
    StrategyProfile::new(
        agents
            .iter()
            .map(|a| SingleChannelStrategy {
                chosen_channel: a.state.channel,
                attempt_probability: a.state.attempt,
            })
            .collect(),
    )
}

fn resolve_caps(cfg: &ScenarioConfig, seeds: &RunSeeds) -> Vec<f64> {
    let (n, k) = (cfg.n_users as f64, cfg.n_channels as f64);
    let eps_p = cfg.params.eps_p;
    let clip = |c: f64| c.clamp(eps_p, 1.0 - eps_p);
    match &cfg.caps {
        CapModel::Fixed => vec![clip(k / n); cfg.n_users],
        CapModel::Uniform => {
            let mut rng = seed::rng(seeds.caps);
            (0..cfg.n_users)
                .map(|_| clip(rng.random::<f64>() * 2.0 * k / n))
                .collect()
        }
        CapModel::Explicit { values } => values.iter().map(|&c| clip(c)).collect(),
    }
}

fn observe_all(
    cfg: &ScenarioConfig,
    profile: &StrategyProfile,
    log: &SlotLog,
) -> Result<Vec<LoadObservation>> {
    let window = cfg.params.window.min(log.len());
    (0..cfg.n_users)
        .map(|n| {
            if cfg.perfect_monitoring {
                Ok(LoadObservation::exact(profile, n, cfg.n_channels))
            } else {
                estimate_loads(log, n, window, profile.get(n))
            }
        })
        .collect()
}

fn record(
    round: usize,
    u: &UtilityMatrix,
    agents: &[Agent],
    observations: &[LoadObservation],
    fresh: &SlotLog,
) -> Result<RoundRecord> {
    let profile = profile_of(agents);
    let report = rate_report(u, &profile)?;
    let n_users = agents.len();
    let n_channels = u.n_channels();
    let slots = fresh.len() as f64;

    let users = (0..n_users)
        .map(|n| {
            let k = agents[n].state.channel;
            let wins = fresh.successes(n) as f64;
            UserRecord {
                channel: k,
                attempt: agents[n].state.attempt,
                expected_rate: report.per_user_rate[n],
                empirical_rate: if k == 0 { 0.0 } else { u.get(n, k) * wins / slots },
            }
        })
        .collect();
    let channels = (0..n_channels)
        .map(|i| ChannelRecord {
            idle: report.channel_idle[i],
            idle_estimate_mean: observations.iter().map(|o| o.b_hat[i]).sum::<f64>() / n_users as f64,
            occupancy: report.occupancy[i],
        })
        .collect();
    let empirical_throughput =
        (0..n_users).map(|n| fresh.successes(n)).sum::<usize>() as f64 / slots;

    let caps_fixed = agents
        .iter()
        .all(|a| matches!(a.phase, Phase::Static | Phase::BestResponse));
    let potential_value = if caps_fixed && agents.iter().all(|a| a.state.attempt < 1.0) {
        ConstraintVector::new(agents.iter().map(|a| a.state.attempt).collect())
            .and_then(|caps| potential(u, &profile, &caps))
            .ok()
            .map(|b| b.value)
    } else {
        None
    };

    Ok(RoundRecord {
        round,
        users,
        channels,
        sum_rate: report.sum_rate,
        sum_log_rate: report.sum_log_rate,
        mean_rate: report.sum_rate / n_users as f64,
        mean_log_rate: report.sum_log_rate / n_users as f64,
        throughput: network_throughput(&profile),
        empirical_throughput,
        potential: potential_value,
        updated_user: None,
        switched: false,
        converged: false,
    })
}

/// Runs one scenario to the stopping rule or the round budget.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsTrace> {
    cfg.validate()?;
    let seeds = RunSeeds::from_master(cfg.seed);
    let (n_users, n_channels) = (cfg.n_users, cfg.n_channels);
    let u = match &cfg.utilities {
        Some(rows) => UtilityMatrix::from_rows(rows)?,
        None => {
            generate_rayleigh_utilities(
                n_users,
                n_channels,
                &cfg.snr_per_channel(),
                cfg.bandwidth_hz,
                seeds.environment,
            )?
            .utilities
        }
    };
    let caps = resolve_caps(cfg, &seeds);
    let params = cfg.params.adaptive();

    let mut placement = seed::rng(seeds.placement);
    let mut agents: Vec<Agent> = (0..n_users)
        .map(|n| {
            let policy = cfg.policy.for_user(n);
            let (channel, attempt, phase) = match policy {
                Policy::Random => (placement.random_range(1..=n_channels), caps[n], Phase::Static),
                Policy::Tg => (u.best_channel(n), caps[n], Phase::Static),
                Policy::ConstrainedBr => (u.best_channel(n), caps[n], Phase::BestResponse),
                Policy::SequentialAdaptive => (u.best_channel(n), params.p0, Phase::Sequential),
                Policy::ParallelAdaptive => (u.best_channel(n), params.p0, Phase::Estimating),
            };
            Agent {
                state: AdaptiveAgentState {
                    policy,
                    channel,
                    attempt,
                    params,
                },
                phase,
            }
        })
        .collect();
    let initial_caps = agents.iter().map(|a| a.state.attempt).collect();

    let mut slot_rng = seed::rng(seeds.slots);
    let mut log = SlotLog::new(n_users, n_channels);
    let mut records: Vec<RoundRecord> = Vec::new();
    let mut turn = 0usize;
    let mut calm = 0usize;
    let mut pending: Option<(Option<usize>, bool)> = None;
    let mut converged = false;
    let mut convergence_round = None;

    for round in 0..=cfg.params.max_rounds {
        let profile = profile_of(&agents);
        let fresh = simulate(&profile, n_channels, cfg.params.slots_per_round, &mut slot_rng);
        log.append(&fresh);
        log.retain_last(cfg.params.window);
        let observations = observe_all(cfg, &profile, &log)?;

        let mut rec = record(round, &u, &agents, &observations, &fresh)?;
        if let Some((user, switched)) = pending.take() {
            rec.updated_user = user;
            rec.switched = switched;
        }

        let estimating = agents.iter().any(|a| a.phase == Phase::Estimating);
        let br_agents = agents.iter().filter(|a| a.phase == Phase::BestResponse).count();
        let sequential_calm = agents.iter().zip(&observations).all(|(a, o)| {
            a.phase != Phase::Sequential || o.delta[a.state.channel - 1] <= cfg.params.delta
        });
        let done = !estimating && sequential_calm && calm >= br_agents;
        rec.converged = done;
        records.push(rec);
        if done {
            converged = true;
            convergence_round = Some(round);
            break;
        }
        if round == cfg.params.max_rounds {
            break;
        }

        if cfg.params.delta_r_escalation && round > 0 && round % cfg.params.escalation_period == 0 {
            for a in agents.iter_mut().filter(|a| a.phase == Phase::Sequential) {
                a.state.params.delta_r = Hysteresis(a.state.params.delta_r.value() * cfg.params.escalation_factor);
            }
        }

        if estimating {
            if log.len() < cfg.params.window && !cfg.perfect_monitoring {
                continue;
            }
            for (a, o) in agents.iter_mut().zip(&observations) {
                if a.phase != Phase::Estimating {
                    continue;
                }
                a.state.attempt = match parallel_adaptive_init(o, params.p0, n_channels, params.eps_p) {
                    Ok(est) => est.attempt,
                    Err(Error::SaturatedObservation { .. }) => params.eps_p,
                    Err(e) => return Err(e),
                };
                a.phase = Phase::BestResponse;
            }
            pending = Some((None, false));
            continue;
        }

        let dynamic: Vec<usize> = (0..n_users)
            .filter(|&n| matches!(agents[n].phase, Phase::Sequential | Phase::BestResponse))
            .collect();
        if dynamic.is_empty() {
            continue;
        }
        let n = dynamic[turn % dynamic.len()];
        turn += 1;
        let before = agents[n].state.channel;
        match agents[n].phase {
            Phase::Sequential => {
                agents[n].state = sequential_adaptive_step(&agents[n].state, &observations[n], &u.row(n)[1..])?;
            }
            Phase::BestResponse => {
                let v = &observations[n].v_hat;
                let current = u.get(n, before) * v[before - 1];
                if let Some((k, r)) = best_channel_for(&u.row(n)[1..], v) {
                    if k != before && strictly_greater(r, current) {
                        agents[n].state.channel = k;
                    }
                }
                if agents[n].state.channel == before {
                    calm += 1;
                } else {
                    calm = 0;
                }
            }
            Phase::Static | Phase::Estimating => unreachable!(),
        }
        pending = Some((Some(n), agents[n].state.channel != before));
    }

    Ok(MetricsTrace {
        n_users,
        n_channels,
        utilities: u,
        caps: initial_caps,
        records,
        converged,
        convergence_round,
        budget_exhausted: !converged,
        seeds,
    })
}
