//! The constrained channel-selection game.
//!
//! Every user transmits at exactly its cap `P_n` and only chooses a channel.
//! Writing `w_n = ln(1/(1−P_n))` and `L(k) = Σ_{n on k} w_n`, user `n`'s rate
//! on `k` is `P_n u_n(k) exp(−L_{−n}(k))`, so its payoff is ordinally
//! equivalent to `ψ_n(k) = ln u_n(k) − L_{−n}(k)`. The function
//!
//! ```text
//! φ = Σ_n Σ_k w_n (ln u_n(k) − (L(k) + w_n)/2) 1_n(k)
//! ```
//!
//! changes by exactly `w_n Δψ_n` under any unilateral move, which makes
//! sequential best responses terminate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    others_idle, user_rate, ConstraintVector, SingleChannelStrategy, StrategyProfile,
    UtilityMatrix,
};
use crate::{seed, TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialBreakdown {
    pub value: f64,
    /// `L(k)`, index `k-1`.
    pub per_channel_load: Vec<f64>,
    /// `1_n(k)`, row per user, index `k-1`.
    pub indicator: Vec<Vec<bool>>,
    /// `ln(1/(1−P_n))`.
    pub tilde_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseStep {
    pub user: usize,
    pub old_channel: usize,
    pub new_channel: usize,
    pub potential_before: f64,
    pub potential_after: f64,
    pub rate_before: f64,
    pub rate_after: f64,
}

impl BestResponseStep {
    pub fn switched(&self) -> bool {
        self.old_channel != self.new_channel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrace {
    pub iterations: Vec<BestResponseStep>,
    pub converged: bool,
    pub sweeps: usize,
}

impl DynamicsTrace {
    pub fn switches(&self) -> usize {
        self.iterations.iter().filter(|s| s.switched()).count()
    }
}

/// Order in which users take their turn within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateSchedule {
    RoundRobin,
    /// A fresh seeded permutation of the users every sweep.
    RandomPermutation { seed: u64 },
}

/// `a` beats `b` by more than rounding noise.
pub(crate) fn strictly_greater(a: f64, b: f64) -> bool {
    a > b + TOL * b.abs().max(f64::MIN_POSITIVE)
}

/// Channel maximizing `u(k) v(k)` given a user's view of the channels.
///
/// `u_row` and `v` are indexed `k-1`. Channels with zero utility are never
/// chosen; ties go to the lowest index. Returns `None` when every candidate
/// rate is zero.
pub fn best_channel_for(u_row: &[f64], v: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&u, &vk)) in u_row.iter().zip(v).enumerate() {
        if u <= 0.0 {
            continue;
        }
        let r = u * vk;
        match best {
            Some((_, rb)) if r <= rb => {}
            _ => best = Some((i + 1, r)),
        }
    }
    best.filter(|&(_, r)| r > 0.0)
}

fn utilization_view(profile: &StrategyProfile, n: usize, n_channels: usize) -> Vec<f64> {
    (1..=n_channels).map(|k| others_idle(profile, n, k)).collect()
}

fn check_inputs(u: &UtilityMatrix, profile: &StrategyProfile, caps: &ConstraintVector) -> Result<()> {
    if profile.len() != u.n_users() || caps.len() != u.n_users() {
        return Err(Error::Dimension(format!(
            "{} utility rows, {} strategies, {} caps",
            u.n_users(),
            profile.len(),
            caps.len()
        )));
    }
    profile.check_channels(u.n_channels())
}

/// Best channel for user `n` against the rest of `profile`, at attempt
/// probability `cap`.
///
/// Keeps the user's current channel when no channel offers a positive rate.
pub fn best_response(
    u: &UtilityMatrix,
    profile: &StrategyProfile,
    n: usize,
    cap: f64,
) -> Result<SingleChannelStrategy> {
    if n >= profile.len() || n >= u.n_users() {
        return Err(Error::UserOutOfRange {
            index: n,
            n_users: u.n_users().min(profile.len()),
        });
    }
    if !(cap > 0.0 && cap < 1.0) {
        return Err(Error::InvalidValue(format!("cap {cap} must lie in (0, 1)")));
    }
    profile.check_channels(u.n_channels())?;
    let v = utilization_view(profile, n, u.n_channels());
    let channel = match best_channel_for(&u.row(n)[1..], &v) {
        Some((k, _)) => k,
        None => profile.get(n).chosen_channel,
    };
    SingleChannelStrategy::new(channel, cap)
}

fn other_load(profile: &StrategyProfile, caps: &ConstraintVector, n: usize, k: usize) -> f64 {
    profile
        .strategies
        .iter()
        .enumerate()
        .filter(|&(i, s)| i != n && s.transmits() && s.chosen_channel == k)
        .map(|(i, _)| caps.log_weight(i))
        .sum()
}

/// `ψ_n(k) = ln u_n(k) − L_{−n}(k)`, the load being that of the other users.
///
/// Returns `-inf` when `u_n(k) = 0`.
pub fn psi(
    u: &UtilityMatrix,
    profile: &StrategyProfile,
    n: usize,
    k: usize,
    caps: &ConstraintVector,
) -> Result<f64> {
    check_inputs(u, profile, caps)?;
    if n >= u.n_users() {
        return Err(Error::UserOutOfRange {
            index: n,
            n_users: u.n_users(),
        });
    }
    if k == 0 || k > u.n_channels() {
        return Err(Error::ChannelOutOfRange {
            index: k,
            n_channels: u.n_channels(),
        });
    }
    let un = u.get(n, k);
    if un <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(un.ln() - other_load(profile, caps, n, k))
}

/// Ordinal potential of a profile in which every transmitting user sits at
/// its cap.
pub fn potential(
    u: &UtilityMatrix,
    profile: &StrategyProfile,
    caps: &ConstraintVector,
) -> Result<PotentialBreakdown> {
    check_inputs(u, profile, caps)?;
    let n_channels = u.n_channels();
    let tilde_p: Vec<f64> = (0..u.n_users()).map(|n| caps.log_weight(n)).collect();

    let mut indicator = vec![vec![false; n_channels]; u.n_users()];
    for (n, s) in profile.strategies.iter().enumerate() {
        if !s.transmits() {
            continue;
        }
        if (s.attempt_probability - caps.get(n)).abs() > TOL {
            return Err(Error::OffCap {
                user: n,
                attempt: s.attempt_probability,
                cap: caps.get(n),
            });
        }
        indicator[n][s.chosen_channel - 1] = true;
    }

    let mut per_channel_load = vec![0.0; n_channels];
    for (n, row) in indicator.iter().enumerate() {
        for (k, &on) in row.iter().enumerate() {
            if on {
                per_channel_load[k] += tilde_p[n];
            }
        }
    }

    let mut value = 0.0;
    for (n, row) in indicator.iter().enumerate() {
        for (k, &on) in row.iter().enumerate() {
            if on {
                let w = tilde_p[n];
                value += w * (u.get(n, k + 1).ln() - (per_channel_load[k] + w) / 2.0);
            }
        }
    }

    Ok(PotentialBreakdown {
        value,
        per_channel_load,
        indicator,
        tilde_p,
    })
}

/// `Σ_n max_k ln(1/(1−P_n)) ln u_n(k)`, an upper bound on the potential of
/// any profile in which every user transmits.
pub fn potential_upper_bound(u: &UtilityMatrix, caps: &ConstraintVector) -> f64 {
    (0..u.n_users())
        .map(|n| {
            let w = caps.log_weight(n);
            (1..=u.n_channels())
                .map(|k| w * u.get(n, k).ln())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// True when no user can strictly raise its rate by moving to another
/// channel at its cap.
pub fn is_nep(u: &UtilityMatrix, profile: &StrategyProfile, caps: &ConstraintVector) -> Result<bool> {
    check_inputs(u, profile, caps)?;
    for n in 0..u.n_users() {
        let s = profile.get(n);
        let cap = caps.get(n);
        let current = if s.chosen_channel == 0 {
            0.0
        } else {
            cap * u.get(n, s.chosen_channel) * others_idle(profile, n, s.chosen_channel)
        };
        let v = utilization_view(profile, n, u.n_channels());
        if let Some((_, r)) = best_channel_for(&u.row(n)[1..], &v) {
            if strictly_greater(cap * r, current) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Every user on its highest collision-free-rate channel at its cap.
pub fn greedy_profile(u: &UtilityMatrix, caps: &ConstraintVector) -> Result<StrategyProfile> {
    if caps.len() != u.n_users() {
        return Err(Error::Dimension(format!(
            "{} caps for {} users",
            caps.len(),
            u.n_users()
        )));
    }
    (0..u.n_users())
        .map(|n| SingleChannelStrategy::new(u.best_channel(n), caps.get(n)))
        .collect::<Result<Vec<_>>>()
        .map(StrategyProfile::new)
}

/// Sequential best-response dynamics.
///
/// Users take turns in `schedule` order; a user moves only when the best
/// channel strictly beats its current one. Stops after the first sweep with
/// no move (`converged = true`) or after `max_sweeps` sweeps.
pub fn run_sequential_br(
    u: &UtilityMatrix,
    caps: &ConstraintVector,
    initial: &StrategyProfile,
    schedule: UpdateSchedule,
    max_sweeps: usize,
) -> Result<(StrategyProfile, DynamicsTrace)> {
    check_inputs(u, initial, caps)?;
    if max_sweeps == 0 {
        return Err(Error::InvalidValue("max_sweeps must be at least 1".into()));
    }
    let n_users = u.n_users();
    let mut profile = StrategyProfile::new(
        initial
            .strategies
            .iter()
            .enumerate()
            .map(|(n, s)| SingleChannelStrategy {
                chosen_channel: s.chosen_channel,
                attempt_probability: if s.chosen_channel == 0 { 0.0 } else { caps.get(n) },
            })
            .collect(),
    );
    let mut order: Vec<usize> = (0..n_users).collect();
    let mut rng = match schedule {
        UpdateSchedule::RandomPermutation { seed } => Some(seed::rng(seed)),
        UpdateSchedule::RoundRobin => None,
    };

    let mut trace = DynamicsTrace {
        iterations: Vec::new(),
        converged: false,
        sweeps: 0,
    };
    let mut phi = potential(u, &profile, caps)?.value;

    while trace.sweeps < max_sweeps {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        trace.sweeps += 1;
        let mut moved = false;
        for &n in &order {
            let old = *profile.get(n);
            let rate_before = user_rate(u, &profile, n)?;
            let candidate = best_response(u, &profile, n, caps.get(n))?;
            let mut next = old;
            if candidate.chosen_channel != old.chosen_channel {
                let mut trial = profile.clone();
                trial.strategies[n] = candidate;
                let rate_after = user_rate(u, &trial, n)?;
                if strictly_greater(rate_after, rate_before) {
                    next = candidate;
                    profile = trial;
                }
            }
            let phi_after = if next == old {
                phi
            } else {
                potential(u, &profile, caps)?.value
            };
            trace.iterations.push(BestResponseStep {
                user: n,
                old_channel: old.chosen_channel,
                new_channel: next.chosen_channel,
                potential_before: phi,
                potential_after: phi_after,
                rate_before,
                rate_after: user_rate(u, &profile, n)?,
            });
            if next != old {
                moved = true;
            }
            phi = phi_after;
        }
        if !moved {
            trace.converged = true;
            break;
        }
    }
    Ok((profile, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    fn on(k: usize, x: f64) -> SingleChannelStrategy {
        SingleChannelStrategy::new(k, x).unwrap()
    }

    #[test]
    fn best_response_examples() {
        // u_1 = [4, 2]; another user on channel 1 with x = 0.6 gives v = [0.4, 1].
        // To get v_1(2) = 0.9 a third user sits on channel 2 with x = 0.1.
        let u = UtilityMatrix::from_rows(&[vec![4.0, 2.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = StrategyProfile::new(vec![on(1, 0.5), on(1, 0.6), on(2, 0.1)]);
        let br = best_response(&u, &p, 0, 0.5).unwrap();
        assert_eq!(br.chosen_channel, 2);
        assert_eq!(br.attempt_probability, 0.5);

        let u = UtilityMatrix::from_rows(&[vec![4.0, 2.0]]).unwrap();
        let p = StrategyProfile::new(vec![on(2, 0.5)]);
        assert_eq!(best_response(&u, &p, 0, 0.5).unwrap().chosen_channel, 1);

        let u = UtilityMatrix::from_rows(&[vec![2.0, 2.0]]).unwrap();
        let p = StrategyProfile::new(vec![on(2, 0.5)]);
        assert_eq!(best_response(&u, &p, 0, 0.5).unwrap().chosen_channel, 1);
    }

    #[test]
    fn best_response_holds_when_all_rates_zero() {
        let u = UtilityMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let p = StrategyProfile::new(vec![on(2, 0.5)]);
        assert_eq!(best_response(&u, &p, 0, 0.5).unwrap().chosen_channel, 2);
        // Zero-utility channel is skipped even when empty.
        let u = UtilityMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = StrategyProfile::new(vec![on(1, 0.5), on(2, 0.9)]);
        assert_eq!(best_response(&u, &p, 0, 0.5).unwrap().chosen_channel, 2);
    }

    #[test]
    fn psi_examples() {
        let u = UtilityMatrix::from_rows(&[vec![E], vec![1.0]]).unwrap();
        let caps = ConstraintVector::new(vec![0.5, 0.5]).unwrap();
        let alone = StrategyProfile::new(vec![on(1, 0.5), SingleChannelStrategy::silent()]);
        assert!((psi(&u, &alone, 0, 1, &caps).unwrap() - 1.0).abs() < 1e-15);
        let shared = StrategyProfile::new(vec![on(1, 0.5), on(1, 0.5)]);
        assert!((psi(&u, &shared, 0, 1, &caps).unwrap() - (1.0 - LN_2)).abs() < 1e-15);
        assert!((psi(&u, &shared, 0, 1, &caps).unwrap() - 0.30685).abs() < 1e-5);
        let other = StrategyProfile::new(vec![SingleChannelStrategy::silent(), on(1, 0.5)]);
        assert_eq!(psi(&u, &other, 1, 1, &caps).unwrap(), 0.0);

        let z = UtilityMatrix::from_rows(&[vec![0.0]]).unwrap();
        let c1 = ConstraintVector::new(vec![0.5]).unwrap();
        let p1 = StrategyProfile::new(vec![on(1, 0.5)]);
        assert_eq!(psi(&z, &p1, 0, 1, &c1).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn potential_examples() {
        let u = UtilityMatrix::from_rows(&[vec![E]]).unwrap();
        let caps = ConstraintVector::new(vec![0.5]).unwrap();
        let p = StrategyProfile::new(vec![on(1, 0.5)]);
        let phi = potential(&u, &p, &caps).unwrap();
        // The user's own weight counts toward the channel load.
        assert!((phi.value - LN_2 * (1.0 - LN_2)).abs() < 1e-15);
        assert!((phi.value - 0.21269).abs() < 1e-5);

        let silent = StrategyProfile::new(vec![SingleChannelStrategy::silent()]);
        assert_eq!(potential(&u, &silent, &caps).unwrap().value, 0.0);

        let u = UtilityMatrix::from_rows(&[vec![E], vec![E]]).unwrap();
        let caps = ConstraintVector::new(vec![0.5, 0.5]).unwrap();
        let p = StrategyProfile::new(vec![on(1, 0.5), on(1, 0.5)]);
        let phi = potential(&u, &p, &caps).unwrap();
        assert!((phi.value - 2.0 * LN_2 * (1.0 - 3.0 * LN_2 / 2.0)).abs() < 1e-15);
        assert!((phi.value + 0.05507).abs() < 1e-5);
        assert_eq!(phi.per_channel_load, vec![2.0 * LN_2]);

        let off = StrategyProfile::new(vec![on(1, 0.4), on(1, 0.5)]);
        assert!(matches!(potential(&u, &off, &caps), Err(Error::OffCap { user: 0, .. })));
    }

    #[test]
    fn is_nep_examples() {
        let u = UtilityMatrix::from_rows(&[vec![3.0, 5.0]]).unwrap();
        let caps = ConstraintVector::new(vec![0.5]).unwrap();
        assert!(is_nep(&u, &StrategyProfile::new(vec![on(2, 0.5)]), &caps).unwrap());
        assert!(!is_nep(&u, &StrategyProfile::new(vec![on(1, 0.5)]), &caps).unwrap());

        // Crowded on channel 1 (r = 4 * 0.5 = 2) while channel 2 offers 3.
        let u = UtilityMatrix::from_rows(&[vec![4.0, 3.0], vec![4.0, 3.0]]).unwrap();
        let caps = ConstraintVector::new(vec![0.5, 0.5]).unwrap();
        let crowded = StrategyProfile::new(vec![on(1, 0.5), on(1, 0.5)]);
        assert!(!is_nep(&u, &crowded, &caps).unwrap());
    }

    #[test]
    fn sequential_br_two_users_one_switch() {
        let u = UtilityMatrix::from_rows(&[vec![4.0, 3.0], vec![4.0, 3.0]]).unwrap();
        let caps = ConstraintVector::new(vec![0.5, 0.5]).unwrap();
        let start = StrategyProfile::new(vec![on(1, 0.5), on(1, 0.5)]);
        let (end, trace) = run_sequential_br(&u, &caps, &start, UpdateSchedule::RoundRobin, 10).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.switches(), 1);
        assert_eq!(end.get(0).chosen_channel, 2);
        assert_eq!(end.get(1).chosen_channel, 1);
        assert!(is_nep(&u, &end, &caps).unwrap());

        // Reverse order: the other user moves.
        let (end, trace) = run_sequential_br(
            &u,
            &caps,
            &start,
            UpdateSchedule::RandomPermutation { seed: 3 },
            10,
        )
        .unwrap();
        assert_eq!(trace.switches(), 1);
        assert!(is_nep(&u, &end, &caps).unwrap());
    }

    #[test]
    fn sequential_br_distinct_best_channels_converges_immediately() {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|n| (0..3).map(|k| if k == n { 5.0 } else { 1.0 }).collect())
            .collect();
        let u = UtilityMatrix::from_rows(&rows).unwrap();
        let caps = ConstraintVector::uniform(3, 0.9).unwrap();
        let start = greedy_profile(&u, &caps).unwrap();
        let (end, trace) = run_sequential_br(&u, &caps, &start, UpdateSchedule::RoundRobin, 5).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.sweeps, 1);
        assert_eq!(trace.switches(), 0);
        assert_eq!(end, start);
    }

    #[test]
    fn sequential_br_rejects_zero_budget() {
        let u = UtilityMatrix::from_rows(&[vec![1.0]]).unwrap();
        let caps = ConstraintVector::uniform(1, 0.5).unwrap();
        let p = StrategyProfile::new(vec![on(1, 0.5)]);
        assert!(run_sequential_br(&u, &caps, &p, UpdateSchedule::RoundRobin, 0).is_err());
    }
}
