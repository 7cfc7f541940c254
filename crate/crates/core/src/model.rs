//! Collision-channel rate model.
//!
//! A user `n` that attempts channel `k` with probability `x_n` succeeds when no
//! other user transmits on `k` in the same slot, so its expected rate is
//! `x_n · u_n(k) · v_n(k)` with `v_n(k) = Π_{i≠n} (1 − p_i(k))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collision-free rates `u_n(k)` in bits/s, stored with the virtual zero-rate
/// channel 0 as the first column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    n_users: usize,
    n_channels: usize,
    data: Vec<f64>,
}

impl UtilityMatrix {
    /// Builds the matrix from one row of `K` rates per user (channels `1..=K`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_users = rows.len();
        if n_users == 0 {
            return Err(Error::Dimension("utility matrix needs at least one user".into()));
        }
        let n_channels = rows[0].len();
        if n_channels == 0 {
            return Err(Error::Dimension("utility matrix needs at least one channel".into()));
        }
        let mut data = Vec::with_capacity(n_users * (n_channels + 1));
        for (n, row) in rows.iter().enumerate() {
            if row.len() != n_channels {
                return Err(Error::Dimension(format!(
                    "row {n} has {} channels, expected {n_channels}",
                    row.len()
                )));
            }
            data.push(0.0);
            for (k, &u) in row.iter().enumerate() {
                if !u.is_finite() || u < 0.0 {
                    return Err(Error::InvalidValue(format!(
                        "u[{n}][{}] = {u} must be finite and non-negative",
                        k + 1
                    )));
                }
                data.push(u);
            }
        }
        Ok(Self {
            n_users,
            n_channels,
            data,
        })
    }

    /// Every user sees the same rate on every channel.
    pub fn uniform(n_users: usize, n_channels: usize, rate: f64) -> Result<Self> {
        Self::from_rows(&vec![vec![rate; n_channels]; n_users])
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// `u_n(k)` for `k` in `0..=K`.
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.data[n * (self.n_channels + 1) + k]
    }

    /// Row of user `n` including the leading zero column.
    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.n_channels + 1;
        &self.data[n * w..(n + 1) * w]
    }

    /// The channel with the largest collision-free rate, lowest index on ties.
    pub fn best_channel(&self, n: usize) -> usize {
        let row = self.row(n);
        let mut best = 1;
        for k in 2..=self.n_channels {
            if row[k] > row[best] {
                best = k;
            }
        }
        best
    }

    /// `max_k u_n(k)`.
    pub fn best_rate(&self, n: usize) -> f64 {
        self.get(n, self.best_channel(n))
    }
}

/// One user's strategy: attempt `chosen_channel` with probability
/// `attempt_probability`, stay silent otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleChannelStrategy {
    pub chosen_channel: usize,
    pub attempt_probability: f64,
}

impl SingleChannelStrategy {
    pub fn new(chosen_channel: usize, attempt_probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&attempt_probability) {
            return Err(Error::InvalidValue(format!(
                "attempt probability {attempt_probability} outside [0, 1]"
            )));
        }
        Ok(Self {
            chosen_channel,
            attempt_probability,
        })
    }

    pub fn silent() -> Self {
        Self {
            chosen_channel: 0,
            attempt_probability: 0.0,
        }
    }

    /// True when the strategy puts positive probability on a real channel.
    pub fn transmits(&self) -> bool {
        self.chosen_channel != 0 && self.attempt_probability > 0.0
    }

    /// `p_n(k)` for `k` in `0..=K`.
    pub fn prob_on(&self, k: usize) -> f64 {
        if self.chosen_channel == 0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if k == 0 {
            1.0 - self.attempt_probability
        } else if k == self.chosen_channel {
            self.attempt_probability
        } else {
            0.0
        }
    }

    /// The full probability row `(p_n(0), …, p_n(K))`.
    pub fn expand(&self, n_channels: usize) -> Vec<f64> {
        (0..=n_channels).map(|k| self.prob_on(k)).collect()
    }
}

/// All users' strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub strategies: Vec<SingleChannelStrategy>,
}

impl StrategyProfile {
    pub fn new(strategies: Vec<SingleChannelStrategy>) -> Self {
        Self { strategies }
    }

    /// Every user on `channels[n]` with attempt probability `attempts[n]`.
    pub fn from_parts(channels: &[usize], attempts: &[f64]) -> Result<Self> {
        if channels.len() != attempts.len() {
            return Err(Error::Dimension(format!(
                "{} channels vs {} attempt probabilities",
                channels.len(),
                attempts.len()
            )));
        }
        channels
            .iter()
            .zip(attempts)
            .map(|(&k, &x)| SingleChannelStrategy::new(k, x))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn get(&self, n: usize) -> &SingleChannelStrategy {
        &self.strategies[n]
    }

    /// Number of transmitting users on each channel, index `k-1`.
    pub fn occupancy(&self, n_channels: usize) -> Vec<usize> {
        let mut occ = vec![0; n_channels];
        for s in &self.strategies {
            if s.transmits() && s.chosen_channel <= n_channels {
                occ[s.chosen_channel - 1] += 1;
            }
        }
        occ
    }

    /// Checks that every chosen channel exists in a `K`-channel network.
    pub fn check_channels(&self, n_channels: usize) -> Result<()> {
        for s in &self.strategies {
            if s.chosen_channel > n_channels {
                return Err(Error::ChannelOutOfRange {
                    index: s.chosen_channel,
                    n_channels,
                });
            }
        }
        Ok(())
    }

    fn check_user(&self, n: usize) -> Result<()> {
        if n >= self.len() {
            return Err(Error::UserOutOfRange {
                index: n,
                n_users: self.len(),
            });
        }
        Ok(())
    }
}

/// Per-user caps `P_n` on the total transmission probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVector {
    caps: Vec<f64>,
}

impl ConstraintVector {
    pub fn new(caps: Vec<f64>) -> Result<Self> {
        for (n, &p) in caps.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidValue(format!("cap P_{n} = {p} must lie in (0, 1)")));
            }
        }
        Ok(Self { caps })
    }

    pub fn uniform(n_users: usize, cap: f64) -> Result<Self> {
        Self::new(vec![cap; n_users])
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn get(&self, n: usize) -> f64 {
        self.caps[n]
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    /// `ln(1 / (1 − P_n))`, the weight user `n` carries in channel loads.
    pub fn log_weight(&self, n: usize) -> f64 {
        -(-self.caps[n]).ln_1p()
    }
}

/// Aggregated rates of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_user_rate: Vec<f64>,
    /// `r_n(k) = u_n(k) v_n(k)`, one row per user, index `k-1`.
    pub per_channel_rate: Vec<Vec<f64>>,
    pub sum_rate: f64,
    /// `Σ ln R_n`; `-inf` as soon as one user has zero rate.
    pub sum_log_rate: f64,
    pub channel_idle: Vec<f64>,
    pub occupancy: Vec<usize>,
}

fn n_channels_of(profile: &StrategyProfile) -> usize {
    profile
        .strategies
        .iter()
        .map(|s| s.chosen_channel)
        .max()
        .unwrap_or(0)
}

fn check_compatible(u: &UtilityMatrix, profile: &StrategyProfile) -> Result<()> {
    if u.n_users() != profile.len() {
        return Err(Error::Dimension(format!(
            "utility matrix has {} users, profile has {}",
            u.n_users(),
            profile.len()
        )));
    }
    profile.check_channels(u.n_channels())
}

/// `v_n(k)`: probability that no user other than `n` transmits on `k`.
///
/// Channel indices beyond every chosen channel are accepted as long as
/// `k ≥ 1`; they are simply unused.
pub fn success_probability(profile: &StrategyProfile, n: usize, k: usize) -> Result<f64> {
    profile.check_user(n)?;
    if k == 0 {
        return Err(Error::ChannelOutOfRange {
            index: 0,
            n_channels: n_channels_of(profile),
        });
    }
    Ok(others_idle(profile, n, k))
}

pub(crate) fn others_idle(profile: &StrategyProfile, n: usize, k: usize) -> f64 {
    profile
        .strategies
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != n)
        .map(|(_, s)| 1.0 - s.prob_on(k))
        .product()
}

/// `b(k)`: probability that nobody transmits on `k`.
pub fn idle_probability(profile: &StrategyProfile, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::ChannelOutOfRange {
            index: 0,
            n_channels: n_channels_of(profile),
        });
    }
    Ok(profile
        .strategies
        .iter()
        .map(|s| 1.0 - s.prob_on(k))
        .product())
}

/// Expected rate `R_n = Σ_k p_n(k) u_n(k) v_n(k)`.
pub fn user_rate(u: &UtilityMatrix, profile: &StrategyProfile, n: usize) -> Result<f64> {
    check_compatible(u, profile)?;
    profile.check_user(n)?;
    let s = profile.get(n);
    if s.chosen_channel == 0 {
        return Ok(0.0);
    }
    let k = s.chosen_channel;
    Ok(s.attempt_probability * u.get(n, k) * others_idle(profile, n, k))
}

/// Per-user and per-channel rates, idle probabilities and occupancy.
pub fn rate_report(u: &UtilityMatrix, profile: &StrategyProfile) -> Result<RateReport> {
    check_compatible(u, profile)?;
    let n_channels = u.n_channels();
    let n_users = u.n_users();

    let channel_idle: Vec<f64> = (1..=n_channels)
        .map(|k| idle_probability(profile, k))
        .collect::<Result<_>>()?;

    let mut per_channel_rate = Vec::with_capacity(n_users);
    let mut per_user_rate = Vec::with_capacity(n_users);
    for n in 0..n_users {
        let row: Vec<f64> = (1..=n_channels)
            .map(|k| u.get(n, k) * others_idle(profile, n, k))
            .collect();
        let s = profile.get(n);
        let rate = if s.chosen_channel == 0 {
            0.0
        } else {
            s.attempt_probability * row[s.chosen_channel - 1]
        };
        per_user_rate.push(rate);
        per_channel_rate.push(row);
    }

    let sum_rate = per_user_rate.iter().sum();
    Ok(RateReport {
        sum_log_rate: sum_log(&per_user_rate),
        per_user_rate,
        per_channel_rate,
        sum_rate,
        channel_idle,
        occupancy: profile.occupancy(n_channels),
    })
}

/// `Σ ln R_n` with `-inf` for any zero rate.
pub fn sum_log(rates: &[f64]) -> f64 {
    rates
        .iter()
        .map(|&r| if r > 0.0 { r.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// Nash product `Π (R_n − R_n^min)`.
pub fn nbs_objective(rates: &[f64], disagreement: &[f64]) -> Result<f64> {
    if rates.len() != disagreement.len() {
        return Err(Error::Dimension(format!(
            "{} rates vs {} disagreement points",
            rates.len(),
            disagreement.len()
        )));
    }
    let mut product = 1.0;
    for (n, (&r, &d)) in rates.iter().zip(disagreement).enumerate() {
        if r < d {
            return Err(Error::OutsideBargainingSet {
                user: n,
                rate: r,
                floor: d,
            });
        }
        product *= r - d;
    }
    Ok(product)
}

/// `Σ_n x_n v_n(k_n)`: expected successful packets per slot over all channels.
pub fn network_throughput(profile: &StrategyProfile) -> f64 {
    profile
        .strategies
        .iter()
        .enumerate()
        .filter(|(_, s)| s.chosen_channel != 0)
        .map(|(n, s)| s.attempt_probability * others_idle(profile, n, s.chosen_channel))
        .sum()
}
