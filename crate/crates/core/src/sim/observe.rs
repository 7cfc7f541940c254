use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{others_idle, SingleChannelStrategy, StrategyProfile};
use crate::TARGET_IDLE;

use super::slots::SlotLog;

/// What one user knows about channel load, indexed `k-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadObservation {
    /// Estimated probability that no other user transmits on `k`.
    pub v_hat: Vec<f64>,
    /// `(1 − p_n(k)) v̂_n(k)`.
    pub b_hat: Vec<f64>,
    /// `|b̂_n(k) − e⁻¹|`.
    pub delta: Vec<f64>,
    /// Slots the estimate is based on; 0 for an exact observation.
    pub window_slots: usize,
}

impl LoadObservation {
    pub fn from_utilization(v_hat: Vec<f64>, own: &SingleChannelStrategy, window_slots: usize) -> Self {
        let b_hat: Vec<f64> = v_hat
            .iter()
            .enumerate()
            .map(|(i, &v)| (1.0 - own.prob_on(i + 1)) * v)
            .collect();
        let delta = b_hat.iter().map(|&b| (b - TARGET_IDLE).abs()).collect();
        Self {
            v_hat,
            b_hat,
            delta,
            window_slots,
        }
    }

    /// Perfect monitoring: the true `v_n(k)` of the profile.
    pub fn exact(profile: &StrategyProfile, n: usize, n_channels: usize) -> Self {
        let v = (1..=n_channels).map(|k| others_idle(profile, n, k)).collect();
        Self::from_utilization(v, profile.get(n), 0)
    }

    pub fn n_channels(&self) -> usize {
        self.v_hat.len()
    }
}

/// Fraction of the last `window` slots in which no user other than `n`
/// transmitted on each channel.
pub fn estimate_loads(
    log: &SlotLog,
    n: usize,
    window: usize,
    own: &SingleChannelStrategy,
) -> Result<LoadObservation> {
    if window == 0 || log.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if window > log.len() {
        return Err(Error::InvalidValue(format!(
            "window of {window} slots exceeds the {} recorded",
            log.len()
        )));
    }
    if n >= log.n_users() {
        return Err(Error::UserOutOfRange {
            index: n,
            n_users: log.n_users(),
        });
    }
    let n_channels = log.n_channels();
    let mut busy = vec![0usize; n_channels];
    for t in log.len() - window..log.len() {
        let own_channel = log.attempt(t, n);
        for (i, count) in busy.iter_mut().enumerate() {
            let k = i + 1;
            let others = log.transmitters(t, k) - usize::from(own_channel == k);
            if others > 0 {
                *count += 1;
            }
        }
    }
    let v_hat = busy
        .iter()
        .map(|&b| (window - b) as f64 / window as f64)
        .collect();
    Ok(LoadObservation::from_utilization(v_hat, own, window))
}
