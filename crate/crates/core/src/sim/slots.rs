use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StrategyProfile;
use crate::seed;

use super::env::ChannelEnvironment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelOutcome {
    Idle,
    Success(usize),
    Collision,
}

/// Slot-by-slot record of who attempted which channel and what each channel
/// delivered.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotLog {
    n_users: usize,
    n_channels: usize,
    /// `attempts[slot * N + n]` is the channel user `n` transmitted on, 0 if silent.
    attempts: Vec<u16>,
    /// `outcomes[slot * K + k - 1]`.
    outcomes: Vec<ChannelOutcome>,
    /// Transmitter count per slot and channel, same layout as `outcomes`.
    counts: Vec<u32>,
}

impl SlotLog {
    pub fn new(n_users: usize, n_channels: usize) -> Self {
        Self {
            n_users,
            n_channels,
            attempts: Vec::new(),
            outcomes: Vec::new(),
            counts: Vec::new(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn len(&self) -> usize {
        if self.n_users == 0 {
            0
        } else {
            self.attempts.len() / self.n_users
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel user `n` transmitted on in `slot`, 0 if it stayed silent.
    pub fn attempt(&self, slot: usize, n: usize) -> usize {
        self.attempts[slot * self.n_users + n] as usize
    }

    pub fn outcome(&self, slot: usize, k: usize) -> ChannelOutcome {
        self.outcomes[slot * self.n_channels + k - 1]
    }

    /// Number of transmitters on channel `k` in `slot`.
    pub fn transmitters(&self, slot: usize, k: usize) -> usize {
        self.counts[slot * self.n_channels + k - 1] as usize
    }

    /// Successful slots of user `n` over the whole log.
    pub fn successes(&self, n: usize) -> usize {
        self.successes_in(n, 0..self.len())
    }

    pub fn successes_in(&self, n: usize, slots: std::ops::Range<usize>) -> usize {
        slots
            .filter(|&t| {
                let k = self.attempt(t, n);
                k != 0 && self.outcome(t, k) == ChannelOutcome::Success(n)
            })
            .count()
    }

    /// Appends one slot given each user's attempted channel.
    pub fn push_slot(&mut self, attempts: &[u16]) {
        debug_assert_eq!(attempts.len(), self.n_users);
        self.attempts.extend_from_slice(attempts);
        let base = self.outcomes.len();
        self.outcomes.resize(base + self.n_channels, ChannelOutcome::Idle);
        self.counts.resize(base + self.n_channels, 0);
        for (n, &a) in attempts.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let i = base + a as usize - 1;
            self.counts[i] += 1;
            self.outcomes[i] = if self.counts[i] == 1 {
                ChannelOutcome::Success(n)
            } else {
                ChannelOutcome::Collision
            };
        }
    }

    /// Drops all but the most recent `keep` slots.
    pub fn retain_last(&mut self, keep: usize) {
        let len = self.len();
        if len > keep {
            let drop = len - keep;
            self.attempts.drain(..drop * self.n_users);
            self.outcomes.drain(..drop * self.n_channels);
            self.counts.drain(..drop * self.n_channels);
        }
    }

    pub fn append(&mut self, other: &SlotLog) {
        debug_assert_eq!(self.n_users, other.n_users);
        debug_assert_eq!(self.n_channels, other.n_channels);
        self.attempts.extend_from_slice(&other.attempts);
        self.outcomes.extend_from_slice(&other.outcomes);
        self.counts.extend_from_slice(&other.counts);
    }
}

/// Simulates `n_slots` slots with a fixed profile using `rng`.
pub(crate) fn simulate(
    profile: &StrategyProfile,
    n_channels: usize,
    n_slots: usize,
    rng: &mut ChaCha8Rng,
) -> SlotLog {
    let n_users = profile.len();
    let mut log = SlotLog::new(n_users, n_channels);
    log.attempts.reserve(n_slots * n_users);
    log.outcomes.reserve(n_slots * n_channels);
    log.counts.reserve(n_slots * n_channels);
    let mut row = vec![0u16; n_users];
    for _ in 0..n_slots {
        for (slot, s) in row.iter_mut().zip(&profile.strategies) {
            *slot = if s.chosen_channel != 0 && rng.random::<f64>() < s.attempt_probability {
                s.chosen_channel as u16
            } else {
                0
            };
        }
        log.push_slot(&row);
    }
    log
}

/// Every slot, each user independently transmits on its chosen channel with
/// its attempt probability.
pub fn run_slots(
    env: &ChannelEnvironment,
    profile: &StrategyProfile,
    n_slots: usize,
    seed: u64,
) -> Result<SlotLog> {
    if n_slots == 0 {
        return Err(Error::InvalidValue("n_slots must be at least 1".into()));
    }
    let n_channels = env.utilities.n_channels();
    if profile.len() != env.utilities.n_users() {
        return Err(Error::Dimension(format!(
            "profile has {} users, environment {}",
            profile.len(),
            env.utilities.n_users()
        )));
    }
    if n_channels > u16::MAX as usize {
        return Err(Error::InvalidValue(format!("{n_channels} channels exceed the log's range")));
    }
    profile.check_channels(n_channels)?;
    let mut rng = seed::rng(seed);
    Ok(simulate(profile, n_channels, n_slots, &mut rng))
}
