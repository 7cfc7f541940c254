//! Per-user decision rules.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::TARGET_IDLE;

use super::observe::LoadObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Uniformly random channel, attempt at the cap.
    Random,
    /// Highest collision-free rate channel, attempt at the cap.
    Tg,
    /// Best response to observed load, attempt at the cap.
    ConstrainedBr,
    /// One user at a time nudges its attempt probability toward an idle
    /// probability of e⁻¹ and switches channel with hysteresis.
    SequentialAdaptive,
    /// All users estimate the population once, set `P_n = K/N̂`, then play
    /// best response with that cap.
    ParallelAdaptive,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Tg => "tg",
            Policy::ConstrainedBr => "constrained_br",
            Policy::SequentialAdaptive => "sequential_adaptive",
            Policy::ParallelAdaptive => "parallel_adaptive",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Minimum fractional gain required before switching channel. Infinite means
/// never switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hysteresis(pub f64);

impl Hysteresis {
    pub const NEVER: Hysteresis = Hysteresis(f64::INFINITY);

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Whether `candidate` beats `incumbent` by more than the hysteresis.
    pub fn admits(&self, candidate: f64, incumbent: f64) -> bool {
        self.0.is_finite() && candidate > incumbent * (1.0 + self.0)
    }
}

impl Serialize for Hysteresis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Hysteresis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Hysteresis;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Hysteresis, E> {
                if v.is_nan() || v < 0.0 {
                    return Err(E::custom(format!("hysteresis {v} must be non-negative")));
                }
                Ok(Hysteresis(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Hysteresis, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Hysteresis, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Hysteresis, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => Ok(Hysteresis::NEVER),
                    other => other
                        .parse::<f64>()
                        .map_err(|_| E::custom(format!("bad hysteresis {v:?}")))
                        .and_then(|x| self.visit_f64(x)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Attempt-probability step ε.
    pub epsilon: f64,
    /// Channel-switch hysteresis δ_R(n).
    pub delta_r: Hysteresis,
    /// Initial attempt probability.
    pub p0: f64,
    /// Stop once every `|b̂ − e⁻¹| ≤ δ`.
    pub stop_tolerance: f64,
    /// Attempt probabilities stay in `[ε_p, 1 − ε_p]`.
    pub eps_p: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            delta_r: Hysteresis(0.1),
            p0: 0.01,
            stop_tolerance: 0.02,
            eps_p: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveAgentState {
    pub policy: Policy,
    pub channel: usize,
    pub attempt: f64,
    pub params: AdaptiveParams,
}

impl AdaptiveAgentState {
    pub fn clamp_attempt(&self, p: f64) -> f64 {
        p.clamp(self.params.eps_p, 1.0 - self.params.eps_p)
    }
}

/// Largest attempt probability that keeps the channel's idle probability at
/// e⁻¹ given the others' utilization: `max(1 − e⁻¹/v, 0)`.
pub fn potential_attempt(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        (1.0 - TARGET_IDLE / v).max(0.0)
    }
}

/// One sequential update of a single agent.
///
/// Potential rates use the attempt probability of [`potential_attempt`]
/// floored at `ε_p`, so a positive incumbent rate can only be beaten by a
/// finite factor.
pub fn sequential_adaptive_step(
    state: &AdaptiveAgentState,
    obs: &LoadObservation,
    u_row: &[f64],
) -> Result<AdaptiveAgentState> {
    if state.policy != Policy::SequentialAdaptive {
        return Err(Error::InvalidValue(format!(
            "sequential step applied to a {} agent",
            state.policy
        )));
    }
    if u_row.len() != obs.n_channels() {
        return Err(Error::Dimension(format!(
            "{} utilities vs {} observed channels",
            u_row.len(),
            obs.n_channels()
        )));
    }
    if state.channel > u_row.len() {
        return Err(Error::ChannelOutOfRange {
            index: state.channel,
            n_channels: u_row.len(),
        });
    }
    let eps_p = state.params.eps_p;
    let potential: Vec<f64> = obs
        .v_hat
        .iter()
        .zip(u_row)
        .map(|(&v, &u)| potential_attempt(v).max(eps_p) * u * v)
        .collect();

    let mut best = 0;
    for (i, &r) in potential.iter().enumerate() {
        if r > potential[best] {
            best = i;
        }
    }

    let mut next = *state;
    if potential[best] <= 0.0 {
        if next.channel == 0 {
            next.channel = best + 1;
        }
        next.attempt = next.clamp_attempt(next.attempt - next.params.epsilon);
        return Ok(next);
    }

    if next.channel == 0 {
        next.channel = best + 1;
    } else if state
        .params
        .delta_r
        .admits(potential[best], potential[next.channel - 1])
    {
        next.channel = best + 1;
    }

    let idle = (1.0 - next.attempt) * obs.v_hat[next.channel - 1];
    let step = if idle > TARGET_IDLE {
        next.params.epsilon
    } else {
        -next.params.epsilon
    };
    next.attempt = next.clamp_attempt(next.attempt + step);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    /// `N̂_n`, clamped to at least `K`.
    pub n_hat: f64,
    /// `min(K/N̂_n, 1 − ε_p)`.
    pub attempt: f64,
}

/// Population estimate from idle probabilities observed while every user
/// attempts with probability `p0`.
pub fn parallel_adaptive_init(
    obs: &LoadObservation,
    p0: f64,
    n_channels: usize,
    eps_p: f64,
) -> Result<PopulationEstimate> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidValue(format!("p0 = {p0} must lie in (0, 1)")));
    }
    if n_channels == 0 || obs.n_channels() != n_channels {
        return Err(Error::Dimension(format!(
            "observation covers {} channels, expected {n_channels}",
            obs.n_channels()
        )));
    }
    let per_user = (-p0).ln_1p();
    let mut n_hat = 0.0;
    for (i, &b) in obs.b_hat.iter().enumerate() {
        if !(b > 0.0) {
            return Err(Error::SaturatedObservation { channel: i + 1 });
        }
        n_hat += b.min(1.0).ln() / per_user;
    }
    let n_hat = n_hat.max(n_channels as f64);
    Ok(PopulationEstimate {
        n_hat,
        attempt: (n_channels as f64 / n_hat).min(1.0 - eps_p),
    })
}
