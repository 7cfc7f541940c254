//! Closed-form benchmarks and oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TARGET_IDLE;

mod alpha;

pub use alpha::{solve_alpha_allocation, AlphaAllocation};

/// Equal-utility comparison between balanced best response and the greedy
/// (random pick) scheme, all users at attempt probability `K/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRates {
    pub br_user_rate: f64,
    pub tg_user_rate: f64,
    pub br_sum_rate: f64,
    pub tg_sum_rate: f64,
    pub gain: f64,
}

/// `(1 − K/N)^(N/K − 1)` with `0^0 = 1`.
fn balanced_success(n: f64, k: f64) -> f64 {
    let base = 1.0 - k / n;
    let exp = n / k - 1.0;
    if exp == 0.0 {
        1.0
    } else {
        base.powf(exp)
    }
}

/// `(1 − 1/N)^(N − 1)` with `0^0 = 1`.
fn random_pick_success(n: f64) -> f64 {
    if n == 1.0 {
        1.0
    } else {
        (1.0 - 1.0 / n).powf(n - 1.0)
    }
}

/// Sum-rate gain `ρ` of balanced best response over random picking.
/// Defined for any real `N ≥ K > 0`.
pub fn gain_ratio(n: f64, k: f64) -> Result<f64> {
    if !(k > 0.0 && n >= k && n.is_finite()) {
        return Err(Error::InvalidValue(format!("need N ≥ K > 0, got N={n}, K={k}")));
    }
    Ok(balanced_success(n, k) / random_pick_success(n))
}

pub fn benchmark_rates(n: usize, k: usize, mean_utility: f64) -> Result<BenchmarkRates> {
    if k == 0 || n < k {
        return Err(Error::InvalidValue(format!("need N ≥ K ≥ 1, got N={n}, K={k}")));
    }
    if n % k != 0 {
        return Err(Error::NonIntegralLoad { n, k });
    }
    let (nf, kf) = (n as f64, k as f64);
    let share = kf / nf;
    let br = balanced_success(nf, kf);
    let tg = random_pick_success(nf);
    Ok(BenchmarkRates {
        br_user_rate: mean_utility * share * br,
        tg_user_rate: mean_utility * share * tg,
        br_sum_rate: kf * br * mean_utility,
        tg_sum_rate: kf * tg * mean_utility,
        gain: br / tg,
    })
}

/// Attempt probability maximizing the sum log rate of `n_sharing` users on
/// one channel.
pub fn optimal_equal_share(n_sharing: usize) -> Result<f64> {
    if n_sharing == 0 {
        return Err(Error::InvalidValue("no users share the channel".into()));
    }
    Ok(1.0 / n_sharing as f64)
}

/// Upper bound on `Σ_n ln R_n` over all profiles, reached by `N/K` users per
/// channel at attempt probability `K/N`.
///
/// `u_star_sum` is `Σ_n ln max_k u_n(k)`.
pub fn sum_log_rate_upper_bound(u_star_sum: f64, n: usize, k: usize) -> Result<f64> {
    if k == 0 || (n as f64) < 2.0 * k as f64 {
        return Err(Error::InvalidValue(format!("bound needs N/K ≥ 2, got N={n}, K={k}")));
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok(u_star_sum + nf * (kf / nf).ln() + nf * (nf / kf - 1.0) * (1.0 - kf / nf).ln())
}

/// Whether per-user throughput demands fit a single collision channel.
pub fn feasible_throughput_region(etas: &[f64]) -> bool {
    if etas.is_empty() {
        return true;
    }
    let total: f64 = etas.iter().sum();
    total <= random_pick_success(etas.len() as f64) + crate::TOL
}

/// Hysteresis above which a sequential adaptive user never switches channel.
pub fn delta_r_star(u_max: f64, u_min: f64, eps_p: f64, n: usize) -> Result<f64> {
    if !(u_min > 0.0) {
        return Err(Error::InvalidValue(format!("u_min = {u_min} must be positive")));
    }
    if !(eps_p > 0.0 && eps_p < 1.0) {
        return Err(Error::InvalidValue(format!("eps_p = {eps_p} must lie in (0, 1)")));
    }
    Ok((1.0 - TARGET_IDLE) * u_max / (eps_p.powi(n as i32) * u_min))
}
