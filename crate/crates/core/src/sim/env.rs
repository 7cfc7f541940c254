use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UtilityMatrix;
use crate::seed;

/// Utilities drawn from i.i.d. Rayleigh fading, with the parameters that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEnvironment {
    pub utilities: UtilityMatrix,
    pub snr_linear: Vec<f64>,
    pub bandwidth_hz: f64,
    pub rng_seed: u64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Shannon rate `W log2(1 + SNR |h|²)` in bits/s.
pub fn shannon_rate(bandwidth_hz: f64, snr_linear: f64, gain: f64) -> f64 {
    bandwidth_hz * (snr_linear * gain).ln_1p() / std::f64::consts::LN_2
}

/// Draws `|h_n(k)|² ~ Exp(1)` for every user and channel, row by row.
pub fn generate_rayleigh_utilities(
    n_users: usize,
    n_channels: usize,
    snr_db: &[f64],
    bandwidth_hz: f64,
    seed: u64,
) -> Result<ChannelEnvironment> {
    if n_users == 0 || n_channels == 0 {
        return Err(Error::Dimension("need at least one user and one channel".into()));
    }
    if snr_db.len() != n_channels {
        return Err(Error::Dimension(format!(
            "{} SNR values for {n_channels} channels",
            snr_db.len()
        )));
    }
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
        return Err(Error::InvalidValue(format!("bandwidth {bandwidth_hz} Hz")));
    }
    let snr_linear: Vec<f64> = snr_db.iter().map(|&d| db_to_linear(d)).collect();
    let mut rng = seed::rng(seed);
    let rows: Vec<Vec<f64>> = (0..n_users)
        .map(|_| {
            snr_linear
                .iter()
                .map(|&snr| {
                    let gain: f64 = rng.sample(Exp1);
                    shannon_rate(bandwidth_hz, snr, gain)
                })
                .collect()
        })
        .collect();
    Ok(ChannelEnvironment {
        utilities: UtilityMatrix::from_rows(&rows)?,
        snr_linear,
        bandwidth_hz,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_rate(1e7, 1.0, 0.0), 0.0);
        assert!((shannon_rate(1e7, db_to_linear(0.0), 1.0) - 1e7).abs() < 1e-6);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_rayleigh_utilities(5, 3, &[0.0, 10.0, 20.0], 1e7, 9).unwrap();
        let b = generate_rayleigh_utilities(5, 3, &[0.0, 10.0, 20.0], 1e7, 9).unwrap();
        let c = generate_rayleigh_utilities(5, 3, &[0.0, 10.0, 20.0], 1e7, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.utilities, c.utilities);
        assert!(generate_rayleigh_utilities(5, 3, &[0.0], 1e7, 9).is_err());
    }
}
