//! Closed-form tables.

use std::io::Write;

use mcaloha_core::analytics::{benchmark_rates, delta_r_star, gain_ratio, sum_log_rate_upper_bound};

use crate::error::{CliError, CliResult};
use crate::fmt_f64;

pub const RHO_HEADER: &str = "n_over_k,n,k,gain";
pub const BENCH_HEADER: &str = "n,k,mean_utility,br_user_rate,tg_user_rate,br_sum_rate,tg_sum_rate,gain";
pub const BOUND_HEADER: &str = "n,k,ustar_sum,bound";
pub const DELTA_R_STAR_HEADER: &str = "u_max,u_min,eps_p,n,delta_r_star";

/// Parses `a..b` (inclusive), `a,b,c` or a single integer.
pub fn parse_int_list(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("cannot parse integer list {spec:?}"));
    let spec = spec.trim();
    let values: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let b = b.trim_start_matches('=');
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn line(out: &mut dyn Write, fields: &[String]) -> CliResult<()> {
    writeln!(out, "{}", fields.join(",")).map_err(|e| CliError::Io(e.to_string()))
}

fn header(out: &mut dyn Write, h: &str) -> CliResult<()> {
    writeln!(out, "{h}").map_err(|e| CliError::Io(e.to_string()))
}

pub fn rho_table(out: &mut dyn Write, k: usize, ratios: &[usize]) -> CliResult<()> {
    if k == 0 || ratios.contains(&0) {
        return Err(CliError::Usage("--k and every N/K must be at least 1".into()));
    }
    header(out, RHO_HEADER)?;
    for &r in ratios {
        let n = r * k;
        let g = gain_ratio(n as f64, k as f64)?;
        line(out, &[r.to_string(), n.to_string(), k.to_string(), fmt_f64(g)])?;
    }
    Ok(())
}

pub fn bench_table(out: &mut dyn Write, ns: &[usize], k: usize, mean_utility: f64) -> CliResult<()> {
    header(out, BENCH_HEADER)?;
    for &n in ns {
        let b = benchmark_rates(n, k, mean_utility)?;
        line(
            out,
            &[
                n.to_string(),
                k.to_string(),
                fmt_f64(mean_utility),
                fmt_f64(b.br_user_rate),
                fmt_f64(b.tg_user_rate),
                fmt_f64(b.br_sum_rate),
                fmt_f64(b.tg_sum_rate),
                fmt_f64(b.gain),
            ],
        )?;
    }
    Ok(())
}

pub fn bound_table(out: &mut dyn Write, n: usize, k: usize, ustar: f64) -> CliResult<()> {
    let b = sum_log_rate_upper_bound(ustar, n, k)?;
    header(out, BOUND_HEADER)?;
    line(out, &[n.to_string(), k.to_string(), fmt_f64(ustar), fmt_f64(b)])
}

pub fn delta_r_star_table(out: &mut dyn Write, u_max: f64, u_min: f64, eps_p: f64, ns: &[usize]) -> CliResult<()> {
    header(out, DELTA_R_STAR_HEADER)?;
    for &n in ns {
        let d = delta_r_star(u_max, u_min, eps_p, n)?;
        line(out, &[fmt_f64(u_max), fmt_f64(u_min), fmt_f64(eps_p), n.to_string(), fmt_f64(d)])?;
    }
    Ok(())
}
