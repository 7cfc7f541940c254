//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p mcaloha-cli --test acceptance -- --nocapture` to
//! see the report.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mcaloha_cli::sweep;
use mcaloha_core::analytics::{gain_ratio, optimal_equal_share, solve_alpha_allocation, sum_log_rate_upper_bound};
use mcaloha_core::game::{greedy_profile, is_nep, potential, psi, run_sequential_br, UpdateSchedule};
use mcaloha_core::model::{rate_report, user_rate};
use mcaloha_core::seed;
use mcaloha_core::sim::{
    estimate_loads, generate_rayleigh_utilities, parallel_adaptive_init, run_scenario, run_slots, CapModel,
    ChannelEnvironment, Hysteresis, LoadObservation, Policy, PolicyAssignment, ScenarioConfig, ScenarioParams,
};
use mcaloha_core::{ConstraintVector, SingleChannelStrategy, StrategyProfile, UtilityMatrix, TARGET_IDLE};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= limit;
    let pass = out.pass && in_time;
    println!(
        "[{}] criterion {id:>2} {name}: {} ({:.2}s of {}s{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", too slow" }
    );
    pass
}

fn rayleigh(n: usize, k: usize, snr_db: f64, seed: u64) -> UtilityMatrix {
    generate_rayleigh_utilities(n, k, &vec![snr_db; k], 1e7, seed).unwrap().utilities
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn potential_sign_law() -> Outcome {
    let mut instances = 0;
    let mut deviations = 0;
    let mut worst_rel = 0.0f64;
    let mut sign_failures = 0;
    for i in 0..1200u64 {
        let mut rng = seed::rng(seed::derive(1, &[i]));
        let n = rng.random_range(2..=10);
        let k = rng.random_range(2..=5);
        let u = rayleigh(n, k, 10.0, rng.random());
        let caps = ConstraintVector::new((0..n).map(|_| rng.random_range(0.01..0.95)).collect()).unwrap();
        let channels: Vec<usize> = (0..n).map(|_| rng.random_range(1..=k)).collect();
        let profile = StrategyProfile::from_parts(&channels, caps.caps()).unwrap();
        let phi0 = potential(&u, &profile, &caps).unwrap().value;
        for user in 0..n {
            let r0 = user_rate(&u, &profile, user).unwrap();
            let psi0 = psi(&u, &profile, user, channels[user], &caps).unwrap();
            for ch in (1..=k).filter(|&c| c != channels[user]) {
                let mut moved = profile.clone();
                moved.strategies[user].chosen_channel = ch;
                let dr = user_rate(&u, &moved, user).unwrap() - r0;
                let dphi = potential(&u, &moved, &caps).unwrap().value - phi0;
                let scaled = caps.log_weight(user) * (psi(&u, &profile, user, ch, &caps).unwrap() - psi0);
                let rel = (dphi - scaled).abs() / dphi.abs().max(scaled.abs()).max(f64::MIN_POSITIVE);
                worst_rel = worst_rel.max(rel);
                if sign(dr) != sign(dphi) {
                    sign_failures += 1;
                }
                deviations += 1;
            }
        }
        instances += 1;
    }
    Outcome {
        pass: sign_failures == 0 && worst_rel <= 1e-9,
        detail: format!(
            "{instances} instances, {deviations} deviations, {sign_failures} sign mismatches, worst relative gap {worst_rel:.1e}"
        ),
    }
}

fn finite_convergence() -> Outcome {
    let (n, k) = (20, 10);
    let caps = ConstraintVector::uniform(n, k as f64 / n as f64).unwrap();
    let mut ok = 0;
    let mut max_sweeps = 0;
    for i in 0..200u64 {
        let u = rayleigh(n, k, 10.0, seed::derive(2, &[i]));
        let start = greedy_profile(&u, &caps).unwrap();
        let (fin, trace) = run_sequential_br(&u, &caps, &start, UpdateSchedule::RoundRobin, 50).unwrap();
        let monotone = trace.iterations.iter().all(|s| s.potential_after >= s.potential_before);
        if trace.converged && monotone && is_nep(&u, &fin, &caps).unwrap() {
            ok += 1;
        }
        max_sweeps = max_sweeps.max(trace.sweeps);
    }
    Outcome {
        pass: ok == 200,
        detail: format!("{ok}/200 reached an equilibrium with non-decreasing potential, at most {max_sweeps} sweeps"),
    }
}

/// Expected successes per slot for `n` equal-utility users at `K/N`, measured
/// over `slots` slots. Balanced: `N/K` users per channel. Random pick: each
/// block of slots draws a fresh uniform channel per user.
fn measured_sum_rate(n: usize, k: usize, balanced: bool, slots: usize, seed: u64) -> f64 {
    let env = ChannelEnvironment {
        utilities: UtilityMatrix::uniform(n, k, 1.0).unwrap(),
        snr_linear: vec![1.0; k],
        bandwidth_hz: 1.0,
        rng_seed: 0,
    };
    let p = k as f64 / n as f64;
    let block = if balanced { slots } else { 1000 };
    let mut rng = seed::rng(seed);
    let mut wins = 0;
    for b in 0..slots / block {
        let channels: Vec<usize> =
            (0..n).map(|i| if balanced { i % k + 1 } else { rng.random_range(1..=k) }).collect();
        let profile = StrategyProfile::from_parts(&channels, &vec![p; n]).unwrap();
        let log = run_slots(&env, &profile, block, seed::derive(seed, &[b as u64])).unwrap();
        wins += (0..n).map(|i| log.successes(i)).sum::<usize>();
    }
    wins as f64 / slots as f64
}

fn gain_reproduction() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, k, anchor) in [(10usize, 10usize, 2.58117), (30, 10, 1.18797)] {
        let g = gain_ratio(n as f64, k as f64).unwrap();
        let mc = measured_sum_rate(n, k, true, 1_000_000, 31) / measured_sum_rate(n, k, false, 1_000_000, 32);
        let ok = (g - anchor).abs() <= 1e-4 && (mc / g - 1.0).abs() <= 0.05;
        pass &= ok;
        parts.push(format!("N={n},K={k}: analytic {g:.5}, simulated {mc:.4}"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn equal_share_oracle() -> Outcome {
    // Sum log-rate of users sharing one channel with unit utility.
    let sum_log_rate = |x: &[f64]| {
        let p = StrategyProfile::new(x.iter().map(|&a| SingleChannelStrategy::new(1, a).unwrap()).collect());
        let u = UtilityMatrix::uniform(x.len(), 1, 1.0).unwrap();
        rate_report(&u, &p).unwrap().sum_log_rate
    };
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [2usize, 3] {
        let mut best = (f64::NEG_INFINITY, vec![]);
        let mut idx = vec![0usize; m];
        loop {
            let x: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            let s = sum_log_rate(&x);
            if s > best.0 {
                best = (s, x);
            }
            let mut d = 0;
            while d < m {
                idx[d] += 1;
                if idx[d] < grid.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == m {
                break;
            }
        }
        let share = optimal_equal_share(m).unwrap();
        let within = best.1.iter().all(|&x| (x - share).abs() <= 0.01 + 1e-12);
        let at_share = sum_log_rate(&vec![share; m]);
        pass &= within && at_share >= best.0 - 1e-12;
        parts.push(format!("N(k)={m}: grid argmax {:?}, S_k={:.5} vs {:.5} at 1/N(k)", best.1, best.0, at_share));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn scenario(n: usize, k: usize, policy: Policy, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_users: n,
        n_channels: k,
        snr_db: vec![10.0],
        bandwidth_hz: 1e7,
        utilities: None,
        policy: PolicyAssignment::Uniform(policy),
        caps: CapModel::Fixed,
        params: ScenarioParams::default(),
        perfect_monitoring: false,
        seed,
        output_dir: None,
    }
}

fn sequential_throughput() -> Outcome {
    let mut ok = 0;
    let mut converged = 0;
    let mut worst = 0.0f64;
    for s in 1..=20u64 {
        let trace = run_scenario(&scenario(30, 1, Policy::SequentialAdaptive, s)).unwrap();
        let gap = (trace.last().throughput - TARGET_IDLE).abs();
        worst = worst.max(gap);
        if trace.converged {
            converged += 1;
        }
        if trace.converged && trace.records.len() <= 2001 && gap <= 0.02 {
            ok += 1;
        }
    }
    Outcome {
        pass: ok >= 18,
        detail: format!("{ok}/20 seeds stopped within 2000 rounds at |S − e⁻¹| ≤ 0.02 ({converged} stopped, worst gap {worst:.4})"),
    }
}

fn population_estimate() -> Outcome {
    let p0 = 0.01;
    let mut exact = true;
    let mut worst = 0.0f64;
    for n in [10usize, 30, 100] {
        for k in [1usize, 3, 10] {
            let channels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
            let profile = StrategyProfile::from_parts(&channels, &vec![p0; n]).unwrap();
            for observer in [0, n - 1] {
                let est = parallel_adaptive_init(&LoadObservation::exact(&profile, observer, k), p0, k, 1e-3).unwrap();
                let err = (est.n_hat - n as f64).abs();
                worst = worst.max(err);
                exact &= err <= 1e-9 * n as f64;
            }
        }
    }

    let windowed = |p0: f64| {
        let (n, k) = (30usize, 3usize);
        let env = ChannelEnvironment {
            utilities: UtilityMatrix::uniform(n, k, 1.0).unwrap(),
            snr_linear: vec![1.0; k],
            bandwidth_hz: 1.0,
            rng_seed: 0,
        };
        let channels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
        let profile = StrategyProfile::from_parts(&channels, &vec![p0; n]).unwrap();
        (0..100u64)
            .filter(|&s| {
                let log = run_slots(&env, &profile, 100, seed::derive(6, &[s])).unwrap();
                let obs = estimate_loads(&log, 0, 100, profile.get(0)).unwrap();
                parallel_adaptive_init(&obs, p0, k, 1e-3).is_ok_and(|e| (e.n_hat - n as f64).abs() <= 0.15 * n as f64)
            })
            .count()
    };
    let hits = windowed(0.1);
    let hits_default = windowed(p0);
    Outcome {
        pass: exact && hits >= 90,
        detail: format!(
            "exact monitoring worst |N̂ − N| = {worst:.1e}; window 100 at p0 = 0.1: {hits}/100 seeds within 15% (at p0 = 0.01: {hits_default}/100)"
        ),
    }
}

fn log_rate_bound() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut equality_gap = 0.0f64;
    for i in 0..100u64 {
        let mut rng = seed::rng(seed::derive(7, &[i]));
        let k = rng.random_range(2..=3);
        let n = k * rng.random_range(2..=30 / k);
        let u = rayleigh(n, k, 10.0, rng.random());
        let caps = ConstraintVector::uniform(n, k as f64 / n as f64).unwrap();
        let u_star: f64 = (0..n).map(|m| u.best_rate(m).ln()).sum();
        let bound = sum_log_rate_upper_bound(u_star, n, k).unwrap();
        let mut profile = greedy_profile(&u, &caps).unwrap();
        let (_, trace) = run_sequential_br(&u, &caps, &profile, UpdateSchedule::RoundRobin, 50).unwrap();
        let mut profiles = vec![profile.clone()];
        for step in trace.iterations.iter().filter(|s| s.switched()) {
            profile.strategies[step.user].chosen_channel = step.new_channel;
            profiles.push(profile.clone());
        }
        for p in &profiles {
            checked += 1;
            if rate_report(&u, p).unwrap().sum_log_rate > bound + 1e-9 * bound.abs().max(1.0) {
                violations += 1;
            }
        }

        // Each user's best channel is its slot in a balanced assignment.
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|m| (1..=k).map(|ch| if ch == m % k + 1 { 2.0 + m as f64 } else { 1.0 }).collect())
            .collect();
        let balanced_u = UtilityMatrix::from_rows(&rows).unwrap();
        let balanced = greedy_profile(&balanced_u, &caps).unwrap();
        let star: f64 = (0..n).map(|m| balanced_u.best_rate(m).ln()).sum();
        let gap = (rate_report(&balanced_u, &balanced).unwrap().sum_log_rate
            - sum_log_rate_upper_bound(star, n, k).unwrap())
        .abs();
        equality_gap = equality_gap.max(gap);
    }
    Outcome {
        pass: violations == 0 && equality_gap <= 1e-9,
        detail: format!("{checked} dynamics profiles, {violations} above the bound; balanced profile gap {equality_gap:.1e}"),
    }
}

/// Grid oracle: user 1 takes the largest α_1 its box and the others'
/// demands allow, so only α_2..α_N are searched.
fn alpha_oracle(targets: &[f64], k: usize, p_max: f64) -> Vec<f64> {
    let n = targets.len() + 1;
    let nf = n as f64;
    let c = 1.0 / (nf * k as f64);
    let upper = nf * p_max;
    let value = |rest: &[f64]| -> Option<(f64, f64)> {
        let mut a1 = upper;
        for (j, &t) in targets.iter().enumerate() {
            let others: f64 = rest.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &a)| 1.0 - c * a).product();
            if rest[j] <= 0.0 {
                return None;
            }
            a1 = a1.min((1.0 - t * nf / (rest[j] * others)) / c);
        }
        if a1 < 0.0 {
            return None;
        }
        Some((a1 / nf * rest.iter().map(|&a| 1.0 - c * a).product::<f64>(), a1))
    };
    let search = |lo: Vec<f64>, hi: Vec<f64>, step: f64| -> Vec<f64> {
        let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| ((h - l) / step).round() as usize + 1).collect();
        let mut idx = vec![0usize; n - 1];
        let mut best = (f64::NEG_INFINITY, vec![]);
        loop {
            let rest: Vec<f64> = idx.iter().zip(&lo).map(|(&i, &l)| (l + i as f64 * step).min(upper)).collect();
            if let Some((obj, a1)) = value(&rest) {
                if obj > best.0 {
                    let mut a = vec![a1];
                    a.extend(&rest);
                    best = (obj, a);
                }
            }
            let mut d = 0;
            while d < n - 1 {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n - 1 {
                break;
            }
        }
        best.1
    };
    let coarse_step = if n == 2 { 1e-4 } else { 1e-3 };
    let mut best = search(vec![0.0; n - 1], vec![upper; n - 1], coarse_step);
    // The optimum sits on a flat ridge, so the fine window follows the argmax
    // until it stops moving.
    for _ in 0..100 {
        let lo: Vec<f64> = best[1..].iter().map(|&a| (a - 2.0 * coarse_step).max(0.0)).collect();
        let hi: Vec<f64> = best[1..].iter().map(|&a| (a + 2.0 * coarse_step).min(upper)).collect();
        let next = search(lo, hi, 1e-5);
        let moved = next[1..].iter().zip(&best[1..]).any(|(a, b)| (a - b).abs() > 1e-4);
        best = next;
        if !moved {
            break;
        }
    }
    best
}

fn alpha_program() -> Outcome {
    let mut worst = 0.0f64;
    let mut all_binding = true;
    let example = solve_alpha_allocation(&[1.0, 1.0], &[0.125], 1, 0.99).unwrap();
    let oracle = alpha_oracle(&[0.125], 1, 0.99);
    let example_ok = (example.alpha[0] - 1.29289).abs() <= 1e-3 && (example.alpha[1] - 0.70711).abs() <= 1e-3;
    for (a, b) in example.alpha.iter().zip(&oracle) {
        worst = worst.max((a - b).abs());
    }
    all_binding &= example.binding.iter().all(|&b| b);

    let (n, k, p_max) = (3usize, 1usize, 0.99);
    let c = 1.0 / (n * k) as f64;
    for i in 0..20u64 {
        let mut rng = seed::rng(seed::derive(8, &[i]));
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..5.0)).collect();
        let interior: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.5)).collect();
        let demands: Vec<f64> = (1..n)
            .map(|m| {
                let others: f64 = (0..n).filter(|&j| j != m).map(|j| 1.0 - c * interior[j]).product();
                0.5 * e[m] * interior[m] / n as f64 * others
            })
            .collect();
        let targets: Vec<f64> = demands.iter().zip(&e[1..]).map(|(d, e)| d / e).collect();
        let got = solve_alpha_allocation(&e, &demands, k, p_max).unwrap();
        let want = alpha_oracle(&targets, k, p_max);
        for (a, b) in got.alpha.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        all_binding &= got.binding.iter().all(|&b| b);
    }
    Outcome {
        pass: example_ok && worst <= 1e-3 && all_binding,
        detail: format!(
            "example α = ({:.5}, {:.5}); worst coordinate gap to grid over 21 instances {worst:.1e}; all demand constraints binding: {all_binding}",
            example.alpha[0], example.alpha[1]
        ),
    }
}

fn bundled(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn hysteresis_comparison() -> Outcome {
    let mut plan = sweep::load_plan(&bundled("fig5_delta_r.toml")).unwrap();
    plan.values = vec![
        sweep::AxisValue::Hysteresis(Hysteresis(0.1)),
        sweep::AxisValue::Hysteresis(Hysteresis::NEVER),
    ];
    plan.replicates = 20;
    let (summary, _) = sweep::execute(&plan).unwrap();
    let get = |value: &str, metric: &str| {
        summary.iter().find(|r| r.value == value && r.metric == metric).map(|r| r.mean).unwrap()
    };
    let inferior = |value: &str| get(value, "mean_occupancy_k3") + get(value, "mean_occupancy_k4");
    let (rate, rate_inf) = (get("0.1", "mean_rate"), get("inf", "mean_rate"));
    let (log, log_inf) = (get("0.1", "mean_log_rate"), get("inf", "mean_log_rate"));
    let (occ, occ_inf) = (inferior("0.1"), inferior("inf"));
    Outcome {
        pass: rate > rate_inf && log > log_inf && occ > 0.0 && occ_inf <= 0.5,
        detail: format!(
            "mean rate {rate:.4e} vs {rate_inf:.4e}, mean log-rate {log:.4} vs {log_inf:.4}, users on channels 3-4 {occ:.3} vs {occ_inf:.3}"
        ),
    }
}

fn byte_identical_runs() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut files = 0;
    for cfg in ["fig3_sequential.toml", "fig3_parallel.toml"] {
        let mut outs = Vec::new();
        for attempt in 0..2 {
            let out = dir.path().join(format!("{cfg}-{attempt}"));
            let status = Command::new(env!("CARGO_BIN_EXE_mcaloha"))
                .args(["simulate", "--config"])
                .arg(bundled(cfg))
                .args(["--seed", "11", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            identical &= status.status.success();
            outs.push(out);
        }
        for f in ["rounds.csv", "users.csv", "channels.csv", "summary.json"] {
            let a = std::fs::read(outs[0].join(f)).unwrap_or_default();
            let b = std::fs::read(outs[1].join(f)).unwrap_or_default();
            identical &= !a.is_empty() && a == b;
            files += 1;
        }
    }
    Outcome {
        pass: identical,
        detail: format!("{files} output files compared across repeated runs, identical: {identical}"),
    }
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        check(1, "ordinal potential sign law", s(10), potential_sign_law),
        check(2, "finite-time convergence", s(30), finite_convergence),
        check(3, "gain over TG", s(60), gain_reproduction),
        check(4, "equal-share maximizer", s(20), equal_share_oracle),
        check(5, "sequential adaptive throughput", s(60), sequential_throughput),
        check(6, "population estimate", s(30), population_estimate),
        check(7, "log-rate upper bound", s(30), log_rate_bound),
        check(8, "allocation program vs grid", s(30), alpha_program),
        check(9, "hysteresis comparison", s(120), hysteresis_comparison),
        check(10, "determinism", s(60), byte_identical_runs),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
