use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcaloha_cli::analytic::{self, parse_int_list};
use mcaloha_cli::run::{load_scenario, resolve_out_dir, simulate};
use mcaloha_cli::sweep::{self, Axis, AxisValue};
use mcaloha_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "mcaloha", version, about = "Multichannel ALOHA analytics and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print closed-form tables as CSV.
    Analytic(AnalyticArgs),
    /// Run one scenario and write its trace.
    Simulate(RunArgs),
    /// Run a scenario across an axis with replicates.
    Sweep(SweepArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("table").required(true).args(["rho", "bench", "bound", "delta_r_star"])))]
struct AnalyticArgs {
    /// Best-response over TG gain for N = r·K, r from --n-over-k.
    #[arg(long)]
    rho: bool,
    /// Per-user and sum rates of both schemes for every N in --n.
    #[arg(long)]
    bench: bool,
    /// Upper bound on the sum of log-rates.
    #[arg(long)]
    bound: bool,
    /// Hysteresis above which sequential users never switch, for every N in --n.
    #[arg(long = "delta-r-star")]
    delta_r_star: bool,
    #[arg(long)]
    k: Option<usize>,
    /// Integer list: `a..b`, `a,b,c` or `a`.
    #[arg(long = "n-over-k", default_value = "1..10")]
    n_over_k: String,
    /// Integer list: `a..b`, `a,b,c` or `a`.
    #[arg(long)]
    n: Option<String>,
    /// Sum over users of ln max_k u_n(k).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ustar: f64,
    #[arg(long = "mean-utility", default_value_t = 1.0)]
    mean_utility: f64,
    #[arg(long = "u-max")]
    u_max: Option<f64>,
    #[arg(long = "u-min")]
    u_min: Option<f64>,
    #[arg(long = "eps-p", default_value_t = 1e-3)]
    eps_p: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir, then $MCALOHA_OUT_DIR, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "perfect-monitoring")]
    perfect_monitoring: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Overrides the [sweep] axis: n_users, delta_r or snr_db.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated axis values; SNR lists use `;` between channels.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
}

fn need<T>(x: Option<T>, flag: &str) -> CliResult<T> {
    x.ok_or_else(|| CliError::Usage(format!("{flag} is required for this table")))
}

fn analytic(a: AnalyticArgs) -> CliResult<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if a.rho {
        analytic::rho_table(&mut out, need(a.k, "--k")?, &parse_int_list(&a.n_over_k)?)?;
    } else if a.bench {
        let ns = parse_int_list(&need(a.n, "--n")?)?;
        analytic::bench_table(&mut out, &ns, need(a.k, "--k")?, a.mean_utility)?;
    } else if a.bound {
        let ns = parse_int_list(&need(a.n, "--n")?)?;
        if ns.len() != 1 {
            return Err(CliError::Usage("--bound takes a single --n".into()));
        }
        analytic::bound_table(&mut out, ns[0], need(a.k, "--k")?, a.ustar)?;
    } else {
        let ns = parse_int_list(&need(a.n, "--n")?)?;
        analytic::delta_r_star_table(&mut out, need(a.u_max, "--u-max")?, need(a.u_min, "--u-min")?, a.eps_p, &ns)?;
    }
    out.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn run_simulate(a: RunArgs) -> CliResult<()> {
    let mut cfg = load_scenario(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.perfect_monitoring {
        cfg.perfect_monitoring = true;
    }
    let dir = resolve_out_dir(a.out.as_deref(), &cfg);
    let trace = simulate(&cfg, &dir)?;
    let last = trace.last();
    println!(
        "{} rounds, converged={}, throughput={:.5}, mean_rate={:.6e}; wrote {}",
        trace.records.len(),
        trace.converged,
        last.throughput,
        last.mean_rate,
        dir.display()
    );
    Ok(())
}

fn run_sweep(a: SweepArgs) -> CliResult<()> {
    let mut plan = sweep::load_plan(&a.run.config)?;
    if let Some(s) = a.run.seed {
        plan.base.seed = s;
    }
    if a.run.perfect_monitoring {
        plan.base.perfect_monitoring = true;
    }
    if let Some(axis) = &a.axis {
        plan.axis = Axis::parse(axis)?;
        if a.values.is_none() {
            return Err(CliError::Usage("--axis needs --values".into()));
        }
    }
    if let Some(values) = &a.values {
        plan.values = values
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| AxisValue::parse(plan.axis, s))
            .collect::<CliResult<_>>()?;
    }
    if let Some(r) = a.replicates {
        plan.replicates = r;
    }
    let dir = resolve_out_dir(a.run.out.as_deref(), &plan.base);
    let (summary, runs) = sweep::execute(&plan)?;
    sweep::write_outputs(&dir, plan.axis, &summary, &runs)?;
    println!("{} runs over {} values; wrote {}", runs.len(), plan.values.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analytic(a) => analytic(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcaloha: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
