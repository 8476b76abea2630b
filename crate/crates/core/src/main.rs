use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use threshold_rank::binseq::msf;
use threshold_rank::harness::{
    loglog_slope, run_oracle_checks, run_sweep, run_tail_experiment, write_csv, ExperimentConfig,
    OracleBudget,
};
use threshold_rank::model::sample_instance;
use threshold_rank::tbs::Tbs;
use threshold_rank::theory::{
    divergence_beta_closed_form, predict_eb2, predict_msf_linear, predict_msf_power, predict_p_odd,
    RegimeSpec,
};
use threshold_rank::{BetaParams, Error, Result};

#[derive(Parser)]
#[command(name = "threshold-rank", version, about = "Threshold-model ranking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run TBS over a grid of item counts and write one CSV row per count.
    Sweep(SweepArgs),
    /// Print the divergence and the predicted MSF and bin-size moments.
    Predict(PredictArgs),
    /// Estimate the survival of the users-to-total-order count.
    Tail(TailArgs),
    /// Run the self-check suites; exits with status 2 on any mismatch.
    Oracle(OracleArgs),
    /// Run TBS once and print every rating and decision.
    Trace(TraceArgs),
}

#[derive(Args, Clone, Copy)]
struct Densities {
    /// Score density shape a.
    #[arg(long, default_value_t = 1.0)]
    ax: f64,
    /// Score density shape b.
    #[arg(long, default_value_t = 1.0)]
    bx: f64,
    /// Threshold density shape a.
    #[arg(long, default_value_t = 1.0)]
    ay: f64,
    /// Threshold density shape b.
    #[arg(long, default_value_t = 1.0)]
    by: f64,
}

impl Densities {
    fn params(&self) -> Result<(BetaParams, BetaParams)> {
        Ok((BetaParams::new(self.ax, self.bx)?, BetaParams::new(self.ay, self.by)?))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeKind {
    Linear,
    Power,
}

#[derive(Args, Clone, Copy)]
struct RegimeArgs {
    #[arg(long, value_enum, default_value = "power")]
    regime: RegimeKind,
    /// Users per item^gamma.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Exponent of the power regime (ignored for linear).
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
}

impl RegimeArgs {
    fn spec(&self) -> Result<RegimeSpec> {
        match self.regime {
            RegimeKind::Linear => RegimeSpec::linear(self.r),
            RegimeKind::Power => RegimeSpec::new(self.r, self.gamma),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    regime: RegimeArgs,
    #[command(flatten)]
    densities: Densities,
    /// Comma-separated item counts.
    #[arg(long, value_delimiter = ',', required = true)]
    n_grid: Vec<usize>,
    /// Inclusive seed range, `lo..hi`.
    #[arg(long, default_value = "1..100", value_parser = parse_seed_range)]
    seeds: (u64, u64),
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    regime: RegimeArgs,
    #[command(flatten)]
    densities: Densities,
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct TailArgs {
    #[command(flatten)]
    densities: Densities,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    probes: Vec<u64>,
    #[arg(long, default_value_t = 100_000)]
    runs: u64,
    /// Users drawn before a run is censored.
    #[arg(long, default_value_t = 1000)]
    cap: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 500)]
    msf_cases: u64,
    #[arg(long, default_value_t = 200)]
    tbs_instances: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    densities: Densities,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_seed_range(s: &str) -> std::result::Result<(u64, u64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
    let lo = lo.trim().parse::<u64>().map_err(|e| format!("bad lower seed: {e}"))?;
    let hi = hi
        .trim()
        .trim_start_matches('=')
        .parse::<u64>()
        .map_err(|e| format!("bad upper seed: {e}"))?;
    if lo > hi {
        return Err(format!("empty seed range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (fx, fy) = args.densities.params()?;
    let config = ExperimentConfig {
        regime: args.regime.spec()?,
        n_grid: args.n_grid,
        fx,
        fy,
        seeds: args.seeds.0..=args.seeds.1,
        output_path: args.out.clone(),
    };
    let rows = run_sweep(&config)?;
    if args.out.is_none() {
        write_csv(&rows, &mut io::stdout().lock())?;
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let (fx, fy) = args.densities.params()?;
    let spec = args.regime.spec()?;
    let divergence = divergence_beta_closed_form(fx, fy)?;
    let m = spec.users_for(args.n);
    let mut out = io::stdout().lock();
    writeln!(out, "divergence {divergence}")?;
    writeln!(out, "m {m}")?;
    if spec.is_linear() {
        let p = predict_msf_linear(args.n, spec.r(), divergence);
        writeln!(out, "msf_center {}", p.center)?;
        writeln!(out, "msf_range {} {}", p.lower(), p.upper())?;
    } else {
        writeln!(out, "msf {}", predict_msf_power(args.n, spec, divergence)?)?;
    }
    writeln!(out, "eb2 {}", predict_eb2(args.n, m, divergence))?;
    if m > 0 {
        writeln!(out, "p_odd {}", predict_p_odd(args.n, m, divergence)?)?;
    }
    Ok(())
}

fn tail(args: TailArgs) -> Result<()> {
    let (fx, fy) = args.densities.params()?;
    let points = run_tail_experiment(args.n, fx, fy, &args.probes, args.runs, args.cap, args.seed)?;
    let mut out = io::stdout().lock();
    writeln!(out, "m,survival,std_err")?;
    for p in &points {
        writeln!(out, "{},{},{}", p.m, p.survival, p.std_err)?;
    }
    if points.len() >= 2 {
        writeln!(out, "# log-log slope {}", loglog_slope(&points))?;
    }
    Ok(())
}

fn trace(args: TraceArgs) -> Result<()> {
    let (fx, fy) = args.densities.params()?;
    let instance = sample_instance(args.n, args.m, fx, fy, args.seed)?;
    let (bins, ledger, events) = Tbs::new(&instance).traced().run_traced();
    let mut out = io::stdout().lock();
    for e in &events {
        writeln!(out, "{e}")?;
    }
    let c = ledger.counts();
    writeln!(out, "bins {bins}")?;
    writeln!(
        out,
        "queries total={} search={} isolate={} split={}",
        c.total(),
        c.search,
        c.isolate,
        c.split
    )?;
    writeln!(out, "msf {}", msf(&bins))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Predict(a) => predict(a),
        Command::Tail(a) => tail(a),
        Command::Trace(a) => trace(a),
        Command::Oracle(a) => {
            let report = run_oracle_checks(OracleBudget {
                msf_cases: a.msf_cases,
                tbs_instances: a.tbs_instances,
                seed: a.seed,
            });
            print!("{report}");
            if !report.passed() {
                return ExitCode::from(2);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
