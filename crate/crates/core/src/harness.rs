//! Seeded Monte-Carlo experiments: regime sweeps with confidence intervals,
//! the survival curve of the users-to-total-order count, and the oracle
//! self-check suites.
//!
//! Every run owns its random state, derived from its own seed. Runs are
//! fanned out with rayon and collected back in seed order before any
//! aggregation, so results do not depend on the thread count.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binseq::{brute_force_msf, ground_truth_partition, msf, msf_of_bin, BinSequence};
use crate::distributions::BetaParams;
use crate::error::{Error, Result};
use crate::model::{sample_instance, sample_users_to_total_order, Instance, QueryCounts};
use crate::tbs::run_tbs;
use crate::theory::{divergence_beta_closed_form, divergence_quadrature, predict_msf, RegimeSpec};

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

pub const CSV_HEADER: &str =
    "n,m,seeds,mean_msf,ci95,mean_q_total,mean_q_search,mean_q_iso,mean_q_split,predicted_msf";

/// Parameters of one sweep.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub regime: RegimeSpec,
    pub n_grid: Vec<usize>,
    pub fx: BetaParams,
    pub fy: BetaParams,
    /// Each seed in the range drives one run per grid point.
    pub seeds: RangeInclusive<u64>,
    /// Where to write the CSV, if anywhere.
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("item grid is empty".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n == 0) {
            return Err(Error::Config(format!("grid point n = {n} is not positive")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config(format!(
                "seed range {}..{} is empty",
                self.seeds.start(),
                self.seeds.end()
            )));
        }
        for &n in &self.n_grid {
            if self.regime.users_for(n) == 0 {
                return Err(Error::Config(format!("regime gives no users at n = {n}")));
            }
        }
        Ok(())
    }
}

/// Outcome of a single seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunResult {
    pub seed: u64,
    pub msf: u64,
    pub queries: QueryCounts,
}

/// Samples the instance for `seed`, runs TBS and scores the result.
pub fn run_once(n: usize, m: usize, fx: BetaParams, fy: BetaParams, seed: u64) -> Result<RunResult> {
    let instance = sample_instance(n, m, fx, fy, seed)?;
    let (bins, ledger) = run_tbs(&instance);
    Ok(RunResult {
        seed,
        msf: msf(&bins),
        queries: ledger.counts(),
    })
}

/// Aggregated results at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub m: u64,
    pub seeds_used: u64,
    pub mean_msf: f64,
    /// `1.96 · sd / √s`; reported as 0 for a single seed.
    pub ci_half_width: f64,
    pub mean_q_total: f64,
    pub mean_q_search: f64,
    pub mean_q_iso: f64,
    pub mean_q_split: f64,
    pub predicted_msf: f64,
}

/// Sample mean and 95% half-width of `values`.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let s = values.len() as f64;
    let mean = values.iter().sum::<f64>() / s;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
    (mean, Z95 * var.sqrt() / s.sqrt())
}

fn mean_of(results: &[RunResult], f: impl Fn(&RunResult) -> u64) -> f64 {
    results.iter().map(|r| f(r) as f64).sum::<f64>() / results.len() as f64
}

/// Aggregates per-seed results (already in seed order) into a row.
pub fn aggregate(n: usize, m: u64, results: &[RunResult], predicted_msf: f64) -> SweepRow {
    let msfs: Vec<f64> = results.iter().map(|r| r.msf as f64).collect();
    let (mean_msf, ci_half_width) = mean_ci(&msfs);
    SweepRow {
        n,
        m,
        seeds_used: results.len() as u64,
        mean_msf,
        ci_half_width,
        mean_q_total: mean_of(results, |r| r.queries.total()),
        mean_q_search: mean_of(results, |r| r.queries.search),
        mean_q_iso: mean_of(results, |r| r.queries.isolate),
        mean_q_split: mean_of(results, |r| r.queries.split),
        predicted_msf,
    }
}

/// Runs every seed at every grid point and aggregates per grid point. The
/// prediction uses the closed-form divergence (infinite when the divergence
/// integral diverges). Writes the CSV when `output_path` is set.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let divergence = divergence_beta_closed_form(config.fx, config.fy).unwrap_or(f64::INFINITY);
    let seeds: Vec<u64> = config.seeds.clone().collect();
    let mut rows = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let m = config.regime.users_for(n);
        let results = seeds
            .par_iter()
            .map(|&seed| run_once(n, m as usize, config.fx, config.fy, seed))
            .collect::<Result<Vec<_>>>()?;
        rows.push(aggregate(n, m, &results, predict_msf(n, config.regime, divergence)));
    }
    if let Some(path) = &config.output_path {
        let mut out = BufWriter::new(File::create(path)?);
        write_csv(&rows, &mut out)?;
        out.flush()?;
    }
    Ok(rows)
}

/// Writes the header and one line per row.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.seeds_used,
            r.mean_msf,
            r.ci_half_width,
            r.mean_q_total,
            r.mean_q_search,
            r.mean_q_iso,
            r.mean_q_split,
            r.predicted_msf
        )?;
    }
    Ok(())
}

/// Empirical survival `P(M > m)` at one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub m: u64,
    pub survival: f64,
    /// Binomial standard error of `survival`.
    pub std_err: f64,
}

/// Repeats [`sample_users_to_total_order`] `runs` times and estimates the
/// survival function at each probe. Censored runs survive every probe.
///
/// Run `i` uses a ChaCha8 generator keyed by `seed` on stream id `i`.
pub fn run_tail_experiment(
    n: usize,
    fx: BetaParams,
    fy: BetaParams,
    probes: &[u64],
    runs: u64,
    cap: u64,
    seed: u64,
) -> Result<Vec<TailPoint>> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least two items, got {n}")));
    }
    if runs == 0 {
        return Err(Error::Domain("need at least one run".into()));
    }
    if let Some(&max) = probes.iter().max() {
        if cap < max {
            return Err(Error::Domain(format!("cap {cap} is below the largest probe {max}")));
        }
    }
    let draws = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run);
            sample_users_to_total_order(n, fx, fy, &mut rng, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(probes
        .iter()
        .map(|&m| {
            let survivors = draws.iter().filter(|d| d.survives(m)).count();
            let p = survivors as f64 / runs as f64;
            TailPoint {
                m,
                survival: p,
                std_err: (p * (1.0 - p) / runs as f64).sqrt(),
            }
        })
        .collect())
}

/// Least-squares slope of `ln(survival)` against `ln(m)`.
pub fn loglog_slope(points: &[TailPoint]) -> f64 {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.survival > 0.0)
        .map(|p| ((p.m as f64).ln(), p.survival.ln()))
        .collect();
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// A random ordered partition of `1..=max_items` items with bins of at most
/// `max_bin` items.
pub fn random_bin_sequence<R: Rng + ?Sized>(rng: &mut R, max_items: usize, max_bin: usize) -> BinSequence {
    let n = rng.random_range(1..=max_items);
    let mut items: Vec<usize> = (0..n).collect();
    items.shuffle(rng);
    let mut bins = Vec::new();
    let mut rest = &items[..];
    while !rest.is_empty() {
        let size = rng.random_range(1..=max_bin.min(rest.len()));
        bins.push(rest[..size].to_vec());
        rest = &rest[size..];
    }
    BinSequence::from_bins(bins).expect("cuts of a permutation partition the items")
}

/// Beta(2, 3) scores against Beta(2, 2) thresholds.
pub fn mismatch_params() -> (BetaParams, BetaParams) {
    (
        BetaParams::new(2.0, 3.0).expect("valid shapes"),
        BetaParams::new(2.0, 2.0).expect("valid shapes"),
    )
}

/// Instance for TBS case `seed`: `n` in `1..=64`, `m` in `1..=256`, uniform
/// or mismatched densities, all drawn from the seed.
pub fn random_tbs_case(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=64);
    let m = rng.random_range(1..=256);
    let (fx, fy) = if rng.random_bool(0.5) {
        (BetaParams::uniform(), BetaParams::uniform())
    } else {
        mismatch_params()
    };
    sample_instance(n, m, fx, fy, seed).expect("n >= 1")
}

/// Valid Beta pairs on which closed-form and quadrature divergence are
/// compared: shapes from {1, 1.5, 2, 3} with a bounded integrand.
pub fn divergence_grid() -> Vec<(BetaParams, BetaParams)> {
    let shapes = [1.0, 1.5, 2.0, 3.0];
    let params: Vec<BetaParams> = shapes
        .iter()
        .flat_map(|&a| shapes.iter().map(move |&b| BetaParams::new(a, b).expect("valid")))
        .collect();
    let mut pairs = Vec::new();
    for &fx in &params {
        for &fy in &params {
            if 2.0 * fx.a() - fy.a() >= 1.0 && 2.0 * fx.b() - fy.b() >= 1.0 {
                pairs.push((fx, fy));
            }
        }
    }
    pairs
}

/// Sizes of the self-check suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub msf_cases: u64,
    pub tbs_instances: u64,
    /// First seed; case `i` uses `seed + i`.
    pub seed: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            msf_cases: 500,
            tbs_instances: 200,
            seed: 1,
        }
    }
}

/// One mismatch, with what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFailure {
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checked: u64,
    pub failures: Vec<OracleFailure>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub suites: Vec<SuiteReport>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.suites {
            let status = if s.passed() { "PASS" } else { "FAIL" };
            writeln!(f, "{status} {}: {} checked, {} failed", s.name, s.checked, s.failures.len())?;
            for fail in &s.failures {
                writeln!(f, "  seed {}: {}", fail.seed, fail.detail)?;
            }
        }
        Ok(())
    }
}

/// Compares `msf_fn` against the exhaustive oracle on random bin sequences
/// of at most 8 items and bins of at most 6.
pub fn check_msf_equivalence<F>(cases: u64, seed: u64, msf_fn: F) -> SuiteReport
where
    F: Fn(&BinSequence) -> u64 + Sync,
{
    let failures = (0..cases)
        .into_par_iter()
        .filter_map(|i| {
            let case_seed = seed + i;
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let seq = random_bin_sequence(&mut rng, 8, 6);
            let want = brute_force_msf(&seq).expect("bins of at most 6 items");
            let got = msf_fn(&seq);
            (got != want).then(|| OracleFailure {
                seed: case_seed,
                detail: format!("{seq}: closed form {got}, brute force {want}"),
            })
        })
        .collect();
    SuiteReport {
        name: "msf-vs-brute-force",
        checked: cases,
        failures,
    }
}

/// Closed-form divergence against quadrature on [`divergence_grid`], plus
/// the lower bound of one, attained for equal densities.
pub fn check_divergence() -> SuiteReport {
    let grid = divergence_grid();
    let mut failures = Vec::new();
    for &(fx, fy) in &grid {
        let closed = divergence_beta_closed_form(fx, fy);
        let quad = divergence_quadrature(fx, fy, 1e-11);
        let detail = match (closed, quad) {
            (Ok(c), Ok(q)) => {
                let mut problems = Vec::new();
                if (c - q).abs() > 1e-6 * q.abs() {
                    problems.push(format!("closed form {c} vs quadrature {q}"));
                }
                if c < 1.0 - 1e-12 {
                    problems.push(format!("divergence {c} below 1"));
                }
                if fx == fy && (c - 1.0).abs() > 1e-9 {
                    problems.push(format!("equal densities give {c}, not 1"));
                }
                (!problems.is_empty()).then(|| problems.join("; "))
            }
            (c, q) => Some(format!("evaluation failed: {c:?} / {q:?}")),
        };
        if let Some(detail) = detail {
            failures.push(OracleFailure {
                seed: 0,
                detail: format!("{fx} vs {fy}: {detail}"),
            });
        }
    }
    SuiteReport {
        name: "divergence-closed-form-vs-quadrature",
        checked: grid.len() as u64,
        failures,
    }
}

/// Checks one TBS run: output equals the full-information partition, the
/// SEARCH cost bound, ISOLATE ≤ SPLIT, and single counting per pair.
pub fn check_tbs_case(instance: &Instance) -> std::result::Result<(), String> {
    let (bins, ledger) = run_tbs(instance);
    let users: Vec<usize> = (0..instance.m()).collect();
    let truth = ground_truth_partition(instance, &users).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    if bins != truth {
        problems.push(format!("TBS gave {bins}, ground truth {truth}"));
    }
    let c = ledger.counts();
    let search_bound = instance.m() as f64 * ((instance.n() as f64).log2() + 1.0);
    if c.search as f64 > search_bound {
        problems.push(format!("q_search {} exceeds {search_bound}", c.search));
    }
    if c.isolate > c.split {
        problems.push(format!("q_iso {} exceeds q_split {}", c.isolate, c.split));
    }
    if c.total() != ledger.distinct_pairs() as u64 {
        problems.push(format!(
            "total {} differs from {} distinct pairs",
            c.total(),
            ledger.distinct_pairs()
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "n={} m={} {}/{}: {}",
            instance.n(),
            instance.m(),
            instance.score_params(),
            instance.threshold_params(),
            problems.join("; ")
        ))
    }
}

pub fn check_tbs_ground_truth(instances: u64, seed: u64) -> SuiteReport {
    let failures = (0..instances)
        .into_par_iter()
        .filter_map(|i| {
            let case_seed = seed + i;
            check_tbs_case(&random_tbs_case(case_seed))
                .err()
                .map(|detail| OracleFailure {
                    seed: case_seed,
                    detail,
                })
        })
        .collect();
    SuiteReport {
        name: "tbs-vs-ground-truth",
        checked: instances,
        failures,
    }
}

/// Runs all self-check suites.
pub fn run_oracle_checks(budget: OracleBudget) -> OracleReport {
    OracleReport {
        suites: vec![
            check_msf_equivalence(budget.msf_cases, budget.seed, msf),
            check_divergence(),
            check_tbs_ground_truth(budget.tbs_instances, budget.seed),
        ],
    }
}

/// Upper bound `msf_of_bin(n)`: all items in one bin.
pub fn worst_case_msf(n: usize) -> u64 {
    msf_of_bin(n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_config(grid: Vec<usize>, seeds: RangeInclusive<u64>) -> ExperimentConfig {
        ExperimentConfig {
            regime: RegimeSpec::new(1.0, 2.0).unwrap(),
            n_grid: grid,
            fx: BetaParams::uniform(),
            fy: BetaParams::uniform(),
            seeds,
            output_path: None,
        }
    }

    #[test]
    fn single_seed_row() {
        let rows = run_sweep(&quadratic_config(vec![10], 7..=7)).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        let single = run_once(10, 100, BetaParams::uniform(), BetaParams::uniform(), 7).unwrap();
        assert_eq!(row.m, 100);
        assert_eq!(row.mean_msf, single.msf as f64);
        assert_eq!(row.ci_half_width, 0.0);
        assert_eq!(row.seeds_used, 1);
        assert_eq!(row.predicted_msf, 2.0);
    }

    #[test]
    fn mismatch_prediction_uses_divergence() {
        let (fx, fy) = mismatch_params();
        let mut cfg = quadratic_config(vec![8], 1..=2);
        cfg.fx = fx;
        cfg.fy = fy;
        let rows = run_sweep(&cfg).unwrap();
        assert!((rows[0].predicted_msf - 2.4).abs() < 1e-12);
    }

    #[test]
    fn row_invariants() {
        let rows = run_sweep(&quadratic_config(vec![5, 12, 20], 1..=40)).unwrap();
        for r in &rows {
            let parts = r.mean_q_search + r.mean_q_iso + r.mean_q_split;
            assert!((r.mean_q_total - parts).abs() <= 1e-9);
            assert!(r.ci_half_width >= 0.0);
            assert!(r.mean_q_search <= r.m as f64 * ((r.n as f64).log2() + 1.0));
            assert!(r.mean_q_iso <= r.mean_q_split);
            assert!(r.mean_msf >= 0.0 && r.mean_msf <= worst_case_msf(r.n) as f64);
        }
    }

    #[test]
    fn config_validation() {
        assert!(run_sweep(&quadratic_config(vec![], 1..=2)).is_err());
        assert!(run_sweep(&quadratic_config(vec![0], 1..=2)).is_err());
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 5..=4;
        assert!(run_sweep(&quadratic_config(vec![3], empty)).is_err());
        let mut cfg = quadratic_config(vec![1], 1..=2);
        cfg.regime = RegimeSpec::new(0.1, 1.0).unwrap();
        assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mean_ci_values() {
        assert_eq!(mean_ci(&[3.0]), (3.0, 0.0));
        let (m, ci) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((ci - 1.96 * sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let rows = run_sweep(&quadratic_config(vec![4], 1..=3)).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("4,16,3,"));
        assert!(text.ends_with('\n'));
        assert_eq!(lines[1].split(',').count(), 10);
    }

    #[test]
    fn tail_censoring_counts_as_survival() {
        let u = BetaParams::uniform();
        let pts = run_tail_experiment(2, u, u, &[1, 5], 200, 5, 3).unwrap();
        // With cap 5 every run not finished by 5 users is censored.
        assert!(pts[1].survival <= pts[0].survival);
        assert!(run_tail_experiment(2, u, u, &[10], 10, 5, 3).is_err());
        assert!(run_tail_experiment(1, u, u, &[1], 10, 5, 3).is_err());
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let pts: Vec<TailPoint> = [10u64, 100, 1000]
            .iter()
            .map(|&m| TailPoint {
                m,
                survival: 3.0 / m as f64,
                std_err: 0.0,
            })
            .collect();
        assert!((loglog_slope(&pts) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_sequences_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let s = random_bin_sequence(&mut rng, 8, 6);
            assert!((1..=8).contains(&s.n_items()));
            assert!(s.sizes().iter().all(|&b| (1..=6).contains(&b)));
        }
    }

    #[test]
    fn oracle_default_budget_passes() {
        let report = run_oracle_checks(OracleBudget {
            msf_cases: 100,
            tbs_instances: 30,
            seed: 1,
        });
        assert!(report.passed(), "{report}");
        assert!(report.suites[1].checked >= 20);
    }

    #[test]
    fn injected_fault_is_caught() {
        let faulty = |s: &BinSequence| s.sizes().iter().map(|&b| msf_of_bin(b as u64) + 1).sum();
        let report = check_msf_equivalence(50, 9, faulty);
        assert!(!report.passed());
        let first = &report.failures[0];
        assert!(first.seed >= 9 && first.seed < 59);
        assert!(first.detail.contains("brute force"));
    }
}
