//! Problem instances, the noiseless rating oracle with its query ledger, and
//! the CDF rescaling transform.
//!
//! Randomness is split into named sub-streams of one master seed: the master
//! seed keys a ChaCha8 generator and each [`Stream`] selects a distinct
//! ChaCha stream id under that key. Scores and thresholds therefore never
//! share random words, and changing `m` leaves the drawn scores untouched.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::{beta_cdf, BetaParams, BetaSampler};
use crate::error::{Error, Result};

/// Named sub-streams derived from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scores = 0,
    Thresholds = 1,
    /// Uniform item choices made by the query algorithm.
    Choices = 2,
}

/// Generator for `stream` under master `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// One sampled world: item scores and user thresholds in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    scores: Vec<f64>,
    thresholds: Vec<f64>,
    score_params: BetaParams,
    threshold_params: BetaParams,
    seed: u64,
}

impl Instance {
    /// Builds an instance from explicit values, checking that every value lies
    /// in `(0, 1)` and that all `n + m` values are pairwise distinct.
    pub fn from_values(
        scores: Vec<f64>,
        thresholds: Vec<f64>,
        score_params: BetaParams,
        threshold_params: BetaParams,
        seed: u64,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Domain("an instance needs at least one item".into()));
        }
        let mut seen = HashSet::with_capacity(scores.len() + thresholds.len());
        for &v in scores.iter().chain(&thresholds) {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("value {v} is outside (0, 1)")));
            }
            if !seen.insert(v.to_bits()) {
                return Err(Error::Domain(format!("value {v} appears twice")));
            }
        }
        Ok(Self {
            scores,
            thresholds,
            score_params,
            threshold_params,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn m(&self) -> usize {
        self.thresholds.len()
    }

    /// Scores indexed by item id.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Thresholds indexed by user arrival order.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn score_params(&self) -> BetaParams {
        self.score_params
    }

    pub fn threshold_params(&self) -> BetaParams {
        self.threshold_params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Samples `n` scores from `fx` and `m` thresholds from `fy`.
///
/// Scores come from [`Stream::Scores`] and thresholds from
/// [`Stream::Thresholds`]. A draw that collides bit-for-bit with an earlier
/// value is redrawn from its own stream until distinct.
pub fn sample_instance(
    n: usize,
    m: usize,
    fx: BetaParams,
    fy: BetaParams,
    seed: u64,
) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Domain("an instance needs at least one item".into()));
    }
    let mut seen = HashSet::with_capacity(n + m);
    let mut draw_distinct = |sampler: &mut BetaSampler, rng: &mut ChaCha8Rng| loop {
        let v = sampler.draw(rng);
        if seen.insert(v.to_bits()) {
            return v;
        }
    };

    let mut rng = stream_rng(seed, Stream::Scores);
    let mut sampler = BetaSampler::new(fx);
    let scores: Vec<f64> = (0..n).map(|_| draw_distinct(&mut sampler, &mut rng)).collect();

    let mut rng = stream_rng(seed, Stream::Thresholds);
    let mut sampler = BetaSampler::new(fy);
    let thresholds: Vec<f64> = (0..m).map(|_| draw_distinct(&mut sampler, &mut rng)).collect();

    Ok(Instance {
        scores,
        thresholds,
        score_params: fx,
        threshold_params: fy,
        seed,
    })
}

/// Query phase of the threshold binary search, used to attribute cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Search,
    Isolate,
    Split,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Search => "search",
            Phase::Isolate => "isolate",
            Phase::Split => "split",
        })
    }
}

/// Per-phase query counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCounts {
    pub search: u64,
    pub isolate: u64,
    pub split: u64,
}

impl QueryCounts {
    pub fn total(&self) -> u64 {
        self.search + self.isolate + self.split
    }

    fn slot(&mut self, phase: Phase) -> &mut u64 {
        match phase {
            Phase::Search => &mut self.search,
            Phase::Isolate => &mut self.isolate,
            Phase::Split => &mut self.split,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct CachedRating {
    bit: bool,
    phase: Phase,
}

/// Rating cache plus phase-tagged query counters.
///
/// Each `(user, item)` pair is counted at most once: repeat queries are served
/// from the cache. The phase a pair is charged to can later change through
/// [`QueryLedger::reattribute_to_split`], which never changes the total.
#[derive(Debug, Clone, Default)]
pub struct QueryLedger {
    cache: HashMap<(usize, usize), CachedRating>,
    counts: QueryCounts,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self) -> QueryCounts {
        self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.total()
    }

    /// Number of distinct `(user, item)` pairs ever rated.
    pub fn distinct_pairs(&self) -> usize {
        self.cache.len()
    }

    pub fn cached(&self, user: usize, item: usize) -> Option<bool> {
        self.cache.get(&(user, item)).map(|r| r.bit)
    }

    /// Phase the pair is currently charged to.
    pub fn charged_phase(&self, user: usize, item: usize) -> Option<Phase> {
        self.cache.get(&(user, item)).map(|r| r.phase)
    }

    /// Returns `1(X_item > Y_user)`; a first query for the pair is charged to
    /// `phase`, a repeat is free.
    pub fn rate(
        &mut self,
        instance: &Instance,
        user: usize,
        item: usize,
        phase: Phase,
    ) -> Result<bool> {
        if user >= instance.m() {
            return Err(Error::Domain(format!(
                "user {user} out of range (m = {})",
                instance.m()
            )));
        }
        if item >= instance.n() {
            return Err(Error::Domain(format!(
                "item {item} out of range (n = {})",
                instance.n()
            )));
        }
        Ok(self.rate_unchecked(instance, user, item, phase).0)
    }

    /// Like [`QueryLedger::rate`] for ids already known to be in range; also
    /// reports whether the rating came from the cache.
    pub(crate) fn rate_unchecked(
        &mut self,
        instance: &Instance,
        user: usize,
        item: usize,
        phase: Phase,
    ) -> (bool, bool) {
        if let Some(r) = self.cache.get(&(user, item)) {
            return (r.bit, true);
        }
        let bit = instance.scores[item] > instance.thresholds[user];
        self.cache.insert((user, item), CachedRating { bit, phase });
        *self.counts.slot(phase) += 1;
        (bit, false)
    }

    /// Moves this user's isolate-phase ratings on `items` to the split
    /// counter. Returns how many ratings moved.
    pub fn reattribute_to_split(&mut self, user: usize, items: &[usize]) -> usize {
        let mut moved = 0;
        for &item in items {
            if let Some(r) = self.cache.get_mut(&(user, item)) {
                if r.phase == Phase::Isolate {
                    r.phase = Phase::Split;
                    moved += 1;
                }
            }
        }
        self.counts.isolate -= moved as u64;
        self.counts.split += moved as u64;
        moved
    }
}

/// Free-function form of [`QueryLedger::rate`].
pub fn rate(
    instance: &Instance,
    ledger: &mut QueryLedger,
    user: usize,
    item: usize,
    phase: Phase,
) -> Result<bool> {
    ledger.rate(instance, user, item, phase)
}

/// Maps every score and threshold through the threshold CDF `F_Y`.
///
/// Thresholds of the result are uniform, so `threshold_params` becomes
/// Beta(1, 1). `score_params` keeps the original `f_X`: the rescaled scores
/// follow the push-forward of `f_X` through `F_Y`, which is not a Beta law in
/// general. Since `F_Y` is strictly increasing the relative order of all
/// `n + m` values is unchanged.
pub fn rescale_instance(instance: &Instance) -> Instance {
    let fy = instance.threshold_params;
    let map = |v: &f64| beta_cdf(*v, fy).expect("instance values lie in (0, 1)");
    Instance {
        scores: instance.scores.iter().map(map).collect(),
        thresholds: instance.thresholds.iter().map(map).collect(),
        score_params: instance.score_params,
        threshold_params: BetaParams::uniform(),
        seed: instance.seed,
    }
}

/// Outcome of drawing users until the items are totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalOrderDraw {
    /// Every gap between consecutive scores received a threshold after this
    /// many users.
    Reached(u64),
    /// More than `cap` users would have been needed.
    Censored,
}

impl TotalOrderDraw {
    /// Whether `M > m` for this draw. Censored draws count as survivors for
    /// every `m <= cap`.
    pub fn survives(&self, m: u64) -> bool {
        match *self {
            TotalOrderDraw::Reached(count) => count > m,
            TotalOrderDraw::Censored => true,
        }
    }
}

/// Feeds thresholds until every gap between consecutive `scores` holds one.
pub fn count_users_to_total_order<I>(scores: &[f64], thresholds: I, cap: u64) -> TotalOrderDraw
where
    I: IntoIterator<Item = f64>,
{
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gaps = sorted.len().saturating_sub(1);
    if gaps == 0 {
        return TotalOrderDraw::Reached(0);
    }
    let mut covered = vec![false; gaps];
    let mut remaining = gaps;
    for (count, y) in (1..=cap).zip(thresholds) {
        let idx = sorted.partition_point(|&s| s < y);
        // idx in 1..n means sorted[idx-1] < y <= sorted[idx]; equality splits nothing.
        if idx > 0 && idx < sorted.len() && sorted[idx] != y && !covered[idx - 1] {
            covered[idx - 1] = true;
            remaining -= 1;
            if remaining == 0 {
                return TotalOrderDraw::Reached(count);
            }
        }
    }
    TotalOrderDraw::Censored
}

/// Draws `n` scores from `fx`, then thresholds from `fy` one at a time until
/// the scores are totally ordered, giving up after `cap` users.
pub fn sample_users_to_total_order<R: Rng + ?Sized>(
    n: usize,
    fx: BetaParams,
    fy: BetaParams,
    rng: &mut R,
    cap: u64,
) -> Result<TotalOrderDraw> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least two items, got {n}")));
    }
    let mut scores = BetaSampler::new(fx);
    let scores: Vec<f64> = (0..n).map(|_| scores.draw(rng)).collect();
    let mut thresholds = BetaSampler::new(fy);
    let draws = std::iter::repeat_with(|| thresholds.draw(rng));
    Ok(count_users_to_total_order(&scores, draws, cap))
}

const HEADER: &str = "threshold-rank instance v1";

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER}")?;
        writeln!(f, "n {}", self.n())?;
        writeln!(f, "m {}", self.m())?;
        writeln!(f, "score_params {} {}", self.score_params.a(), self.score_params.b())?;
        writeln!(
            f,
            "threshold_params {} {}",
            self.threshold_params.a(),
            self.threshold_params.b()
        )?;
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "scores")?;
        for v in &self.scores {
            writeln!(f, "{v}")?;
        }
        writeln!(f, "thresholds")?;
        for v in &self.thresholds {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok(line.trim())
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn number<T: FromStr>(&self, text: &str) -> Result<T> {
        text.parse()
            .map_err(|_| self.err(format!("cannot parse `{text}`")))
    }

    fn params(&mut self, key: &str) -> Result<BetaParams> {
        let fields = self.keyed(key)?;
        if fields.len() != 2 {
            return Err(self.err(format!("`{key}` needs two shapes")));
        }
        let a = self.number(fields[0])?;
        let b = self.number(fields[1])?;
        BetaParams::new(a, b).map_err(|e| self.err(e.to_string()))
    }

    fn single<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let fields = self.keyed(key)?;
        match fields.as_slice() {
            [v] => self.number(v),
            _ => Err(self.err(format!("`{key}` needs one value"))),
        }
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count)
            .map(|_| {
                let line = self.next_line()?;
                self.number(line)
            })
            .collect()
    }
}

impl FromStr for Instance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: s.lines().enumerate(),
            last: 0,
        };
        if lines.next_line()? != HEADER {
            return Err(lines.err("missing instance header"));
        }
        let n: usize = lines.single("n")?;
        let m: usize = lines.single("m")?;
        let score_params = lines.params("score_params")?;
        let threshold_params = lines.params("threshold_params")?;
        let seed: u64 = lines.single("seed")?;
        lines.keyed("scores")?;
        let scores = lines.values(n)?;
        lines.keyed("thresholds")?;
        let thresholds = lines.values(m)?;
        for (i, rest) in lines.inner.by_ref() {
            if !rest.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "trailing content".into(),
                });
            }
        }
        Instance::from_values(scores, thresholds, score_params, threshold_params, seed)
            .map_err(|e| lines.err(e.to_string()))
    }
}
