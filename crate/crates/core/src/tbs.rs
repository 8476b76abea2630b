//! Threshold Binary Search.
//!
//! Users are processed in arrival order. For each user the current bin
//! sequence is bisected with one rating per probed bin (SEARCH), the two
//! candidate bins are told apart by alternating ratings (ISOLATE), and the
//! chosen bin is rated in full and split at the user's threshold (SPLIT).
//!
//! Bin indices returned by [`search`] and [`isolate`] are 1-based, matching
//! the usual statement of the algorithm; [`BinSequence`] itself is 0-based.
//!
//! Item choices draw from the [`Stream::Choices`] sub-stream of the instance
//! seed, so a run is a pure function of its instance.

use std::fmt;

use rand::Rng;

use crate::binseq::BinSequence;
use crate::error::{Error, Result};
use crate::model::{stream_rng, Instance, Phase, QueryLedger, Stream};

/// One line of a per-user trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Query {
        user: usize,
        phase: Phase,
        item: usize,
        rating: bool,
        /// The rating was already known, so nothing was charged.
        cached: bool,
    },
    Decision {
        user: usize,
        l: usize,
        r: usize,
        chosen: usize,
        refined: bool,
    },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TraceEvent::Query {
                user,
                phase,
                item,
                rating,
                cached,
            } => {
                write!(f, "user={user} phase={phase} item={item} rating={}", u8::from(rating))?;
                if cached {
                    f.write_str(" cached")?;
                }
                Ok(())
            }
            TraceEvent::Decision {
                user,
                l,
                r,
                chosen,
                refined,
            } => write!(
                f,
                "user={user} decide l={l} r={r} k={chosen} split={}",
                if refined { "yes" } else { "no" }
            ),
        }
    }
}

struct Querier<'q> {
    instance: &'q Instance,
    ledger: &'q mut QueryLedger,
    user: usize,
    trace: Option<&'q mut Vec<TraceEvent>>,
}

impl<'q> Querier<'q> {
    fn new(
        instance: &'q Instance,
        ledger: &'q mut QueryLedger,
        user: usize,
        trace: Option<&'q mut Vec<TraceEvent>>,
    ) -> Result<Self> {
        if user >= instance.m() {
            return Err(Error::Domain(format!(
                "user {user} out of range (m = {})",
                instance.m()
            )));
        }
        Ok(Self {
            instance,
            ledger,
            user,
            trace,
        })
    }

    fn rate(&mut self, item: usize, phase: Phase) -> bool {
        let (rating, cached) = self
            .ledger
            .rate_unchecked(self.instance, self.user, item, phase);
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(TraceEvent::Query {
                user: self.user,
                phase,
                item,
                rating,
                cached,
            });
        }
        rating
    }

    fn is_rated(&self, item: usize) -> bool {
        self.ledger.cached(self.user, item).is_some()
    }
}

fn check_bins(bins: &BinSequence, instance: &Instance) -> Result<()> {
    if bins.is_empty() || bins.n_items() != instance.n() {
        return Err(Error::InvalidPartition(format!(
            "bin sequence over {} items does not match an instance of {} items",
            bins.n_items(),
            instance.n()
        )));
    }
    Ok(())
}

fn search_with<R: Rng + ?Sized>(bins: &BinSequence, q: &mut Querier<'_>, rng: &mut R) -> (usize, usize) {
    let mut l = 1;
    let mut r = bins.len();
    while l + 1 < r {
        let k = (l + r) / 2;
        let bin = bins.bin(k - 1);
        let item = bin[rng.random_range(0..bin.len())];
        if q.rate(item, Phase::Search) {
            r = k;
        } else {
            l = k;
        }
    }
    (l, r)
}

fn isolate_with<R: Rng + ?Sized>(
    bins: &BinSequence,
    l: usize,
    r: usize,
    q: &mut Querier<'_>,
    rng: &mut R,
) -> usize {
    if l == r {
        return l;
    }
    let unrated = |q: &Querier<'_>, k: usize| -> Vec<usize> {
        bins.bin(k - 1).iter().copied().filter(|&i| !q.is_rated(i)).collect()
    };
    let mut pool_l = unrated(q, l);
    let mut pool_r = unrated(q, r);
    while !pool_l.is_empty() && !pool_r.is_empty() {
        let i = pool_l.swap_remove(rng.random_range(0..pool_l.len()));
        if q.rate(i, Phase::Isolate) {
            return l;
        }
        let j = pool_r.swap_remove(rng.random_range(0..pool_r.len()));
        if !q.rate(j, Phase::Isolate) {
            return r;
        }
    }
    // An exhausted `l` is known to be all zeros; an exhausted `r` all ones.
    if pool_l.is_empty() {
        r
    } else {
        l
    }
}

fn split_with(bin: &[usize], q: &mut Querier<'_>) -> (Vec<usize>, Vec<usize>) {
    q.ledger.reattribute_to_split(q.user, bin);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &item in bin {
        if q.rate(item, Phase::Split) {
            upper.push(item);
        } else {
            lower.push(item);
        }
    }
    (lower, upper)
}

/// Bisects the bin sequence for `user`'s threshold.
///
/// Starting from `(1, |bins|)`, each step rates one uniformly chosen item of
/// the middle bin `k`: a 1 moves `r` to `k`, a 0 moves `l` to `k`. Stops once
/// `r − l ≤ 1` and returns the 1-based pair `(l, r)`. Sequences of one or two
/// bins cost nothing.
pub fn search<R: Rng + ?Sized>(
    bins: &BinSequence,
    instance: &Instance,
    ledger: &mut QueryLedger,
    user: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    check_bins(bins, instance)?;
    let mut q = Querier::new(instance, ledger, user, None)?;
    Ok(search_with(bins, &mut q, rng))
}

/// Picks which of bins `l` and `r` (1-based, adjacent) holds `user`'s
/// threshold.
///
/// Alternately rates one not-yet-rated item of `l` and one of `r`. A 1 in
/// `l` means the threshold lies below that item, so `l` is returned; a 0 in
/// `r` means it lies above that item, so `r` is returned. Items the user
/// already rated during SEARCH are not sampled again: their ratings are known
/// and cannot trigger either exit. When a bin runs out of unrated items the
/// other one is returned (`r` if both run out), since the threshold cannot lie
/// inside a bin whose items all rated the same way.
pub fn isolate<R: Rng + ?Sized>(
    bins: &BinSequence,
    l: usize,
    r: usize,
    instance: &Instance,
    ledger: &mut QueryLedger,
    user: usize,
    rng: &mut R,
) -> Result<usize> {
    check_bins(bins, instance)?;
    if l == 0 || r > bins.len() || l > r || r - l > 1 {
        return Err(Error::Domain(format!(
            "({l}, {r}) is not a pair of adjacent 1-based bin indices for {} bins",
            bins.len()
        )));
    }
    let mut q = Querier::new(instance, ledger, user, None)?;
    Ok(isolate_with(bins, l, r, &mut q, rng))
}

/// Rates every item of `bin` and splits it into `(rated 0, rated 1)`.
///
/// Ratings this user gave during ISOLATE on these items are moved to the
/// split counter first, so every rating of the bin outside SEARCH ends up
/// charged to SPLIT.
pub fn split(
    bin: &[usize],
    instance: &Instance,
    ledger: &mut QueryLedger,
    user: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if let Some(&bad) = bin.iter().find(|&&i| i >= instance.n()) {
        return Err(Error::Domain(format!(
            "item {bad} out of range (n = {})",
            instance.n()
        )));
    }
    let mut q = Querier::new(instance, ledger, user, None)?;
    Ok(split_with(bin, &mut q))
}

/// What one user step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepReport {
    pub user: usize,
    /// 1-based pair returned by SEARCH.
    pub l: usize,
    pub r: usize,
    /// 1-based bin returned by ISOLATE.
    pub chosen: usize,
    /// Whether the chosen bin was split into two non-empty parts.
    pub refined: bool,
}

/// A TBS run that can be advanced one user at a time.
pub struct Tbs<'a, R> {
    instance: &'a Instance,
    bins: BinSequence,
    ledger: QueryLedger,
    rng: R,
    next_user: usize,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a> Tbs<'a, rand_chacha::ChaCha8Rng> {
    /// Starts a run whose item choices come from the instance's
    /// [`Stream::Choices`] stream.
    pub fn new(instance: &'a Instance) -> Self {
        Self::with_rng(instance, stream_rng(instance.seed(), Stream::Choices))
    }
}

impl<'a, R: Rng> Tbs<'a, R> {
    pub fn with_rng(instance: &'a Instance, rng: R) -> Self {
        Self {
            instance,
            bins: BinSequence::single(instance.n()),
            ledger: QueryLedger::new(),
            rng,
            next_user: 0,
            trace: None,
        }
    }

    /// Records a [`TraceEvent`] for every rating and user decision.
    pub fn traced(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn bins(&self) -> &BinSequence {
        &self.bins
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Processes the next user, or returns `None` once all users are done.
    pub fn step(&mut self) -> Option<StepReport> {
        let user = self.next_user;
        if user >= self.instance.m() {
            return None;
        }
        self.next_user += 1;

        let mut q = Querier {
            instance: self.instance,
            ledger: &mut self.ledger,
            user,
            trace: self.trace.as_mut(),
        };
        let (l, r) = search_with(&self.bins, &mut q, &mut self.rng);
        let chosen = isolate_with(&self.bins, l, r, &mut q, &mut self.rng);
        let (lower, upper) = split_with(self.bins.bin(chosen - 1), &mut q);
        let refined = !lower.is_empty() && !upper.is_empty();
        self.bins.split_bin(chosen - 1, lower, upper);

        let report = StepReport {
            user,
            l,
            r,
            chosen,
            refined,
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent::Decision {
                user,
                l,
                r,
                chosen,
                refined,
            });
        }
        Some(report)
    }

    pub fn run(mut self) -> (BinSequence, QueryLedger) {
        while self.step().is_some() {}
        (self.bins, self.ledger)
    }

    /// Runs to completion and also returns the trace (empty unless
    /// [`Tbs::traced`] was called).
    pub fn run_traced(mut self) -> (BinSequence, QueryLedger, Vec<TraceEvent>) {
        while self.step().is_some() {}
        (self.bins, self.ledger, self.trace.unwrap_or_default())
    }
}

/// Runs TBS over every user of `instance` in arrival order.
pub fn run_tbs(instance: &Instance) -> (BinSequence, QueryLedger) {
    Tbs::new(instance).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binseq::{ground_truth_partition, msf};
    use crate::distributions::BetaParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(scores: &[f64], thresholds: &[f64]) -> Instance {
        let u = BetaParams::uniform();
        Instance::from_values(scores.to_vec(), thresholds.to_vec(), u, u, 0).unwrap()
    }

    fn singletons(n: usize) -> BinSequence {
        BinSequence::from_bins((0..n).map(|i| vec![i]).collect()).unwrap()
    }

    #[test]
    fn search_on_short_sequences_is_free() {
        let inst = instance(&[0.2, 0.4], &[0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = QueryLedger::new();
        let one = BinSequence::single(2);
        assert_eq!(search(&one, &inst, &mut ledger, 0, &mut rng).unwrap(), (1, 1));
        let two = singletons(2);
        assert_eq!(search(&two, &inst, &mut ledger, 0, &mut rng).unwrap(), (1, 2));
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn search_with_threshold_below_everything() {
        let scores: Vec<f64> = (0..8).map(|i| 0.1 + 0.1 * i as f64).collect();
        let inst = instance(&scores, &[0.05]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = QueryLedger::new();
        let (l, r) = search(&singletons(8), &inst, &mut ledger, 0, &mut rng).unwrap();
        assert_eq!((l, r), (1, 2));
        // Probes bins 4 then 2; the bound is ceil(log2 8) = 3.
        assert_eq!(ledger.counts().search, 2);
        assert!((0..8).all(|i| ledger.cached(0, i) != Some(false)));
    }

    #[test]
    fn isolate_picks_bin_holding_threshold() {
        // Threshold 0.35 falls inside bin l = {0.3, 0.4}.
        let inst = instance(&[0.3, 0.4, 0.6, 0.7], &[0.35]);
        let bins = BinSequence::from_bins(vec![vec![0, 1], vec![2, 3]]).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ledger = QueryLedger::new();
            let k = isolate(&bins, 1, 2, &inst, &mut ledger, 0, &mut rng).unwrap();
            assert_eq!(k, 1);
        }
    }

    #[test]
    fn isolate_between_bins_returns_larger() {
        let inst = instance(&[0.1, 0.2, 0.6, 0.65, 0.7, 0.75, 0.8], &[0.4]);
        let bins = BinSequence::from_bins(vec![vec![0, 1], vec![2, 3, 4, 5, 6]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ledger = QueryLedger::new();
        assert_eq!(isolate(&bins, 1, 2, &inst, &mut ledger, 0, &mut rng).unwrap(), 2);
        // Bin l was exhausted: two zeros from l, two ones from r.
        assert_eq!(ledger.counts().isolate, 4);
    }

    #[test]
    fn isolate_tie_goes_right() {
        let inst = instance(&[0.1, 0.2, 0.6, 0.7], &[0.4]);
        let bins = BinSequence::from_bins(vec![vec![0, 1], vec![2, 3]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ledger = QueryLedger::new();
        assert_eq!(isolate(&bins, 1, 2, &inst, &mut ledger, 0, &mut rng).unwrap(), 2);
    }

    #[test]
    fn isolate_same_bin_is_free() {
        let inst = instance(&[0.1, 0.2], &[0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ledger = QueryLedger::new();
        let bins = BinSequence::single(2);
        assert_eq!(isolate(&bins, 1, 1, &inst, &mut ledger, 0, &mut rng).unwrap(), 1);
        assert_eq!(ledger.total(), 0);
        assert!(isolate(&bins, 1, 2, &inst, &mut ledger, 0, &mut rng).is_err());
    }

    #[test]
    fn split_examples() {
        let inst = instance(&[0.3, 0.7], &[0.5, 0.1]);
        let mut ledger = QueryLedger::new();
        assert_eq!(split(&[0, 1], &inst, &mut ledger, 0).unwrap(), (vec![0], vec![1]));
        assert_eq!(split(&[0, 1], &inst, &mut ledger, 1).unwrap(), (vec![], vec![0, 1]));
    }

    #[test]
    fn split_reuses_and_reattributes_isolate_ratings() {
        let inst = instance(&[0.1, 0.2, 0.3, 0.6, 0.7], &[0.5]);
        let mut ledger = QueryLedger::new();
        ledger.rate(&inst, 0, 1, Phase::Isolate).unwrap();
        ledger.rate(&inst, 0, 3, Phase::Isolate).unwrap();
        let (lower, upper) = split(&[0, 1, 2, 3, 4], &inst, &mut ledger, 0).unwrap();
        assert_eq!((lower, upper), (vec![0, 1, 2], vec![3, 4]));
        let c = ledger.counts();
        assert_eq!((c.search, c.isolate, c.split), (0, 0, 5));
        assert_eq!(ledger.total(), 5);
    }

    #[test]
    fn single_item_costs_one_query_per_user() {
        let inst = instance(&[0.5], &[0.2, 0.7, 0.9]);
        let (bins, ledger) = run_tbs(&inst);
        assert_eq!(bins, BinSequence::single(1));
        assert_eq!(ledger.total(), 3);
        assert_eq!(ledger.counts().split, 3);
    }

    #[test]
    fn two_item_trace() {
        let inst = instance(&[0.3, 0.7], &[0.5, 0.1]);
        let (bins, ledger) = run_tbs(&inst);
        assert_eq!(bins, singletons(2));
        let c = ledger.counts();
        assert_eq!((c.search, c.isolate, c.split), (0, 0, 3));
    }

    #[test]
    fn trace_lines() {
        let inst = instance(&[0.3, 0.7], &[0.5, 0.1]);
        let (_, _, trace) = Tbs::new(&inst).traced().run_traced();
        let lines: Vec<String> = trace.iter().map(ToString::to_string).collect();
        assert_eq!(
            lines,
            [
                "user=0 phase=split item=0 rating=0",
                "user=0 phase=split item=1 rating=1",
                "user=0 decide l=1 r=1 k=1 split=yes",
                "user=1 phase=isolate item=0 rating=1",
                "user=1 phase=split item=0 rating=1 cached",
                "user=1 decide l=1 r=2 k=1 split=no",
            ]
        );
    }

    #[test]
    fn matches_ground_truth_on_small_instances() {
        let u = BetaParams::uniform();
        for seed in 0..50 {
            let inst = crate::model::sample_instance(12, 30, u, u, seed).unwrap();
            let (bins, _) = run_tbs(&inst);
            let all: Vec<usize> = (0..inst.m()).collect();
            let truth = ground_truth_partition(&inst, &all).unwrap();
            assert_eq!(bins, truth);
            assert_eq!(msf(&bins), msf(&truth));
        }
    }

    #[test]
    fn public_phases_validate_ids() {
        let inst = instance(&[0.3, 0.7], &[0.5]);
        let mut ledger = QueryLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bins = BinSequence::single(2);
        assert!(search(&bins, &inst, &mut ledger, 1, &mut rng).is_err());
        assert!(split(&[0, 2], &inst, &mut ledger, 0).is_err());
        assert!(search(&BinSequence::single(3), &inst, &mut ledger, 0, &mut rng).is_err());
    }
}
