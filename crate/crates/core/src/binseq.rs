//! Bin sequences: the ordered partitions of items that encode what is known
//! about the score order, together with their Maximum Spearman Footrule.

use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::model::Instance;

/// Ordered partition of the items `0..n` into non-empty bins.
///
/// Items in an earlier bin have smaller scores than items in a later bin; the
/// order inside a bin is unknown. Each bin is kept sorted by item id, so two
/// sequences compare equal exactly when they are the same ordered partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSequence {
    bins: Vec<Vec<usize>>,
}

impl BinSequence {
    /// All `n` items in one bin: the state before any rating.
    pub fn single(n: usize) -> Self {
        let bins = if n == 0 { Vec::new() } else { vec![(0..n).collect()] };
        Self { bins }
    }

    /// Validates that `bins` is an ordered partition of `0..n` into non-empty
    /// bins, where `n` is the total number of ids given.
    pub fn from_bins(bins: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = bins.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        let mut sorted = Vec::with_capacity(bins.len());
        for mut bin in bins {
            if bin.is_empty() {
                return Err(Error::InvalidPartition("empty bin".into()));
            }
            for &item in &bin {
                if item >= n {
                    return Err(Error::InvalidPartition(format!(
                        "item {item} out of range for {n} items"
                    )));
                }
                if std::mem::replace(&mut seen[item], true) {
                    return Err(Error::InvalidPartition(format!("item {item} appears twice")));
                }
            }
            bin.sort_unstable();
            sorted.push(bin);
        }
        Ok(Self { bins: sorted })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn n_items(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn bins(&self) -> &[Vec<usize>] {
        &self.bins
    }

    /// Items of bin `k` (0-based), in increasing id order.
    pub fn bin(&self, k: usize) -> &[usize] {
        &self.bins[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bins.iter().map(Vec::len).collect()
    }

    /// Replaces bin `bin_index` by `(lower, upper)`. When either part is
    /// empty the sequence is returned unchanged.
    pub fn refine(&self, bin_index: usize, lower: &[usize], upper: &[usize]) -> Result<Self> {
        let bin = self.bins.get(bin_index).ok_or_else(|| {
            Error::InvalidPartition(format!(
                "bin index {bin_index} out of range ({} bins)",
                self.len()
            ))
        })?;
        let mut joined: Vec<usize> = lower.iter().chain(upper).copied().collect();
        joined.sort_unstable();
        if joined != *bin {
            return Err(Error::InvalidPartition(format!(
                "parts do not partition bin {bin_index}"
            )));
        }
        let mut out = self.clone();
        out.split_bin(bin_index, lower.to_vec(), upper.to_vec());
        Ok(out)
    }

    /// In-place refine for callers that already guarantee the partition.
    pub(crate) fn split_bin(&mut self, bin_index: usize, mut lower: Vec<usize>, mut upper: Vec<usize>) {
        if lower.is_empty() || upper.is_empty() {
            return;
        }
        lower.sort_unstable();
        upper.sort_unstable();
        self.bins[bin_index] = lower;
        self.bins.insert(bin_index + 1, upper);
    }

    /// True when every bin of `self` is a union of consecutive bins of
    /// `finer`.
    pub fn is_refined_by(&self, finer: &BinSequence) -> bool {
        let mut fine = finer.bins.iter();
        for coarse in &self.bins {
            let mut collected = Vec::with_capacity(coarse.len());
            while collected.len() < coarse.len() {
                match fine.next() {
                    Some(bin) => collected.extend_from_slice(bin),
                    None => return false,
                }
            }
            collected.sort_unstable();
            if collected != *coarse {
                return false;
            }
        }
        fine.next().is_none()
    }

    /// Checks the ordering property against the true scores: every item of
    /// an earlier bin scores strictly below every item of a later bin.
    pub fn respects_scores(&self, scores: &[f64]) -> bool {
        let mut prev_max = f64::NEG_INFINITY;
        for bin in &self.bins {
            let (lo, hi) = bin.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(scores[i]), hi.max(scores[i]))
            });
            if lo <= prev_max {
                return false;
            }
            prev_max = hi;
        }
        true
    }
}

impl fmt::Display for BinSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, bin) in self.bins.iter().enumerate() {
            if k > 0 {
                f.write_str(" | ")?;
            }
            f.write_str("{")?;
            for (j, item) in bin.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{item}")?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

fn selected_thresholds(instance: &Instance, users: &[usize]) -> Result<Vec<f64>> {
    let mut cuts = Vec::with_capacity(users.len());
    for &u in users {
        let y = instance.thresholds().get(u).ok_or_else(|| {
            Error::Domain(format!("user {u} out of range (m = {})", instance.m()))
        })?;
        cuts.push(*y);
    }
    cuts.sort_by(f64::total_cmp);
    Ok(cuts)
}

// Index of the inter-threshold interval holding each item.
fn interval_of_items(instance: &Instance, cuts: &[f64]) -> Vec<usize> {
    instance
        .scores()
        .iter()
        .map(|&x| cuts.partition_point(|&y| y < x))
        .collect()
}

/// The bin sequence a full-information observer gets from the thresholds of
/// `users`: items grouped by inter-threshold interval, empty groups dropped.
pub fn ground_truth_partition(instance: &Instance, users: &[usize]) -> Result<BinSequence> {
    let cuts = selected_thresholds(instance, users)?;
    let mut groups = vec![Vec::new(); cuts.len() + 1];
    for (item, k) in interval_of_items(instance, &cuts).into_iter().enumerate() {
        groups[k].push(item);
    }
    groups.retain(|g| !g.is_empty());
    Ok(BinSequence { bins: groups })
}

/// Item counts of all `|users| + 1` inter-threshold intervals, empty ones
/// included.
pub fn interval_sizes(instance: &Instance, users: &[usize]) -> Result<Vec<usize>> {
    let cuts = selected_thresholds(instance, users)?;
    let mut sizes = vec![0; cuts.len() + 1];
    for k in interval_of_items(instance, &cuts) {
        sizes[k] += 1;
    }
    Ok(sizes)
}

/// MSF of one bin of `size` items: `size²/2` when even, `(size² − 1)/2` when
/// odd.
pub fn msf_of_bin(size: u64) -> u64 {
    (size * size - (size & 1)) / 2
}

/// MSF of a bin sequence, the sum of the per-bin values.
pub fn msf(bin_sequence: &BinSequence) -> u64 {
    bin_sequence.bins.iter().map(|b| msf_of_bin(b.len() as u64)).sum()
}

/// Largest bin [`brute_force_msf`] will enumerate.
pub const BRUTE_FORCE_MAX_BIN: usize = 7;

// Every permutation of 0..k as a rank vector, via Heap's algorithm.
fn all_rank_vectors(k: usize) -> Vec<Vec<u8>> {
    let mut perm: Vec<u8> = (0..k as u8).collect();
    let mut out = vec![perm.clone()];
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            out.push(perm.clone());
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// MSF by exhaustive search over pairs of compatible total orders.
///
/// A total order compatible with the sequence ranks every item of bin `k`
/// after all items of earlier bins, so two compatible orders assign each
/// item the same bin offset and differ only in the within-bin rank. The
/// footrule therefore decomposes over bins, and each bin's maximum is found
/// by enumerating every pair of its permutations.
pub fn brute_force_msf(bin_sequence: &BinSequence) -> Result<u64> {
    let mut total = 0u64;
    for bin in &bin_sequence.bins {
        let k = bin.len();
        if k > BRUTE_FORCE_MAX_BIN {
            return Err(Error::BinTooLarge {
                size: k,
                max: BRUTE_FORCE_MAX_BIN,
            });
        }
        let perms = all_rank_vectors(k);
        let mut best = 0u64;
        for sigma in &perms {
            for tau in &perms {
                let sf: u64 = sigma
                    .iter()
                    .zip(tau)
                    .map(|(&a, &b)| u64::from(a.abs_diff(b)))
                    .sum();
                best = best.max(sf);
            }
        }
        total += best;
    }
    Ok(total)
}

/// Sample moments of the interval sizes of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinSizeStats {
    /// Number of intervals, `m + 1`.
    pub intervals: u64,
    /// `Σ B²` over intervals.
    pub sum_sq: u64,
    /// Number of intervals holding an odd number of items.
    pub odd: u64,
}

impl BinSizeStats {
    /// Sample `E[B²]`.
    pub fn mean_sq(&self) -> f64 {
        self.sum_sq as f64 / self.intervals as f64
    }

    /// Sample `P(B odd)`.
    pub fn odd_fraction(&self) -> f64 {
        self.odd as f64 / self.intervals as f64
    }

    /// Sample `E[B²]` as an exact fraction.
    pub fn mean_sq_exact(&self) -> Ratio<i128> {
        Ratio::new(i128::from(self.sum_sq), i128::from(self.intervals))
    }

    /// Sample `P(B odd)` as an exact fraction.
    pub fn odd_fraction_exact(&self) -> Ratio<i128> {
        Ratio::new(i128::from(self.odd), i128::from(self.intervals))
    }
}

/// Statistics over all intervals, so `sizes` must include empty intervals.
pub fn bin_size_stats(sizes: &[usize]) -> BinSizeStats {
    BinSizeStats {
        intervals: sizes.len() as u64,
        sum_sq: sizes.iter().map(|&b| (b * b) as u64).sum(),
        odd: sizes.iter().filter(|&&b| b % 2 == 1).count() as u64,
    }
}
