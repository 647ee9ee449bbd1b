//! ADGAC: label a pool by ranking it with comparisons, then binary searching
//! the sign change over contiguous groups of the ranking.
//!
//! The three stages are exposed separately ([`noisy_quicksort`],
//! [`partition_groups`], [`group_binary_search`]) and composed by [`adgac`].
//! Items are passed as `&[&T]` so that callers can label arbitrary subsets of
//! a pool without copying.

use std::ops::Range;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::label::Label;
use crate::oracle::{ComparisonOracle, LabelOracle};

/// Parameters of one invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdgacParams {
    /// Size of the ambient sample the pool was drawn from.
    pub n: usize,
    /// Pool size `|S|`.
    pub m: usize,
    pub epsilon: f64,
    /// Labels per probed group.
    pub k: usize,
}

impl AdgacParams {
    pub fn new(n: usize, m: usize, epsilon: f64, k: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must be in (0, 1), got {epsilon}")));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if m > n {
            return Err(Error::DegenerateGroups(format!(
                "pool size {m} exceeds ambient sample size {n}"
            )));
        }
        Ok(AdgacParams { n, m, epsilon, k })
    }

    /// `alpha = epsilon n / (2 m)`.
    pub fn alpha(&self) -> f64 {
        self.epsilon * self.n as f64 / (2.0 * self.m as f64)
    }

    /// `max(1, round(alpha m))`.
    pub fn group_size(&self) -> usize {
        let g = (self.epsilon * self.n as f64 / 2.0).round();
        if g < 1.0 {
            1
        } else {
            g as usize
        }
    }
}

/// Sorts `items` into increasing order of the comparator's preference.
///
/// Randomized-pivot quicksort; each queried pair is presented in a uniformly
/// random argument order. Returns the sorted permutation of indices into
/// `items` and the number of comparisons made.
pub fn noisy_quicksort<T, C, R>(items: &[&T], cmp: &mut C, rng: &mut R) -> (Vec<usize>, u64)
where
    T: ?Sized,
    C: ComparisonOracle<T> + ?Sized,
    R: Rng + ?Sized,
{
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut count = 0u64;
    let mut stack: Vec<std::ops::Range<usize>> = Vec::new();
    stack.push(0..order.len());
    let mut left = Vec::new();
    let mut right = Vec::new();
    while let Some(range) = stack.pop() {
        if range.len() < 2 {
            continue;
        }
        let p = rng.random_range(range.clone());
        order.swap(range.start, p);
        let pivot = order[range.start];
        left.clear();
        right.clear();
        for &e in &order[range.start + 1..range.end] {
            let above = if rng.random::<bool>() {
                cmp.compare(items[e], items[pivot]) == Label::Pos
            } else {
                cmp.compare(items[pivot], items[e]) == Label::Neg
            };
            count += 1;
            if above {
                right.push(e);
            } else {
                left.push(e);
            }
        }
        let mid = range.start + left.len();
        order[range.start..mid].copy_from_slice(&left);
        order[mid] = pivot;
        order[mid + 1..range.end].copy_from_slice(&right);
        stack.push(range.start..mid);
        stack.push(mid + 1..range.end);
    }
    (order, count)
}

/// A ranking cut into contiguous groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedGroups {
    /// Indices into the original pool, in ranked order.
    pub order: Vec<usize>,
    /// Positions into `order`; a partition of `0..order.len()`.
    pub groups: Vec<Range<usize>>,
}

impl RankedGroups {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Pool indices belonging to group `i`.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.order[self.groups[i].clone()]
    }
}

/// Cuts a ranking into groups of `max(1, round(alpha m))`, the last group
/// absorbing the remainder.
pub fn partition_groups(order: Vec<usize>, params: &AdgacParams) -> Result<RankedGroups> {
    let m = order.len();
    if m != params.m {
        return Err(Error::invalid(format!(
            "ranking has {m} items but params expect {}",
            params.m
        )));
    }
    if m > params.n {
        return Err(Error::DegenerateGroups(format!(
            "pool size {m} exceeds ambient sample size {}",
            params.n
        )));
    }
    if m == 0 {
        return Ok(RankedGroups {
            order,
            groups: Vec::new(),
        });
    }
    let g = params.group_size();
    let count = (m / g).max(1);
    let mut groups: Vec<Range<usize>> = (0..count).map(|i| i * g..(i + 1) * g).collect();
    if let Some(last) = groups.last_mut() {
        last.end = m;
    }
    Ok(RankedGroups { order, groups })
}

/// Result of the group search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOutcome {
    /// Index of the boundary group.
    pub boundary: usize,
    /// Majority vote of the last probe of the boundary group.
    pub boundary_label: Label,
    pub probes: usize,
    pub labels: u64,
}

fn probe<T, L, R>(
    items: &[&T],
    members: &[usize],
    k: usize,
    oracle: &mut L,
    rng: &mut R,
) -> (Label, u64)
where
    T: ?Sized,
    L: LabelOracle<T> + ?Sized,
    R: Rng + ?Sized,
{
    let take = k.min(members.len());
    let mut sum = 0i64;
    for j in index::sample(rng, members.len(), take) {
        sum += i64::from(oracle.label(items[members[j]]).value());
    }
    (Label::from_bool(sum >= 0), take as u64)
}

/// Binary search for the first group whose sampled label sum is
/// non-negative.
///
/// Each probe draws `min(k, |group|)` members without replacement. If the
/// search terminates on a group it never probed (only the last group can be
/// left so), that group is probed once so its label is still a majority
/// vote.
pub fn group_binary_search<T, L, R>(
    items: &[&T],
    ranked: &RankedGroups,
    k: usize,
    oracle: &mut L,
    rng: &mut R,
) -> Result<SearchOutcome>
where
    T: ?Sized,
    L: LabelOracle<T> + ?Sized,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if ranked.is_empty() {
        return Err(Error::DegenerateGroups("no groups to search".into()));
    }
    let (mut lo, mut hi) = (0usize, ranked.len() - 1);
    let mut probes = 0usize;
    let mut labels = 0u64;
    // Set once `hi` points at a probed group; that probe's vote was positive.
    let mut hi_probed = false;
    while lo < hi {
        let t = (lo + hi) / 2;
        let (vote, used) = probe(items, ranked.members(t), k, oracle, rng);
        probes += 1;
        labels += used;
        if vote == Label::Pos {
            hi = t;
            hi_probed = true;
        } else {
            lo = t + 1;
        }
    }
    let boundary_label = if hi_probed {
        Label::Pos
    } else {
        let (vote, used) = probe(items, ranked.members(lo), k, oracle, rng);
        probes += 1;
        labels += used;
        vote
    };
    Ok(SearchOutcome {
        boundary: lo,
        boundary_label,
        probes,
        labels,
    })
}

/// Output of [`adgac`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedLabels {
    /// One label per input item, in input order.
    pub labels: Vec<Label>,
    /// `None` for an empty pool.
    pub search: Option<SearchOutcome>,
    pub ranked: RankedGroups,
    pub comparisons: u64,
}

impl PredictedLabels {
    pub fn label_queries(&self) -> u64 {
        self.search.map_or(0, |s| s.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Labels `items` using both oracles.
///
/// `n` is the size of the ambient sample `items` was drawn from; groups have
/// `epsilon n / 2` members.
pub fn adgac<T, O, R>(
    items: &[&T],
    n: usize,
    epsilon: f64,
    k: usize,
    oracle: &mut O,
    rng: &mut R,
) -> Result<PredictedLabels>
where
    T: ?Sized,
    O: LabelOracle<T> + ComparisonOracle<T> + ?Sized,
    R: Rng + ?Sized,
{
    let params = AdgacParams::new(n, items.len(), epsilon, k)?;
    if items.is_empty() {
        return Ok(PredictedLabels {
            labels: Vec::new(),
            search: None,
            ranked: RankedGroups {
                order: Vec::new(),
                groups: Vec::new(),
            },
            comparisons: 0,
        });
    }
    let (order, comparisons) = noisy_quicksort(items, oracle, rng);
    let ranked = partition_groups(order, &params)?;
    let search = group_binary_search(items, &ranked, k, oracle, rng)?;
    let mut labels = vec![Label::Neg; items.len()];
    for (gi, _) in ranked.groups.iter().enumerate() {
        let y = match gi.cmp(&search.boundary) {
            std::cmp::Ordering::Less => Label::Neg,
            std::cmp::Ordering::Greater => Label::Pos,
            std::cmp::Ordering::Equal => search.boundary_label,
        };
        for &i in ranked.members(gi) {
            labels[i] = y;
        }
    }
    Ok(PredictedLabels {
        labels,
        search: Some(search),
        ranked,
        comparisons,
    })
}

/// Ground-truth statistics of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupDiagnostic {
    /// Majority Bayes label `sign(sum h*)`, ties positive.
    pub majority: Label,
    /// Fraction of members disagreeing with `majority`.
    pub minority_fraction: f64,
}

/// Per-group majority and minority fraction under a ground-truth labeler.
pub fn group_diagnostics<T, F>(items: &[&T], ranked: &RankedGroups, truth: F) -> Vec<GroupDiagnostic>
where
    T: ?Sized,
    F: Fn(&T) -> Label,
{
    (0..ranked.len())
        .map(|g| {
            let members = ranked.members(g);
            let pos = members.iter().filter(|&&i| truth(items[i]).is_pos()).count();
            let neg = members.len() - pos;
            let majority = Label::from_bool(pos >= neg);
            let minority = if majority.is_pos() { neg } else { pos };
            GroupDiagnostic {
                majority,
                minority_fraction: minority as f64 / members.len() as f64,
            }
        })
        .collect()
}

/// Number of predicted labels that differ from the ground truth.
pub fn mismatches<T, F>(items: &[&T], labels: &[Label], truth: F) -> usize
where
    T: ?Sized,
    F: Fn(&T) -> Label,
{
    items
        .iter()
        .zip(labels)
        .filter(|(x, y)| truth(x) != **y)
        .count()
}

fn check_k_domain(epsilon: f64, delta: f64, c3: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(format!("epsilon must be in (0, 1/2), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(c3 > 0.0 && c3.is_finite()) {
        return Err(Error::invalid(format!("C3 must be positive, got {c3}")));
    }
    Ok(())
}

fn ceil_count(v: f64) -> usize {
    // `as` saturates for values beyond usize::MAX.
    (v.ceil() as usize).max(1)
}

/// Label batch under Tsybakov label noise:
/// `ceil(C3 ln(ln(1/epsilon)/delta) (1/epsilon)^(2 kappa - 2))`, at least 1.
pub fn k_tnc(epsilon: f64, delta: f64, kappa: f64, c3: f64) -> Result<usize> {
    check_k_domain(epsilon, delta, c3)?;
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    let log_term = ((1.0 / epsilon).ln() / delta).ln();
    Ok(ceil_count(
        c3 * log_term * (1.0 / epsilon).powf(2.0 * kappa - 2.0),
    ))
}

/// Label batch under adversarial label noise:
/// `ceil(C3 ln(ln(1/epsilon)/delta))`, at least 1.
pub fn k_adv(epsilon: f64, delta: f64, c3: f64) -> Result<usize> {
    check_k_domain(epsilon, delta, c3)?;
    Ok(ceil_count(c3 * ((1.0 / epsilon).ln() / delta).ln()))
}
