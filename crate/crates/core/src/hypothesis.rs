//! Finite hypothesis classes, labeled datasets and version spaces.
//!
//! A version space is a sorted list of surviving indices into a class. The
//! threshold grid gets fast paths for the disagreement region and for
//! empirical error counts; every other class uses exact scans.

use rand::Rng;

use crate::error::{Error, Result};
use crate::label::Label;
use crate::oracle::ScenarioSpec;
use crate::vector::{dot, Points};

/// Where a label in a [`LabeledDataset`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    OracleDirect,
    AdgacPredicted,
}

/// Instances with labels and a provenance flag per label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Points,
    labels: Vec<Label>,
    provenance: Vec<Provenance>,
}

impl LabeledDataset {
    pub fn new(dim: usize) -> Self {
        LabeledDataset {
            points: Points::new(dim),
            labels: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn from_parts(points: Points, labels: Vec<Label>, provenance: Provenance) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let provenance = vec![provenance; labels.len()];
        Ok(LabeledDataset {
            points,
            labels,
            provenance,
        })
    }

    pub fn push(&mut self, x: &[f64], y: Label, p: Provenance) {
        self.points.push(x);
        self.labels.push(y);
        self.provenance.push(p);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label)> + '_ {
        self.points.iter().zip(self.labels.iter().copied())
    }
}

/// A finite, indexed set of classifiers.
pub trait HypothesisClass: Sync {
    fn len(&self) -> usize;

    fn predict(&self, h: usize, x: &[f64]) -> Label;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x in DIS(V)`: some pair of survivors disagrees on `x`.
    fn disagrees(&self, v: &VersionSpace, x: &[f64]) -> bool {
        let mut it = v.indices().iter();
        let Some(&first) = it.next() else {
            return false;
        };
        let y = self.predict(first, x);
        it.any(|&h| self.predict(h, x) != y)
    }

    /// `|W| err_W(h)` for every `h` in `survivors`, aligned with it.
    fn error_counts(&self, survivors: &[usize], data: &LabeledDataset) -> Vec<usize> {
        survivors
            .iter()
            .map(|&h| data.iter().filter(|(x, y)| self.predict(h, x) != *y).count())
            .collect()
    }
}

/// One-dimensional thresholds `h_t(x) = +1 iff x > t`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    thresholds: Vec<f64>,
}

impl ThresholdGrid {
    /// `size` equally spaced thresholds `j / (size - 1)` covering `[0, 1]`.
    pub fn unit(size: usize) -> Result<Self> {
        match size {
            0 => Err(Error::invalid("threshold grid must be non-empty")),
            1 => Ok(ThresholdGrid {
                thresholds: vec![0.5],
            }),
            _ => {
                let last = (size - 1) as f64;
                Ok(ThresholdGrid {
                    thresholds: (0..size).map(|j| j as f64 / last).collect(),
                })
            }
        }
    }

    pub fn from_thresholds(mut thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::invalid("threshold grid must be non-empty"));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        thresholds.sort_by(f64::total_cmp);
        Ok(ThresholdGrid { thresholds })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn threshold(&self, h: usize) -> f64 {
        self.thresholds[h]
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let i = self.thresholds.partition_point(|&s| s < t);
        if i == 0 {
            0
        } else if i == self.thresholds.len() || t - self.thresholds[i - 1] <= self.thresholds[i] - t {
            i - 1
        } else {
            i
        }
    }
}

impl HypothesisClass for ThresholdGrid {
    fn len(&self) -> usize {
        self.thresholds.len()
    }

    #[inline]
    fn predict(&self, h: usize, x: &[f64]) -> Label {
        Label::from_bool(x[0] > self.thresholds[h])
    }

    /// `x in (t_lo, t_hi]` over the smallest and largest survivor.
    fn disagrees(&self, v: &VersionSpace, x: &[f64]) -> bool {
        match (v.indices().first(), v.indices().last()) {
            (Some(&lo), Some(&hi)) => x[0] > self.thresholds[lo] && x[0] <= self.thresholds[hi],
            _ => false,
        }
    }

    /// Single sweep over the sorted data and sorted survivors.
    fn error_counts(&self, survivors: &[usize], data: &LabeledDataset) -> Vec<usize> {
        let mut xs: Vec<(f64, Label)> = data.iter().map(|(x, y)| (x[0], y)).collect();
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_neg = xs.iter().filter(|p| p.1 == Label::Neg).count();
        // h_t errs on positives with x <= t and negatives with x > t.
        let mut pos_below = 0usize;
        let mut neg_below = 0usize;
        let mut j = 0usize;
        survivors
            .iter()
            .map(|&h| {
                let t = self.thresholds[h];
                while j < xs.len() && xs[j].0 <= t {
                    if xs[j].1.is_pos() {
                        pos_below += 1;
                    } else {
                        neg_below += 1;
                    }
                    j += 1;
                }
                pos_below + (total_neg - neg_below)
            })
            .collect()
    }
}

/// A classifier given as a closure.
pub type BoxedClassifier = Box<dyn Fn(&[f64]) -> Label + Send + Sync>;

/// Explicit list of classifiers given as closures.
pub struct FiniteClass {
    hyps: Vec<BoxedClassifier>,
}

impl FiniteClass {
    pub fn new(hyps: Vec<BoxedClassifier>) -> Result<Self> {
        if hyps.is_empty() {
            return Err(Error::invalid("hypothesis class must be non-empty"));
        }
        Ok(FiniteClass { hyps })
    }
}

impl std::fmt::Debug for FiniteClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteClass").field("len", &self.hyps.len()).finish()
    }
}

impl HypothesisClass for FiniteClass {
    fn len(&self) -> usize {
        self.hyps.len()
    }

    fn predict(&self, h: usize, x: &[f64]) -> Label {
        (self.hyps[h])(x)
    }
}

/// Homogeneous halfspaces `sign(w . x)` with ties positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceSet {
    normals: Vec<Vec<f64>>,
}

impl HalfspaceSet {
    pub fn new(normals: Vec<Vec<f64>>) -> Result<Self> {
        let Some(d) = normals.first().map(Vec::len) else {
            return Err(Error::invalid("hypothesis class must be non-empty"));
        };
        if d == 0 || normals.iter().any(|w| w.len() != d) {
            return Err(Error::invalid("halfspace normals must share a positive dimension"));
        }
        Ok(HalfspaceSet { normals })
    }
}

impl HypothesisClass for HalfspaceSet {
    fn len(&self) -> usize {
        self.normals.len()
    }

    fn predict(&self, h: usize, x: &[f64]) -> Label {
        Label::from_score(dot(&self.normals[h], x))
    }
}

/// Sorted indices of the hypotheses that survive filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionSpace {
    survivors: Vec<usize>,
}

impl VersionSpace {
    pub fn full<C: HypothesisClass + ?Sized>(class: &C) -> Self {
        VersionSpace {
            survivors: (0..class.len()).collect(),
        }
    }

    pub fn from_indices(mut survivors: Vec<usize>) -> Result<Self> {
        if survivors.is_empty() {
            return Err(Error::invalid("version space must be non-empty"));
        }
        survivors.sort_unstable();
        survivors.dedup();
        Ok(VersionSpace { survivors })
    }

    pub fn indices(&self) -> &[usize] {
        &self.survivors
    }

    pub fn len(&self) -> usize {
        self.survivors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.survivors.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.survivors.len() == 1
    }

    /// Lowest surviving index.
    pub fn first(&self) -> Option<usize> {
        self.survivors.first().copied()
    }

    pub fn contains(&self, h: usize) -> bool {
        self.survivors.binary_search(&h).is_ok()
    }

    /// `Some((lo, hi))` when the survivors are exactly `lo..=hi`.
    pub fn as_interval(&self) -> Option<(usize, usize)> {
        let (&lo, &hi) = (self.survivors.first()?, self.survivors.last()?);
        (hi - lo + 1 == self.survivors.len()).then_some((lo, hi))
    }
}

pub fn in_disagreement_region<C: HypothesisClass + ?Sized>(
    class: &C,
    v: &VersionSpace,
    x: &[f64],
) -> bool {
    class.disagrees(v, x)
}

/// `err_W(h)`; rejects an empty dataset.
pub fn empirical_error<C: HypothesisClass + ?Sized>(
    class: &C,
    h: usize,
    data: &LabeledDataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empirical error needs a non-empty dataset"));
    }
    Ok(class.error_counts(&[h], data)[0] as f64 / data.len() as f64)
}

/// Keeps the hypotheses with `|W| err_W(h) < threshold`.
pub fn filter_version_space<C: HypothesisClass + ?Sized>(
    class: &C,
    v: &VersionSpace,
    data: &LabeledDataset,
    threshold: f64,
    round: usize,
) -> Result<VersionSpace> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("filter threshold must be >= 0, got {threshold}")));
    }
    let counts = class.error_counts(v.indices(), data);
    keep(v, &counts, |c| (c as f64) < threshold, round)
}

/// Keeps the hypotheses with `|W| err_W(h) - min_V |W| err_W < threshold`.
///
/// Identical to [`filter_version_space`] whenever the best survivor has zero
/// empirical error.
pub fn filter_version_space_relative<C: HypothesisClass + ?Sized>(
    class: &C,
    v: &VersionSpace,
    data: &LabeledDataset,
    threshold: f64,
    round: usize,
) -> Result<VersionSpace> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("filter threshold must be >= 0, got {threshold}")));
    }
    let counts = class.error_counts(v.indices(), data);
    let best = counts.iter().copied().min().unwrap_or(0);
    keep(v, &counts, |c| ((c - best) as f64) < threshold, round)
}

fn keep(
    v: &VersionSpace,
    counts: &[usize],
    pred: impl Fn(usize) -> bool,
    round: usize,
) -> Result<VersionSpace> {
    let survivors: Vec<usize> = v
        .indices()
        .iter()
        .zip(counts)
        .filter(|(_, &c)| pred(c))
        .map(|(&h, _)| h)
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptyVersionSpace { round });
    }
    Ok(VersionSpace { survivors })
}

/// Monte Carlo estimate of `Pr[DIS(V)]` with its standard error.
pub fn estimate_disagreement_mass<C, R>(
    class: &C,
    v: &VersionSpace,
    spec: &ScenarioSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    C: HypothesisClass + ?Sized,
    R: Rng + ?Sized,
{
    if n_mc == 0 {
        return Err(Error::invalid("Monte Carlo sample size must be at least 1"));
    }
    let mut buf = vec![0.0; spec.dim];
    let mut hits = 0usize;
    for _ in 0..n_mc {
        spec.sample_point_into(rng, &mut buf);
        if class.disagrees(v, &buf) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_mc as f64;
    Ok((p, (p * (1.0 - p) / n_mc as f64).sqrt()))
}

/// Estimate of the disagreement coefficient
/// `max_r Pr[DIS(B(h*, r))] / r` over the radius grid `radii`, where
/// `B(h*, r)` holds the class members within disagreement mass `r` of `truth`.
pub fn estimate_disagreement_coefficient<C, F, R>(
    class: &C,
    truth: F,
    spec: &ScenarioSpec,
    radii: &[f64],
    n_mc: usize,
    rng: &mut R,
) -> Result<f64>
where
    C: HypothesisClass + ?Sized,
    F: Fn(&[f64]) -> Label,
    R: Rng + ?Sized,
{
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::invalid("radius grid must be non-empty and positive"));
    }
    let pts = spec.sample_unlabeled(n_mc, rng)?;
    let truth_labels: Vec<Label> = pts.iter().map(&truth).collect();
    let dist: Vec<f64> = (0..class.len())
        .map(|h| {
            let wrong = pts
                .iter()
                .zip(&truth_labels)
                .filter(|(x, y)| class.predict(h, x) != **y)
                .count();
            wrong as f64 / n_mc as f64
        })
        .collect();
    // A point is in DIS(B(h*, r)) once some member of the ball disagrees
    // with h* there, i.e. iff the closest such member is within r.
    let nearest: Vec<f64> = pts
        .iter()
        .zip(&truth_labels)
        .map(|(x, y)| {
            (0..class.len())
                .filter(|&h| class.predict(h, x) != *y)
                .map(|h| dist[h])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(radii
        .iter()
        .map(|&r| nearest.iter().filter(|&&d| d <= r).count() as f64 / n_mc as f64 / r)
        .fold(0.0, f64::max))
}
