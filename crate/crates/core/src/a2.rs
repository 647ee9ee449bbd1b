//! Disagreement-based learning over a finite class, labeling each round's
//! disagreement sample with ADGAC, plus the label-only variant used as a
//! baseline.

use rand::Rng;

use crate::adgac::{adgac, k_adv, k_tnc};
use crate::constants::TunableConstants;
use crate::error::{Error, Result};
use crate::hypothesis::{
    filter_version_space, filter_version_space_relative, HypothesisClass, LabeledDataset,
    Provenance, VersionSpace,
};
use crate::label::Label;
use crate::oracle::{ComparisonOracle, LabelNoise, LabelOracle, ScenarioSpec};
use crate::vector::Points;

/// How the label noise is treated when sizing rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Tsybakov exponent `kappa`; Massart noise is `kappa = 1`.
    Tnc { kappa: f64 },
    Adversarial,
}

impl NoiseMode {
    pub fn from_label_noise(noise: &LabelNoise) -> Self {
        match noise {
            LabelNoise::Adversarial { .. } => NoiseMode::Adversarial,
            other => NoiseMode::Tnc {
                kappa: other.kappa(),
            },
        }
    }

    /// Label batch for a target error `epsilon` and confidence `delta`.
    pub fn k(&self, epsilon: f64, delta: f64, c3: f64) -> Result<usize> {
        match *self {
            NoiseMode::Tnc { kappa } => k_tnc(epsilon, delta, kappa, c3),
            NoiseMode::Adversarial => k_adv(epsilon, delta, c3),
        }
    }
}

/// `U(n, gamma) = c0 (d ln(n/d) + ln(1/gamma)) / n`.
pub fn vc_bound_u(n: usize, gamma: f64, d: f64, c0: f64) -> Result<f64> {
    if !(d >= 1.0 && d.is_finite()) {
        return Err(Error::invalid(format!("d must be >= 1, got {d}")));
    }
    if (n as f64) < d {
        return Err(Error::invalid(format!("n = {n} must be at least d = {d}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must be in (0, 1), got {gamma}")));
    }
    if !(c0 > 0.0) {
        return Err(Error::invalid("c0 must be positive"));
    }
    let n = n as f64;
    Ok(c0 * (d * (n / d).ln() + (1.0 / gamma).ln()) / n)
}

/// Smallest `n >= d` with `U(n, gamma) <= target`.
pub fn min_n_for_bound(target: f64, gamma: f64, d: f64, c0: f64) -> Result<usize> {
    if !(target > 0.0) {
        return Err(Error::invalid("target must be positive"));
    }
    let d_min = d.ceil() as usize;
    let u = |n: usize| vc_bound_u(n, gamma, d, c0);
    if u(d_min)? <= target {
        return Ok(d_min);
    }
    // U rises up to n = d e^(1 - ln(1/gamma)/d) and falls after it, so past
    // the peak the predicate is monotone.
    let peak = d * (1.0 - (1.0 / gamma).ln() / d).exp();
    let mut lo = (peak.floor() as usize).max(d_min);
    let mut hi = lo.max(1);
    while u(hi)? > target {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .filter(|&h| h <= 1usize << 52)
            .ok_or_else(|| Error::BudgetExceeded("sample size bound does not converge".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if u(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(if u(lo)? <= target { lo } else { hi })
}

/// Per-round error targets, sample sizes and label batches.
#[derive(Debug, Clone, PartialEq)]
pub struct A2Schedule {
    /// `ceil(log2(1/epsilon))`.
    pub rounds: usize,
    /// Per-round confidence `delta / (4 log2(1/epsilon))`.
    pub gamma: f64,
    /// `epsilon_i = 2^-(i+2)` for `i = 1..=rounds`.
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
}

fn check_eps_delta(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(())
}

fn round_gamma(epsilon: f64, delta: f64) -> Result<f64> {
    let gamma = delta / (4.0 * (1.0 / epsilon).log2());
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "per-round confidence {gamma} is outside (0, 1); decrease delta or epsilon"
        )));
    }
    Ok(gamma)
}

/// Unlabeled sample size for round `round >= 1`.
pub fn choose_n_i(
    round: usize,
    epsilon: f64,
    delta: f64,
    d: f64,
    mode: NoiseMode,
    constants: &TunableConstants,
    cap: Option<usize>,
) -> Result<usize> {
    if round == 0 {
        return Err(Error::invalid("rounds are numbered from 1"));
    }
    check_eps_delta(epsilon, delta)?;
    let eps_i = 0.5f64.powi(round as i32 + 2);
    let gamma = round_gamma(epsilon, delta)?;
    let mut base = min_n_for_bound(eps_i, gamma, d, constants.c0)? as f64;
    if let NoiseMode::Tnc { kappa } = mode {
        base = base.max((1.0 / eps_i).powf(2.0 * kappa - 1.0) * (1.0 / delta).ln());
    }
    let n = (constants.a2_n_mult * base).ceil();
    match cap {
        Some(c) if n > c as f64 => Err(Error::BudgetExceeded(format!(
            "round {round} needs {n} samples, cap is {c}"
        ))),
        _ => Ok(n as usize),
    }
}

impl A2Schedule {
    pub fn new(
        epsilon: f64,
        delta: f64,
        d: f64,
        mode: NoiseMode,
        constants: &TunableConstants,
        cap: Option<usize>,
    ) -> Result<Self> {
        check_eps_delta(epsilon, delta)?;
        let rounds = ((1.0 / epsilon).log2().ceil() as usize).max(1);
        let gamma = round_gamma(epsilon, delta)?;
        let mut s = A2Schedule {
            rounds,
            gamma,
            eps: Vec::with_capacity(rounds),
            n: Vec::with_capacity(rounds),
            k: Vec::with_capacity(rounds),
        };
        for i in 1..=rounds {
            let eps_i = 0.5f64.powi(i as i32 + 2);
            s.eps.push(eps_i);
            s.n.push(choose_n_i(i, epsilon, delta, d, mode, constants, cap)?);
            s.k.push(mode.k(eps_i, gamma, constants.c3)?);
        }
        Ok(s)
    }
}

/// Inputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct A2Params {
    pub epsilon: f64,
    pub delta: f64,
    pub mode: NoiseMode,
    /// Complexity surrogate of the class (1 for thresholds).
    pub vc_dim: f64,
    pub constants: TunableConstants,
    /// Stop as soon as a single hypothesis survives.
    pub early_exit: bool,
    pub max_samples_per_round: Option<usize>,
    pub max_labels: Option<u64>,
    pub max_comparisons: Option<u64>,
}

impl A2Params {
    pub fn new(epsilon: f64, delta: f64, mode: NoiseMode, constants: TunableConstants) -> Self {
        A2Params {
            epsilon,
            delta,
            mode,
            vc_dim: 1.0,
            constants,
            early_exit: true,
            max_samples_per_round: None,
            max_labels: None,
            max_comparisons: None,
        }
    }

    pub fn schedule(&self) -> Result<A2Schedule> {
        A2Schedule::new(
            self.epsilon,
            self.delta,
            self.vc_dim,
            self.mode,
            &self.constants,
            self.max_samples_per_round,
        )
    }
}

/// One row of the per-round trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub n_i: usize,
    pub eps_i: f64,
    pub k_i: usize,
    /// `|S|`, the part of the round's sample inside the disagreement region.
    pub s_len: usize,
    /// Groups formed by ADGAC; 0 for the label-only variant or an empty `S`.
    pub groups: usize,
    pub labels: u64,
    pub comparisons: u64,
    /// `|V|` after filtering.
    pub v_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2Outcome {
    /// First surviving index.
    pub hypothesis: usize,
    pub version_space: VersionSpace,
    pub schedule: A2Schedule,
    pub trace: Vec<RoundTrace>,
    pub labels: u64,
    pub comparisons: u64,
}

impl A2Outcome {
    pub fn rounds_run(&self) -> usize {
        self.trace.len()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Labeler {
    Adgac,
    Direct,
}

/// Learns with both oracles; each round's disagreement sample is labeled by
/// ADGAC and the version space keeps `|W| err_W(h) < n_i epsilon_i`.
pub fn run_a2_adgac<C, O, R>(
    spec: &ScenarioSpec,
    class: &C,
    params: &A2Params,
    oracle: &mut O,
    rng: &mut R,
) -> Result<A2Outcome>
where
    C: HypothesisClass + ?Sized,
    O: LabelOracle<[f64]> + ComparisonOracle<[f64]> + ?Sized,
    R: Rng + ?Sized,
{
    run(spec, class, params, oracle, rng, Labeler::Adgac)
}

/// Label-only variant: every point of the disagreement sample is sent to the
/// labeling oracle. Filtering is relative to the best survivor,
/// `|W| err_W(h) - min_V |W| err_W < n_i epsilon_i`, which coincides with the
/// absolute rule on noiseless data and keeps the Bayes classifier alive
/// under label noise.
pub fn run_baseline_a2<C, O, R>(
    spec: &ScenarioSpec,
    class: &C,
    params: &A2Params,
    oracle: &mut O,
    rng: &mut R,
) -> Result<A2Outcome>
where
    C: HypothesisClass + ?Sized,
    O: LabelOracle<[f64]> + ComparisonOracle<[f64]> + ?Sized,
    R: Rng + ?Sized,
{
    run(spec, class, params, oracle, rng, Labeler::Direct)
}

fn run<C, O, R>(
    spec: &ScenarioSpec,
    class: &C,
    params: &A2Params,
    oracle: &mut O,
    rng: &mut R,
    labeler: Labeler,
) -> Result<A2Outcome>
where
    C: HypothesisClass + ?Sized,
    O: LabelOracle<[f64]> + ComparisonOracle<[f64]> + ?Sized,
    R: Rng + ?Sized,
{
    if class.is_empty() {
        return Err(Error::invalid("hypothesis class must be non-empty"));
    }
    let schedule = params.schedule()?;
    let mut v = VersionSpace::full(class);
    let mut trace = Vec::with_capacity(schedule.rounds);
    let (mut labels, mut comparisons) = (0u64, 0u64);
    for i in 0..schedule.rounds {
        if params.early_exit && v.is_singleton() {
            break;
        }
        let (n_i, eps_i, k_i) = (schedule.n[i], schedule.eps[i], schedule.k[i]);
        let sample = spec.sample_unlabeled(n_i, rng)?;
        let mut s = Points::new(spec.dim);
        for x in sample.iter().filter(|x| class.disagrees(&v, x)) {
            s.push(x);
        }
        let mut row = RoundTrace {
            round: i + 1,
            n_i,
            eps_i,
            k_i,
            s_len: s.len(),
            groups: 0,
            labels: 0,
            comparisons: 0,
            v_len: v.len(),
        };
        if !s.is_empty() {
            let items = s.rows();
            let (ys, provenance) = match labeler {
                Labeler::Adgac => {
                    let out = adgac(&items, n_i, eps_i, k_i, oracle, rng)?;
                    row.groups = out.ranked.len();
                    row.labels = out.label_queries();
                    row.comparisons = out.comparisons;
                    (out.labels, Provenance::AdgacPredicted)
                }
                Labeler::Direct => {
                    let ys: Vec<Label> = items.iter().map(|x| oracle.label(x)).collect();
                    row.labels = ys.len() as u64;
                    (ys, Provenance::OracleDirect)
                }
            };
            let w = LabeledDataset::from_parts(s, ys, provenance)?;
            let threshold = n_i as f64 * eps_i;
            v = match labeler {
                Labeler::Adgac => filter_version_space(class, &v, &w, threshold, i + 1)?,
                Labeler::Direct => filter_version_space_relative(class, &v, &w, threshold, i + 1)?,
            };
            row.v_len = v.len();
        }
        labels += row.labels;
        comparisons += row.comparisons;
        trace.push(row);
        if let Some(cap) = params.max_labels.filter(|&c| labels > c) {
            return Err(Error::BudgetExceeded(format!("{labels} labels used, cap is {cap}")));
        }
        if let Some(cap) = params.max_comparisons.filter(|&c| comparisons > c) {
            return Err(Error::BudgetExceeded(format!(
                "{comparisons} comparisons used, cap is {cap}"
            )));
        }
    }
    Ok(A2Outcome {
        hypothesis: v.first().expect("version space is never empty"),
        version_space: v,
        schedule,
        trace,
        labels,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::ThresholdGrid;
    use crate::oracle::Scenario;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn vc_bound_value() {
        let u = vc_bound_u(100, 0.1, 2.0, 1.0).unwrap();
        let expected = (2.0 * 50f64.ln() + 10f64.ln()) / 100.0;
        assert!((u - expected).abs() < 1e-15);
        assert!((u - 0.1013).abs() < 1e-4);
    }

    #[test]
    fn vc_bound_domain() {
        assert!(vc_bound_u(1, 0.1, 2.0, 1.0).is_err());
        assert!(vc_bound_u(10, 0.0, 1.0, 1.0).is_err());
        assert!(vc_bound_u(10, 1.0, 1.0, 1.0).is_err());
        assert!(vc_bound_u(10, 0.5, 0.5, 1.0).is_err());
        assert!(vc_bound_u(1, 0.99, 1.0, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn first_round_size_by_upward_scan() {
        let c = TunableConstants::default();
        let n1 = choose_n_i(1, 0.05, 0.1, 1.0, NoiseMode::Adversarial, &c, None).unwrap();
        // Independent scan with the same inequality.
        let gamma = 0.1 / (4.0 * 20f64.log2());
        let scan = (1..)
            .find(|&n: &usize| ((n as f64).ln() + (1.0 / gamma).ln()) / n as f64 <= 0.125)
            .unwrap();
        assert_eq!(n1, scan);
        assert_eq!(n1, 76);
    }

    #[test]
    fn budget_cap() {
        let c = TunableConstants::default();
        let err = choose_n_i(6, 0.01, 0.1, 1.0, NoiseMode::Adversarial, &c, Some(1000)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded(_)));
    }

    #[test]
    fn tnc_term_dominates_for_large_kappa() {
        let c = TunableConstants::default();
        let adv = choose_n_i(3, 0.05, 0.1, 1.0, NoiseMode::Adversarial, &c, None).unwrap();
        let tnc = choose_n_i(3, 0.05, 0.1, 1.0, NoiseMode::Tnc { kappa: 2.0 }, &c, None).unwrap();
        assert_eq!(tnc, (32f64.powi(3) * 10f64.ln()).ceil() as usize);
        assert!(tnc > adv);
    }

    #[test]
    fn schedule_shape() {
        let c = TunableConstants::default();
        let s = A2Schedule::new(0.05, 0.1, 1.0, NoiseMode::Tnc { kappa: 1.0 }, &c, None).unwrap();
        assert_eq!(s.rounds, 5);
        for w in s.eps.windows(2) {
            assert_eq!(w[1], w[0] / 2.0);
        }
        for w in s.n.windows(2) {
            assert!(w[1] >= 2 * w[0]);
        }
        assert_eq!(s.eps[0], 0.125);
    }

    #[test]
    fn singleton_class_needs_no_queries() {
        let sc = Scenario::new(ScenarioSpec::uniform_threshold(0.5)).unwrap();
        let g = ThresholdGrid::from_thresholds(vec![0.5]).unwrap();
        for early_exit in [true, false] {
            let mut p = A2Params::new(0.05, 0.1, NoiseMode::Tnc { kappa: 1.0 }, TunableConstants::default());
            p.early_exit = early_exit;
            let mut o = sc.oracle(rng(1));
            let out = run_a2_adgac(sc.spec(), &g, &p, &mut o, &mut rng(2)).unwrap();
            assert_eq!(out.hypothesis, 0);
            assert_eq!(o.counters().total(), 0);
            assert!(out.trace.iter().all(|r| r.s_len == 0));
            let mut o = sc.oracle(rng(1));
            run_baseline_a2(sc.spec(), &g, &p, &mut o, &mut rng(2)).unwrap();
            assert_eq!(o.counters().total(), 0);
        }
    }

    #[test]
    fn noiseless_run_keeps_truth_and_accounts_exactly() {
        let sc = Scenario::new(ScenarioSpec::uniform_threshold(0.5)).unwrap();
        let g = ThresholdGrid::unit(1001).unwrap();
        let truth = g.nearest(0.5);
        let p = A2Params::new(0.05, 0.1, NoiseMode::Tnc { kappa: 1.0 }, TunableConstants::default());
        for seed in 0..20 {
            let mut o = sc.oracle(rng(seed));
            let out = run_a2_adgac(sc.spec(), &g, &p, &mut o, &mut rng(seed + 100)).unwrap();
            assert!(out.version_space.contains(truth));
            assert!(out.version_space.as_interval().is_some());
            assert_eq!(o.counters().labels, out.labels);
            assert_eq!(o.counters().comparisons, out.comparisons);
            assert_eq!(out.trace.iter().map(|r| r.labels).sum::<u64>(), out.labels);
            for r in &out.trace {
                let bound = r.k_i as u64 * ((r.groups + 1) as f64).log2().ceil() as u64;
                assert!(r.labels <= bound);
            }
        }
    }

    #[test]
    fn baseline_never_compares() {
        let sc = Scenario::new(ScenarioSpec::uniform_threshold(0.3)).unwrap();
        let g = ThresholdGrid::unit(101).unwrap();
        let p = A2Params::new(0.1, 0.1, NoiseMode::Tnc { kappa: 1.0 }, TunableConstants::default());
        let mut o = sc.oracle(rng(3));
        let out = run_baseline_a2(sc.spec(), &g, &p, &mut o, &mut rng(4)).unwrap();
        assert_eq!(out.comparisons, 0);
        assert_eq!(o.counters().comparisons, 0);
        assert_eq!(o.counters().labels, out.labels);
        assert!(out.version_space.contains(g.nearest(0.3)));
    }

    #[test]
    fn label_budget_is_enforced() {
        let sc = Scenario::new(ScenarioSpec::uniform_threshold(0.5)).unwrap();
        let g = ThresholdGrid::unit(1001).unwrap();
        let mut p = A2Params::new(0.05, 0.1, NoiseMode::Tnc { kappa: 1.0 }, TunableConstants::default());
        p.max_labels = Some(3);
        let mut o = sc.oracle(rng(3));
        let err = run_baseline_a2(sc.spec(), &g, &p, &mut o, &mut rng(4)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded(_)));
    }

    proptest! {
        #[test]
        fn bound_decreases_past_peak(d in 1u32..20, n_mult in 3usize..1000, gamma in 0.001f64..0.999) {
            let d = d as f64;
            let n = (d.ceil() as usize) * n_mult;
            let a = vc_bound_u(n, gamma, d, 1.0).unwrap();
            let b = vc_bound_u(2 * n, gamma, d, 1.0).unwrap();
            prop_assert!(b < a);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn min_n_is_minimal(target in 0.001f64..0.5, gamma in 0.001f64..0.5, d in 1u32..5) {
            let d = d as f64;
            let n = min_n_for_bound(target, gamma, d, 1.0).unwrap();
            prop_assert!(vc_bound_u(n, gamma, d, 1.0).unwrap() <= target);
            if (n as f64) > d {
                prop_assert!(vc_bound_u(n - 1, gamma, d, 1.0).unwrap() > target);
            }
        }

        #[test]
        fn halving_eps_doubles_n(round in 1usize..8, eps in 0.001f64..0.4, delta in 0.01f64..0.5) {
            let c = TunableConstants::default();
            let a = choose_n_i(round, eps, delta, 1.0, NoiseMode::Adversarial, &c, None).unwrap();
            let b = choose_n_i(round + 1, eps, delta, 1.0, NoiseMode::Adversarial, &c, None).unwrap();
            prop_assert!(b >= 2 * a);
        }
    }
}
