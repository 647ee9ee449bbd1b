//! Synthetic worlds and the two simulated oracles.
//!
//! A [`ScenarioSpec`] fixes the instance distribution, the ground-truth score
//! `g*` (with `h* = sign(g*)`, ties positive) and the noise model of each
//! oracle. [`Scenario`] is the validated, calibrated form that is shared
//! read-only between trials; each trial owns a [`SimOracle`] holding its own
//! RNG stream and [`QueryCounters`].
//!
//! Adversarial corruption of either oracle is placed in a band around the
//! decision boundary, `|g*(x)| < rho`, with `rho` calibrated so that the
//! corrupted mass matches the requested level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::label::Label;
use crate::vector::{dot, norm, Points};

/// Seed used for every calibration run so that radii are a pure function of
/// the spec.
const CALIBRATION_SEED: u64 = 0x0ad6_ac0c_a11b_4a7e;
const CALIBRATION_SAMPLES: usize = 1_000_000;
const HALFSPACE_NORM_TOL: f64 = 1e-12;

/// Marginal distribution of the instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Uniform on `[0, 1]`; one-dimensional only.
    UniformInterval,
    /// Standard normal on `R^d`, the isotropic log-concave case.
    IsotropicGaussian,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::UniformInterval => "uniform-interval",
            Distribution::IsotropicGaussian => "isotropic-gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform-interval" | "uniform" => Some(Distribution::UniformInterval),
            "isotropic-gaussian" | "gaussian" => Some(Distribution::IsotropicGaussian),
            _ => None,
        }
    }
}

/// Ground-truth score `g*`.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// `g*(x) = x - t` on the real line.
    Threshold(f64),
    /// `g*(x) = w . x` for a unit vector `w`.
    Halfspace(Vec<f64>),
}

impl GroundTruth {
    /// Halfspace truth from any non-zero direction.
    pub fn halfspace(w: &[f64]) -> Result<Self> {
        crate::vector::normalized(w)
            .map(GroundTruth::Halfspace)
            .ok_or_else(|| Error::invalid("halfspace direction must be non-zero"))
    }

    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            GroundTruth::Threshold(t) => x[0] - t,
            GroundTruth::Halfspace(w) => dot(w, x),
        }
    }

    #[inline]
    pub fn label(&self, x: &[f64]) -> Label {
        Label::from_score(self.score(x))
    }
}

/// Noise model of the labeling oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelNoise {
    /// `eta(x) = 1/2 + sign(g) min(1/2, (|g|/mu)^(kappa-1) / 2)`.
    Tsybakov { kappa: f64, mu: f64 },
    /// `eta(x) = 1/2 + sign(g) (1/2 - beta)`.
    Massart { beta: f64 },
    /// Deterministic `h*` flipped on a boundary band of mass `nu`.
    Adversarial { nu: f64 },
}

impl LabelNoise {
    pub const NONE: LabelNoise = LabelNoise::Massart { beta: 0.0 };

    /// TNC exponent implied by the model; adversarial noise is treated as
    /// the Massart-type case.
    pub fn kappa(&self) -> f64 {
        match self {
            LabelNoise::Tsybakov { kappa, .. } => *kappa,
            _ => 1.0,
        }
    }

    pub fn is_adversarial(&self) -> bool {
        matches!(self, LabelNoise::Adversarial { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LabelNoise::Tsybakov { kappa, mu } => {
                if !(kappa >= 1.0 && kappa.is_finite()) {
                    return Err(Error::invalid(format!("tsybakov kappa must be >= 1, got {kappa}")));
                }
                if !(mu > 0.0 && mu.is_finite()) {
                    return Err(Error::invalid(format!("tsybakov mu must be > 0, got {mu}")));
                }
            }
            LabelNoise::Massart { beta } => {
                if !(0.0..0.5).contains(&beta) {
                    return Err(Error::invalid(format!("massart beta must be in [0, 1/2), got {beta}")));
                }
            }
            LabelNoise::Adversarial { nu } => {
                if !(0.0..1.0).contains(&nu) {
                    return Err(Error::invalid(format!("adversarial nu must be in [0, 1), got {nu}")));
                }
            }
        }
        Ok(())
    }
}

/// Noise model of the comparison oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComparisonNoise {
    Perfect,
    /// Cross-boundary pairs inside `|g*| < rho'` are answered inverted;
    /// `rho'` is calibrated so the flipped-pair probability is `nu_prime`.
    BandAdversarial { nu_prime: f64 },
}

impl ComparisonNoise {
    pub fn nu_prime(&self) -> f64 {
        match self {
            ComparisonNoise::Perfect => 0.0,
            ComparisonNoise::BandAdversarial { nu_prime } => *nu_prime,
        }
    }
}

/// Full description of a synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub dist: Distribution,
    pub dim: usize,
    pub truth: GroundTruth,
    pub label_noise: LabelNoise,
    pub comparison_noise: ComparisonNoise,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Uniform `[0, 1]` instances with threshold truth `t`, noiseless oracles.
    pub fn uniform_threshold(t: f64) -> Self {
        ScenarioSpec {
            dist: Distribution::UniformInterval,
            dim: 1,
            truth: GroundTruth::Threshold(t),
            label_noise: LabelNoise::NONE,
            comparison_noise: ComparisonNoise::Perfect,
            seed: 0,
        }
    }

    /// Isotropic gaussian instances in `R^dim` with a halfspace truth along
    /// the first axis, noiseless oracles.
    pub fn gaussian_halfspace(dim: usize) -> Self {
        let mut w = vec![0.0; dim.max(1)];
        w[0] = 1.0;
        ScenarioSpec {
            dist: Distribution::IsotropicGaussian,
            dim,
            truth: GroundTruth::Halfspace(w),
            label_noise: LabelNoise::NONE,
            comparison_noise: ComparisonNoise::Perfect,
            seed: 0,
        }
    }

    pub fn with_label_noise(mut self, noise: LabelNoise) -> Self {
        self.label_noise = noise;
        self
    }

    pub fn with_comparison_noise(mut self, noise: ComparisonNoise) -> Self {
        self.comparison_noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        match (&self.dist, &self.truth) {
            (Distribution::UniformInterval, GroundTruth::Threshold(t)) => {
                if self.dim != 1 {
                    return Err(Error::invalid("uniform-interval requires dimension 1"));
                }
                if !(0.0..=1.0).contains(t) {
                    return Err(Error::invalid("threshold must lie in [0, 1]"));
                }
            }
            (Distribution::UniformInterval, GroundTruth::Halfspace(_)) => {
                return Err(Error::invalid("uniform-interval requires a threshold ground truth"));
            }
            (Distribution::IsotropicGaussian, GroundTruth::Threshold(t)) => {
                if self.dim != 1 {
                    return Err(Error::invalid("threshold ground truth requires dimension 1"));
                }
                if !t.is_finite() {
                    return Err(Error::invalid("threshold must be finite"));
                }
            }
            (Distribution::IsotropicGaussian, GroundTruth::Halfspace(w)) => {
                if w.len() != self.dim {
                    return Err(Error::invalid(format!(
                        "halfspace has {} coordinates, expected {}",
                        w.len(),
                        self.dim
                    )));
                }
                if (norm(w) - 1.0).abs() > HALFSPACE_NORM_TOL {
                    return Err(Error::invalid("halfspace normal must be a unit vector"));
                }
            }
        }
        self.label_noise.validate()?;
        let nu_prime = self.comparison_noise.nu_prime();
        if !(0.0..1.0).contains(&nu_prime) {
            return Err(Error::invalid(format!("nu' must be in [0, 1), got {nu_prime}")));
        }
        Ok(())
    }

    /// Draws one instance into `out`.
    pub fn sample_point_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.dist {
            Distribution::UniformInterval => out[0] = rng.random::<f64>(),
            Distribution::IsotropicGaussian => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
        }
    }

    /// Draws `g*(X)` directly; equal in law to scoring a sampled instance.
    pub fn sample_score<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (&self.dist, &self.truth) {
            (Distribution::UniformInterval, GroundTruth::Threshold(t)) => rng.random::<f64>() - t,
            (Distribution::IsotropicGaussian, GroundTruth::Threshold(t)) => {
                rng.sample::<f64, _>(StandardNormal) - t
            }
            // w . X ~ N(0, |w|^2) = N(0, 1) for a unit w.
            (Distribution::IsotropicGaussian, GroundTruth::Halfspace(_)) => {
                rng.sample(StandardNormal)
            }
            (Distribution::UniformInterval, GroundTruth::Halfspace(w)) => {
                rng.random::<f64>() * w[0]
            }
        }
    }

    /// Upper bound on the density of `g*(X)`.
    pub fn score_density_bound(&self) -> f64 {
        match self.dist {
            Distribution::UniformInterval => 1.0,
            Distribution::IsotropicGaussian => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }

    /// `n` i.i.d. draws from the marginal.
    pub fn sample_unlabeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Points> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let mut pts = Points::with_capacity(self.dim, n);
        let mut buf = vec![0.0; self.dim];
        for _ in 0..n {
            self.sample_point_into(rng, &mut buf);
            pts.push(&buf);
        }
        Ok(pts)
    }
}

/// Which probability a band radius is calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandTarget {
    /// `Pr[|g*(X)| < rho]`.
    Label,
    /// `Pr[|g*(X)| < rho, |g*(X')| < rho, h*(X) != h*(X')]`.
    ComparisonPairs,
}

/// Finds the band radius whose probability under `spec` equals `target`.
///
/// The probability is estimated on a fixed Monte Carlo sample of `g*(X)`
/// and the radius located by bisection, so the result is deterministic and
/// accurate to the sample resolution (well below `1e-3` in mass).
pub fn calibrate_band(spec: &ScenarioSpec, target: f64, kind: BandTarget) -> Result<f64> {
    if !(0.0..1.0).contains(&target) || target.is_nan() {
        return Err(Error::invalid(format!("target mass must be in [0, 1), got {target}")));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for _ in 0..CALIBRATION_SAMPLES {
        let g = spec.sample_score(&mut rng);
        if g >= 0.0 {
            pos.push(g);
        } else {
            neg.push(-g);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let total = CALIBRATION_SAMPLES as f64;
    let below = |v: &[f64], r: f64| v.partition_point(|&a| a < r) as f64 / total;
    let mass = |r: f64| match kind {
        BandTarget::Label => below(&pos, r) + below(&neg, r),
        BandTarget::ComparisonPairs => 2.0 * below(&pos, r) * below(&neg, r),
    };
    let hi_r = pos.last().copied().unwrap_or(0.0).max(neg.last().copied().unwrap_or(0.0)) * (1.0 + 1e-9) + 1e-12;
    let max = mass(hi_r);
    if target >= max {
        return Err(Error::Calibration { target, max });
    }
    let (mut lo, mut hi) = (0.0, hi_r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(hi)
}

/// A validated spec together with its calibrated corruption radii.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    label_radius: f64,
    comparison_radius: f64,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let label_radius = match spec.label_noise {
            LabelNoise::Adversarial { nu } => calibrate_band(&spec, nu, BandTarget::Label)?,
            _ => 0.0,
        };
        let comparison_radius = match spec.comparison_noise {
            ComparisonNoise::Perfect => 0.0,
            ComparisonNoise::BandAdversarial { nu_prime } => {
                calibrate_band(&spec, nu_prime, BandTarget::ComparisonPairs)?
            }
        };
        Ok(Scenario {
            spec,
            label_radius,
            comparison_radius,
        })
    }

    #[inline]
    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn label_radius(&self) -> f64 {
        self.label_radius
    }

    pub fn comparison_radius(&self) -> f64 {
        self.comparison_radius
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        self.spec.truth.score(x)
    }

    /// Bayes-optimal label `h*(x)`.
    #[inline]
    pub fn truth(&self, x: &[f64]) -> Label {
        self.spec.truth.label(x)
    }

    /// Conditional probability `Pr[Y = +1 | X = x]` of the labeling oracle.
    pub fn eta(&self, x: &[f64]) -> f64 {
        let g = self.score(x);
        let s = if g > 0.0 {
            1.0
        } else if g < 0.0 {
            -1.0
        } else {
            0.0
        };
        match self.spec.label_noise {
            LabelNoise::Tsybakov { kappa, mu } => {
                // kappa = 1 is the noiseless Massart limit; computing it via
                // powf would hit 0^0 at the boundary.
                let half_gap = if kappa == 1.0 {
                    0.5
                } else {
                    (0.5 * (g.abs() / mu).powf(kappa - 1.0)).min(0.5)
                };
                0.5 + s * half_gap
            }
            LabelNoise::Massart { beta } => 0.5 + s * (0.5 - beta),
            LabelNoise::Adversarial { .. } => {
                let y = if g.abs() < self.label_radius {
                    self.truth(x).flip()
                } else {
                    self.truth(x)
                };
                if y.is_pos() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Constant `C` with `Pr[|eta(X) - 1/2| < t] <= C t^(1/(kappa-1))` for the
    /// Tsybakov generator; `None` for other noise kinds or `kappa = 1`.
    pub fn tnc_equivalent_constant(&self) -> Option<f64> {
        match self.spec.label_noise {
            LabelNoise::Tsybakov { kappa, mu } if kappa > 1.0 => {
                let p = 1.0 / (kappa - 1.0);
                Some(2.0 * self.spec.score_density_bound() * mu * 2f64.powf(p))
            }
            _ => None,
        }
    }

    pub fn sample_unlabeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Points> {
        self.spec.sample_unlabeled(n, rng)
    }

    /// A fresh oracle pair with its own RNG stream and zeroed counters.
    pub fn oracle(&self, rng: ChaCha8Rng) -> SimOracle<'_> {
        SimOracle {
            scenario: self,
            rng,
            counters: QueryCounters::default(),
        }
    }
}

/// Number of oracle invocations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCounters {
    pub labels: u64,
    pub comparisons: u64,
}

impl QueryCounters {
    pub fn total(&self) -> u64 {
        self.labels + self.comparisons
    }
}

impl std::ops::Sub for QueryCounters {
    type Output = QueryCounters;

    fn sub(self, rhs: QueryCounters) -> QueryCounters {
        QueryCounters {
            labels: self.labels - rhs.labels,
            comparisons: self.comparisons - rhs.comparisons,
        }
    }
}

/// Answers `Y in {-1, +1}` for a single instance.
pub trait LabelOracle<T: ?Sized> {
    fn label(&mut self, x: &T) -> Label;
}

/// Answers `Z(a, b)`: `+1` when `a` is judged more likely positive than `b`.
pub trait ComparisonOracle<T: ?Sized> {
    fn compare(&mut self, a: &T, b: &T) -> Label;
}

impl<T: ?Sized, O: LabelOracle<T> + ?Sized> LabelOracle<T> for &mut O {
    fn label(&mut self, x: &T) -> Label {
        (**self).label(x)
    }
}

impl<T: ?Sized, O: ComparisonOracle<T> + ?Sized> ComparisonOracle<T> for &mut O {
    fn compare(&mut self, a: &T, b: &T) -> Label {
        (**self).compare(a, b)
    }
}

/// Both simulated oracles for one trial.
#[derive(Debug, Clone)]
pub struct SimOracle<'a> {
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    counters: QueryCounters,
}

impl<'a> SimOracle<'a> {
    pub fn counters(&self) -> QueryCounters {
        self.counters
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }
}

impl LabelOracle<[f64]> for SimOracle<'_> {
    fn label(&mut self, x: &[f64]) -> Label {
        self.counters.labels += 1;
        let sc = self.scenario;
        match sc.spec.label_noise {
            LabelNoise::Adversarial { .. } => {
                let truth = sc.truth(x);
                if sc.score(x).abs() < sc.label_radius {
                    truth.flip()
                } else {
                    truth
                }
            }
            _ => {
                let eta = sc.eta(x);
                Label::from_bool(self.rng.random::<f64>() < eta)
            }
        }
    }
}

impl ComparisonOracle<[f64]> for SimOracle<'_> {
    fn compare(&mut self, a: &[f64], b: &[f64]) -> Label {
        self.counters.comparisons += 1;
        let sc = self.scenario;
        let (ga, gb) = (sc.score(a), sc.score(b));
        let answer = Label::from_score(ga - gb);
        let rho = sc.comparison_radius;
        if ga.abs() < rho && gb.abs() < rho && Label::from_score(ga) != Label::from_score(gb) {
            answer.flip()
        } else {
            answer
        }
    }
}
