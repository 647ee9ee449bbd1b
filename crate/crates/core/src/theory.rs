//! Numerical checks of the minimax comparison-noise results: the
//! prefix/suffix inequality, the adversarial score distortion `ghat`, and
//! the best threshold classifier on top of a distorted score.
//!
//! Integrals are discretized on equal-mass quantile grids with midpoints
//! `u_i = (i - 1/2) / n`.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::label::Label;

/// Result of scanning `f(k) = x_1 + ... + x_k + y_(k+1) + ... + y_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaOutcome {
    pub min: f64,
    pub argmin: usize,
    /// The constraint level `t` used for the bound.
    pub t: f64,
    /// `sqrt(2 n t / (n + 1))`.
    pub bound: f64,
    /// `min <= bound + 1e-9`.
    pub holds: bool,
}

/// `sum_i sum_(j >= i) x_i y_j`.
pub fn lemma_constraint(x: &[f64], y: &[f64]) -> f64 {
    let mut suffix = 0.0;
    let mut total = 0.0;
    for i in (0..x.len()).rev() {
        suffix += y[i];
        total += x[i] * suffix;
    }
    total
}

/// Exact minimum of `f(k)` over `k = 0..=n`. `t` defaults to the achieved
/// constraint value; a supplied `t` must not be below it.
pub fn lemma_min_f(x: &[f64], y: &[f64], t: Option<f64>) -> Result<LemmaOutcome> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y must have the same length"));
    }
    if x.is_empty() {
        return Err(Error::invalid("the inequality needs n >= 1"));
    }
    if x.iter().chain(y).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("entries must be finite and non-negative"));
    }
    let achieved = lemma_constraint(x, y);
    let t = match t {
        Some(t) if t < achieved - 1e-12 * achieved.max(1.0) => {
            return Err(Error::invalid(format!(
                "constraint violated: sum x_i y_j = {achieved} exceeds t = {t}"
            )))
        }
        Some(t) => t,
        None => achieved,
    };
    let n = x.len();
    let mut f = y.iter().sum::<f64>();
    let (mut min, mut argmin) = (f, 0);
    for k in 1..=n {
        f += x[k - 1] - y[k - 1];
        if f < min {
            min = f;
            argmin = k;
        }
    }
    let nf = n as f64;
    let bound = (2.0 * nf * t / (nf + 1.0)).sqrt();
    Ok(LemmaOutcome {
        min,
        argmin,
        t,
        bound,
        holds: min <= bound + 1e-9,
    })
}

/// The configuration `x_i = y_i = sqrt(2t / (n(n+1)))` that attains the bound.
pub fn lemma_equality_instance(n: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let v = (2.0 * t / (n as f64 * (n as f64 + 1.0))).sqrt();
    (vec![v; n], vec![v; n])
}

/// Summary of a random battery of instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaBattery {
    pub instances: usize,
    pub violations: usize,
    /// Largest `min - bound` seen (negative when every instance holds).
    pub worst_excess: f64,
}

/// Draws `instances` problems with `n` uniform in `1..=n_max` and entries
/// uniform in `[0, 1)`, using the achieved constraint value as `t`.
pub fn lemma_random_battery<R: Rng + ?Sized>(instances: usize, n_max: usize, rng: &mut R) -> Result<LemmaBattery> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be positive"));
    }
    let mut out = LemmaBattery {
        instances,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    for _ in 0..instances {
        let n = rng.random_range(1..=n_max);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let o = lemma_min_f(&x, &y, None)?;
        out.violations += usize::from(!o.holds);
        out.worst_excess = out.worst_excess.max(o.min - o.bound);
    }
    Ok(out)
}

/// Distribution of the input `X`; the true score is `g*(x) = x - t_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreBase {
    /// `X ~ U(0, 1)`.
    Uniform { t_star: f64 },
    /// `X ~ N(0, 1)`.
    Gaussian { t_star: f64 },
}

impl ScoreBase {
    pub fn t_star(&self) -> f64 {
        match *self {
            ScoreBase::Uniform { t_star } | ScoreBase::Gaussian { t_star } => t_star,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreBase::Uniform { t_star } if !(t_star > 0.0 && t_star < 1.0) => {
                Err(Error::invalid(format!("uniform threshold must be in (0, 1), got {t_star}")))
            }
            ScoreBase::Gaussian { t_star } if !t_star.is_finite() => {
                Err(Error::invalid("gaussian threshold must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// CDF of `X`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ScoreBase::Uniform { .. } => x.clamp(0.0, 1.0),
            ScoreBase::Gaussian { .. } => std_normal().cdf(x),
        }
    }

    /// Quantile function of `X`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            ScoreBase::Uniform { .. } => u.clamp(0.0, 1.0),
            ScoreBase::Gaussian { .. } => std_normal().inverse_cdf(u),
        }
    }

    /// CDF of the score `g*(X)`.
    pub fn score_cdf(&self, s: f64) -> f64 {
        self.cdf(s + self.t_star())
    }

    pub fn score_quantile(&self, u: f64) -> f64 {
        self.quantile(u) - self.t_star()
    }

    /// `Pr[h*(X) = -1]`, the score CDF at zero.
    pub fn neg_mass(&self) -> f64 {
        self.score_cdf(0.0)
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Scores, true labels and quantile levels on an `n`-point midpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    pub u: Vec<f64>,
    pub score: Vec<f64>,
    pub labels: Vec<Label>,
}

impl QuantileGrid {
    pub fn new(base: &ScoreBase, n: usize) -> Result<Self> {
        base.validate()?;
        if n == 0 {
            return Err(Error::invalid("grid size must be positive"));
        }
        let u: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let score: Vec<f64> = u.iter().map(|&u| base.score_quantile(u)).collect();
        let labels = score.iter().map(|&s| Label::from_score(s)).collect();
        Ok(QuantileGrid { u, score, labels })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// The adversarial distortion of the true score.
///
/// With `s = sqrt(nu')`, `[a, b]` is the score interval carrying mass `s` on
/// each side of zero. Both halves are stretched linearly in quantile over the
/// whole of `[a, b]`; outside it `ghat` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GhatConstruction {
    pub base: ScoreBase,
    pub nu_prime: f64,
    /// Score-space interval.
    pub a: f64,
    pub b: f64,
    /// Quantile levels of `a`, zero and `b`.
    pub ua: f64,
    pub u0: f64,
    pub ub: f64,
}

impl GhatConstruction {
    pub fn new(base: ScoreBase, nu_prime: f64) -> Result<Self> {
        base.validate()?;
        if !(0.0..1.0).contains(&nu_prime) {
            return Err(Error::invalid(format!("nu' must be in [0, 1), got {nu_prime}")));
        }
        let s = nu_prime.sqrt();
        let u0 = base.neg_mass();
        if u0.min(1.0 - u0) < s {
            return Err(Error::invalid(format!(
                "both classes need mass at least sqrt(nu') = {s}; the smaller has {}",
                u0.min(1.0 - u0)
            )));
        }
        let (ua, ub) = (u0 - s, u0 + s);
        let (a, b) = if s == 0.0 {
            (0.0, 0.0)
        } else {
            (base.score_quantile(ua), base.score_quantile(ub))
        };
        Ok(GhatConstruction {
            base,
            nu_prime,
            a,
            b,
            ua,
            u0,
            ub,
        })
    }

    /// The interval `[a, b]` in input space.
    pub fn input_interval(&self) -> (f64, f64) {
        let t = self.base.t_star();
        (self.a + t, self.b + t)
    }

    /// `ghat` as a function of the true score.
    pub fn eval(&self, score: f64) -> f64 {
        let s = self.nu_prime.sqrt();
        if s == 0.0 || score < self.a || score > self.b {
            return score;
        }
        let u = self.base.score_cdf(score);
        let offset = if score <= 0.0 { u - self.ua } else { u - self.u0 };
        self.a + (self.b - self.a) * offset / s
    }

    /// `ghat` on a grid point, using its exact quantile level.
    pub fn eval_at_quantile(&self, u: f64, score: f64) -> f64 {
        let s = self.nu_prime.sqrt();
        if s == 0.0 || u < self.ua || u > self.ub {
            return score;
        }
        let offset = if u <= self.u0 { u - self.ua } else { u - self.u0 };
        self.a + (self.b - self.a) * offset / s
    }

    /// Distorted scores on the grid.
    pub fn values(&self, grid: &QuantileGrid) -> Vec<f64> {
        grid.u.iter().zip(&grid.score).map(|(&u, &s)| self.eval_at_quantile(u, s)).collect()
    }
}

/// `2 Pr[ghat(X) > ghat(X'), h*(X) = -1, h*(X') = +1]` as the exact double
/// sum over the grid.
pub fn comparison_error_of(ghat: &[f64], labels: &[Label]) -> Result<f64> {
    if ghat.len() != labels.len() || ghat.is_empty() {
        return Err(Error::invalid("ghat and labels must be non-empty and of equal length"));
    }
    let mut pos: Vec<f64> = ghat
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_pos())
        .map(|(v, _)| *v)
        .collect();
    pos.sort_by(f64::total_cmp);
    let inverted: u64 = ghat
        .iter()
        .zip(labels)
        .filter(|(_, l)| !l.is_pos())
        .map(|(v, _)| pos.partition_point(|p| p < v) as u64)
        .sum();
    let n = ghat.len() as f64;
    Ok(2.0 * inverted as f64 / (n * n))
}

/// Grid version for a score map `ghat(g*)`.
pub fn comparison_error_of_map<F: Fn(f64) -> f64>(ghat: F, base: &ScoreBase, n: usize) -> Result<f64> {
    let grid = QuantileGrid::new(base, n)?;
    let values: Vec<f64> = grid.score.iter().map(|&s| ghat(s)).collect();
    comparison_error_of(&values, &grid.labels)
}

/// Exact minimum of `Pr[sign(ghat - t) != h*]` over all cuts between
/// consecutive distinct values. Returns the error and a threshold achieving it.
pub fn best_threshold_error(ghat: &[f64], labels: &[Label]) -> Result<(f64, f64)> {
    if ghat.len() != labels.len() || ghat.is_empty() {
        return Err(Error::invalid("ghat and labels must be non-empty and of equal length"));
    }
    let mut idx: Vec<usize> = (0..ghat.len()).collect();
    idx.sort_by(|&i, &j| ghat[i].total_cmp(&ghat[j]));
    // Cut below everything: every negative is misclassified.
    let mut errors = labels.iter().filter(|l| !l.is_pos()).count() as i64;
    let mut best = errors;
    let mut best_t = ghat[idx[0]] - 1.0;
    let mut i = 0;
    while i < idx.len() {
        let v = ghat[idx[i]];
        while i < idx.len() && ghat[idx[i]] == v {
            errors += if labels[idx[i]].is_pos() { 1 } else { -1 };
            i += 1;
        }
        if errors < best {
            best = errors;
            best_t = if i < idx.len() {
                0.5 * (v + ghat[idx[i]])
            } else {
                v + 1.0
            };
        }
    }
    Ok((best as f64 / ghat.len() as f64, best_t))
}

/// Both sides of the minimax identity at one grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxCheck {
    pub n: usize,
    pub comparison_error: f64,
    pub threshold_error: f64,
    pub threshold: f64,
    /// `|comparison_error - nu'|`.
    pub comparison_gap: f64,
    /// `|threshold_error - sqrt(nu')|`.
    pub threshold_gap: f64,
}

pub fn minimax_check(base: ScoreBase, nu_prime: f64, n: usize) -> Result<MinimaxCheck> {
    let c = GhatConstruction::new(base, nu_prime)?;
    let grid = QuantileGrid::new(&base, n)?;
    let values = c.values(&grid);
    let comparison_error = comparison_error_of(&values, &grid.labels)?;
    let (threshold_error, threshold) = best_threshold_error(&values, &grid.labels)?;
    Ok(MinimaxCheck {
        n,
        comparison_error,
        threshold_error,
        threshold,
        comparison_gap: (comparison_error - nu_prime).abs(),
        threshold_gap: (threshold_error - nu_prime.sqrt()).abs(),
    })
}

/// Runs the check at `n` and `2n`.
pub fn minimax_refinement(base: ScoreBase, nu_prime: f64, n: usize) -> Result<(MinimaxCheck, MinimaxCheck)> {
    Ok((minimax_check(base, nu_prime, n)?, minimax_check(base, nu_prime, 2 * n)?))
}
