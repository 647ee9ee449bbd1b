//! Margin-based halfspace learning with ADGAC labeling.
//!
//! Each round minimizes the `tau`-scaled hinge loss over a ball around the
//! previous direction, normalizes, and labels a fresh sample restricted to
//! the margin band `|w . x| <= b` with ADGAC.

use rand::Rng;

use crate::adgac::adgac;
use crate::a2::NoiseMode;
use crate::constants::TunableConstants;
use crate::error::{Error, Result};
use crate::hypothesis::{LabeledDataset, Provenance};
use crate::label::Label;
use crate::oracle::{ComparisonOracle, LabelOracle, ScenarioSpec};
use crate::vector::{distance, dot, norm, normalized, Points};

/// A unit normal vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    w: Vec<f64>,
}

impl Halfspace {
    pub fn new(w: &[f64]) -> Result<Self> {
        normalized(w)
            .map(|w| Halfspace { w })
            .ok_or_else(|| Error::invalid("halfspace normal must be non-zero"))
    }

    pub fn normal(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        Label::from_score(dot(&self.w, x))
    }
}

/// `|w . x| <= b`.
pub fn band_membership(w: &[f64], x: &[f64], b: f64) -> bool {
    dot(w, x).abs() <= b
}

/// `max(0, 1 - y (w . x) / tau)`.
pub fn hinge_loss(w: &[f64], x: &[f64], y: Label, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    Ok(hinge(w, x, y.as_f64(), tau))
}

#[inline]
fn hinge(w: &[f64], x: &[f64], y: f64, tau: f64) -> f64 {
    (1.0 - y * dot(w, x) / tau).max(0.0)
}

/// Mean hinge loss over `data`.
pub fn batch_hinge_loss(w: &[f64], data: &LabeledDataset, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if data.is_empty() {
        return Err(Error::invalid("hinge loss needs a non-empty dataset"));
    }
    Ok(loss_and_subgradient(w, data, tau, None))
}

/// Batch loss; writes a subgradient into `grad` when given.
fn loss_and_subgradient(w: &[f64], data: &LabeledDataset, tau: f64, mut grad: Option<&mut [f64]>) -> f64 {
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let n = data.len() as f64;
    let mut total = 0.0;
    for (x, y) in data.iter() {
        let y = y.as_f64();
        let l = 1.0 - y * dot(w, x) / tau;
        if l > 0.0 {
            total += l;
            if let Some(g) = grad.as_deref_mut() {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi -= y * xi / (tau * n);
                }
            }
        }
    }
    total / n
}

/// Analytic subgradient of the batch hinge loss.
pub fn batch_hinge_subgradient(w: &[f64], data: &LabeledDataset, tau: f64) -> Result<Vec<f64>> {
    batch_hinge_loss(w, data, tau)?;
    let mut g = vec![0.0; w.len()];
    loss_and_subgradient(w, data, tau, Some(&mut g));
    Ok(g)
}

/// Euclidean projection onto `B(center, r) ∩ B(0, 1)` for a unit `center`.
pub fn project_two_balls(y: &[f64], center: &[f64], r: f64) -> Vec<f64> {
    let in_unit = |v: &[f64]| norm(v) <= 1.0;
    let in_ball = |v: &[f64]| distance(v, center) <= r;
    if in_unit(y) && in_ball(y) {
        return y.to_vec();
    }
    let to_unit: Vec<f64> = {
        let n = norm(y);
        if n > 1.0 {
            y.iter().map(|v| v / n).collect()
        } else {
            y.to_vec()
        }
    };
    if in_ball(&to_unit) || r >= 2.0 {
        return to_unit;
    }
    let to_ball: Vec<f64> = {
        let d = distance(y, center);
        if d > r {
            center.iter().zip(y).map(|(c, v)| c + r * (v - c) / d).collect()
        } else {
            y.to_vec()
        }
    };
    if in_unit(&to_ball) {
        return to_ball;
    }
    // Nearest point of the sphere intersection {|x| = 1, |x - c| = r}:
    // the circle x . c = 1 - r^2 / 2 of radius sqrt(1 - a^2) around a c.
    let a = 1.0 - r * r / 2.0;
    let rho = (1.0 - a * a).max(0.0).sqrt();
    let yc = dot(y, center);
    let mut u: Vec<f64> = y.iter().zip(center).map(|(v, c)| v - yc * c).collect();
    let un = norm(&u);
    if un <= 1e-300 {
        // y lies on the axis; every point of the circle is nearest.
        u = vec![0.0; y.len()];
        let j = (0..y.len())
            .min_by(|&i, &k| center[i].abs().total_cmp(&center[k].abs()))
            .unwrap_or(0);
        u[j] = 1.0;
        let uc = dot(&u, center);
        for (ui, ci) in u.iter_mut().zip(center) {
            *ui -= uc * ci;
        }
        let n = norm(&u);
        u.iter_mut().for_each(|v| *v /= n);
    } else {
        u.iter_mut().for_each(|v| *v /= un);
    }
    center.iter().zip(&u).map(|(c, ui)| a * c + rho * ui).collect()
}

/// Output of a hinge minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeResult {
    pub v: Vec<f64>,
    pub loss: f64,
    /// Certified upper bound on `loss - min`; infinite when unknown.
    pub gap_bound: f64,
    pub iterations: usize,
    /// The iteration budget ran out before the gap reached the tolerance.
    pub degraded: bool,
}

fn check_hinge_inputs(data: &LabeledDataset, w_prev: &[f64], r: f64, tau: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("hinge minimization needs a non-empty dataset"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {r}")));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if w_prev.len() != data.dim() {
        return Err(Error::invalid("w_prev dimension does not match the data"));
    }
    if (norm(w_prev) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("w_prev must be a unit vector"));
    }
    Ok(())
}

/// Minimizes the batch hinge loss over `B(w_prev, r) ∩ B(0, 1)` with the
/// central-cut ellipsoid method.
///
/// Every feasible center `x` with subgradient `g` certifies the lower bound
/// `f(x) - sqrt(g' P g)` on the minimum, so the run stops once the best
/// feasible loss is within `tol` of the best lower bound.
pub fn minimize_hinge(
    data: &LabeledDataset,
    w_prev: &[f64],
    r: f64,
    tau: f64,
    tol: f64,
    max_iters: usize,
) -> Result<HingeResult> {
    check_hinge_inputs(data, w_prev, r, tau)?;
    let d = w_prev.len();
    if d == 1 {
        return Ok(minimize_hinge_1d(data, w_prev[0], r, tau, tol, max_iters));
    }
    let feasible = |x: &[f64]| norm(x) <= 1.0 && distance(x, w_prev) <= r;
    let (mut x, radius) = if r < 1.0 {
        (w_prev.to_vec(), r)
    } else {
        (vec![0.0; d], 1.0)
    };
    // P is the shape matrix of {y : (y - x)' P^-1 (y - x) <= 1}.
    let mut p = vec![0.0; d * d];
    for i in 0..d {
        p[i * d + i] = radius * radius * (1.0 + 1e-9);
    }
    let mut best_v = w_prev.to_vec();
    let mut best = loss_and_subgradient(w_prev, data, tau, None);
    let mut lower = f64::NEG_INFINITY;
    let mut g = vec![0.0; d];
    let mut pg = vec![0.0; d];
    let df = d as f64;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        if feasible(&x) {
            let f = loss_and_subgradient(&x, data, tau, Some(&mut g));
            if f < best {
                best = f;
                best_v.clone_from(&x);
            }
            let gn = norm(&g);
            if gn == 0.0 {
                lower = lower.max(f);
            }
        } else if norm(&x) > 1.0 {
            g.clone_from(&x);
        } else {
            g.iter_mut().zip(x.iter().zip(w_prev)).for_each(|(gi, (xi, ci))| *gi = xi - ci);
        }
        for i in 0..d {
            pg[i] = (0..d).map(|j| p[i * d + j] * g[j]).sum();
        }
        let gpg = dot(&g, &pg);
        if !(gpg > 0.0) || !gpg.is_finite() {
            break;
        }
        let width = gpg.sqrt();
        if feasible(&x) {
            let f = loss_and_subgradient(&x, data, tau, None);
            lower = lower.max(f - width);
        }
        if best - lower <= tol {
            break;
        }
        for i in 0..d {
            x[i] -= pg[i] / (width * (df + 1.0));
        }
        let scale = df * df / (df * df - 1.0);
        let shrink = 2.0 / ((df + 1.0) * gpg);
        for i in 0..d {
            for j in 0..d {
                p[i * d + j] = scale * (p[i * d + j] - shrink * pg[i] * pg[j]);
            }
        }
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (p[i * d + j] + p[j * d + i]);
                p[i * d + j] = s;
                p[j * d + i] = s;
            }
        }
    }
    let gap = best - lower;
    Ok(HingeResult {
        v: best_v,
        loss: best,
        gap_bound: gap,
        iterations,
        degraded: !(gap <= tol),
    })
}

fn minimize_hinge_1d(
    data: &LabeledDataset,
    c: f64,
    r: f64,
    tau: f64,
    tol: f64,
    max_iters: usize,
) -> HingeResult {
    let (mut lo, mut hi) = ((c - r).max(-1.0), (c + r).min(1.0));
    let f = |v: f64| loss_and_subgradient(&[v], data, tau, None);
    let slope = |v: f64| {
        let mut g = [0.0];
        loss_and_subgradient(&[v], data, tau, Some(&mut g));
        g[0]
    };
    let mut iterations = 0;
    while iterations < max_iters && hi - lo > 1e-15 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let candidates = [lo, hi, c];
    let (v, loss) = candidates
        .iter()
        .map(|&v| (v, f(v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    // Lipschitz bound over the final bracket.
    let lip = data.iter().map(|(x, _)| x[0].abs()).sum::<f64>() / (tau * data.len() as f64);
    let gap = lip * (hi - lo);
    HingeResult {
        v: vec![v],
        loss,
        gap_bound: gap,
        iterations,
        degraded: !(gap <= tol),
    }
}

/// Projected subgradient descent over `B(w_prev, r) ∩ B(0, 1)` with steps
/// `D / (|g| sqrt(t + 1))`, keeping the best iterate.
pub fn minimize_hinge_subgradient(
    data: &LabeledDataset,
    w_prev: &[f64],
    r: f64,
    tau: f64,
    iters: usize,
) -> Result<HingeResult> {
    check_hinge_inputs(data, w_prev, r, tau)?;
    let diameter = (2.0 * r).min(2.0);
    let mut x = w_prev.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut best_v = x.clone();
    let mut best = f64::INFINITY;
    for t in 0..iters {
        let f = loss_and_subgradient(&x, data, tau, Some(&mut g));
        if f < best {
            best = f;
            best_v.clone_from(&x);
        }
        let gn = norm(&g);
        if gn == 0.0 {
            break;
        }
        let step = diameter / (gn * ((t + 1) as f64).sqrt());
        let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        x = project_two_balls(&y, w_prev, r);
    }
    Ok(HingeResult {
        v: best_v,
        loss: best,
        gap_bound: f64::INFINITY,
        iterations: iters,
        degraded: false,
    })
}

/// Parameters of one round of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSchedule {
    pub k: usize,
    /// `b_(k-1)`, the band the round's training set was drawn from.
    pub b_prev: f64,
    pub b: f64,
    pub r: f64,
    pub tau: f64,
    pub z2: f64,
    pub eps: f64,
    /// Unlabeled sample size drawn in this round.
    pub n: usize,
    /// ADGAC label batch.
    pub batch: usize,
}

/// Full parameter schedule; `rounds[0]` is the initial labeling round.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSchedule {
    pub m: f64,
    pub kappa_prec: f64,
    /// Number of hinge rounds `s = ceil(ln(4 / epsilon))`.
    pub s: usize,
    pub delta_prime: f64,
    pub rounds: Vec<RoundSchedule>,
}

impl MarginSchedule {
    pub fn new(
        epsilon: f64,
        delta: f64,
        dim: usize,
        mode: NoiseMode,
        c: &TunableConstants,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must be in (0, 1), got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let [c1, c2, c3, c4, _, _] = c.lc;
        let c1p = c.lc_c1_prime;
        let m = (2.0 / (c2 * std::f64::consts::PI)).max(2.0);
        let kappa_prec = 1.0 / (4.0 * c1p * m);
        let s = ((4.0 / epsilon).ln().ceil() as usize).max(1);
        let delta_prime = delta / (8.0 * (1.0 / epsilon).log2().max(1.0));
        let d = dim as f64;
        let b_at = |k: i32| c1p * m.powi(-k);
        let sample_size = |k: usize| -> f64 {
            let kk = k.max(1) as f64;
            let mut n = (1.0 / b_at(k as i32)) * d * (d * kk / delta).ln().max(1.0).powi(3);
            if let NoiseMode::Tnc { kappa } = mode {
                n = n.max((1.0 / epsilon).powf(2.0 * kappa - 1.0) * (1.0 / delta).ln());
            }
            (c.margin_n_mult * n).ceil()
        };
        let mut rounds = Vec::with_capacity(s + 1);
        for k in 0..=s {
            let b_prev = b_at(k as i32 - 1);
            let b = b_at(k as i32);
            let r = (m.powi(-(k as i32 - 1)) / c2).min(std::f64::consts::FRAC_PI_2);
            let tau = c1 * b_prev.min(1.0 / 9.0) * kappa_prec / 6.0;
            let z2 = r * r + b_prev * b_prev;
            let eps = c3 * tau * tau * b * kappa_prec * kappa_prec / (256.0 * c4 * z2);
            // The initial round draws the first round's sample size.
            let n = sample_size(k.max(1));
            if !(n.is_finite() && n < (1u64 << 52) as f64) {
                return Err(Error::BudgetExceeded(format!("round {k} sample size {n} is too large")));
            }
            let batch = mode.k(eps.min(0.49), delta_prime, c.c3)?;
            rounds.push(RoundSchedule {
                k,
                b_prev,
                b,
                r,
                tau,
                z2,
                eps,
                n: n as usize,
                batch,
            });
        }
        Ok(MarginSchedule {
            m,
            kappa_prec,
            s,
            delta_prime,
            rounds,
        })
    }
}

/// Inputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginParams {
    pub epsilon: f64,
    pub delta: f64,
    pub mode: NoiseMode,
    pub constants: TunableConstants,
    pub max_samples_per_round: Option<usize>,
}

impl MarginParams {
    pub fn new(epsilon: f64, delta: f64, mode: NoiseMode, constants: TunableConstants) -> Self {
        MarginParams {
            epsilon,
            delta,
            mode,
            constants,
            max_samples_per_round: None,
        }
    }

    pub fn schedule(&self, dim: usize) -> Result<MarginSchedule> {
        let s = MarginSchedule::new(self.epsilon, self.delta, dim, self.mode, &self.constants)?;
        if let Some(cap) = self.max_samples_per_round {
            if let Some(r) = s.rounds.iter().find(|r| r.n > cap) {
                return Err(Error::BudgetExceeded(format!(
                    "round {} needs {} samples, cap is {cap}",
                    r.k, r.n
                )));
            }
        }
        Ok(s)
    }
}

/// One row of the per-round trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTrace {
    pub k: usize,
    pub b: f64,
    pub r: f64,
    pub tau: f64,
    pub z2: f64,
    pub eps: f64,
    /// Size of the band sample labeled in this round (0 when skipped).
    pub s_len: usize,
    /// Hinge loss reached (NaN for the initial round).
    pub loss: f64,
    pub labels: u64,
    pub comparisons: u64,
    pub degraded: bool,
    /// `|v_k - w_(k-1)|` (0 for the initial round).
    pub step: f64,
    pub hinge_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginOutcome {
    pub w: Halfspace,
    pub schedule: MarginSchedule,
    pub trace: Vec<MarginTrace>,
    pub labels: u64,
    pub comparisons: u64,
    /// Some hinge minimization missed its certified tolerance.
    pub degraded: bool,
}

/// Start direction: the hinge minimizer over the unit ball on a batch of
/// oracle-direct labels. Returns it with the number of labels spent.
pub fn seed_direction<O, R>(
    spec: &ScenarioSpec,
    params: &MarginParams,
    oracle: &mut O,
    rng: &mut R,
) -> Result<(Halfspace, u64)>
where
    O: LabelOracle<[f64]> + ?Sized,
    R: Rng + ?Sized,
{
    let schedule = params.schedule(spec.dim)?;
    let count = params.constants.margin_seed_labels;
    let pts = spec.sample_unlabeled(count, rng)?;
    let ys: Vec<Label> = pts.iter().map(|x| oracle.label(x)).collect();
    let data = LabeledDataset::from_parts(pts, ys, Provenance::OracleDirect)?;
    let mut anchor = vec![0.0; spec.dim];
    anchor[0] = 1.0;
    let tau = schedule.rounds[1].tau;
    let res = minimize_hinge(
        &data,
        &anchor,
        2.0,
        tau,
        schedule.kappa_prec / 64.0,
        params.constants.hinge_iters,
    )?;
    let w = Halfspace::new(&res.v).unwrap_or(Halfspace { w: anchor });
    Ok((w, count as u64))
}

/// Runs the margin learner from the start direction `w0`.
pub fn run_margin_adgac<O, R>(
    spec: &ScenarioSpec,
    params: &MarginParams,
    w0: &Halfspace,
    oracle: &mut O,
    rng: &mut R,
) -> Result<MarginOutcome>
where
    O: LabelOracle<[f64]> + ComparisonOracle<[f64]> + ?Sized,
    R: Rng + ?Sized,
{
    if w0.dim() != spec.dim {
        return Err(Error::invalid("start direction dimension does not match the scenario"));
    }
    let schedule = params.schedule(spec.dim)?;
    let tol = schedule.kappa_prec / 64.0;
    let mut trace = Vec::with_capacity(schedule.s + 1);
    let (mut labels, mut comparisons) = (0u64, 0u64);
    let mut degraded = false;

    let r0 = schedule.rounds[0];
    let sample = spec.sample_unlabeled(r0.n, rng)?;
    let items = sample.rows();
    let out = adgac(&items, r0.n, r0.eps, r0.batch, oracle, rng)?;
    labels += out.label_queries();
    comparisons += out.comparisons;
    trace.push(MarginTrace {
        k: 0,
        b: r0.b,
        r: r0.r,
        tau: r0.tau,
        z2: r0.z2,
        eps: r0.eps,
        s_len: items.len(),
        loss: f64::NAN,
        labels: out.label_queries(),
        comparisons: out.comparisons,
        degraded: false,
        step: 0.0,
        hinge_iterations: 0,
    });
    let mut w_data = LabeledDataset::from_parts(sample.clone(), out.labels, Provenance::AdgacPredicted)?;
    let mut w = w0.clone();

    for k in 1..=schedule.s {
        let rk = schedule.rounds[k];
        let res = minimize_hinge(&w_data, w.normal(), rk.r, rk.tau, tol, params.constants.hinge_iters)?;
        degraded |= res.degraded;
        let step = distance(&res.v, w.normal());
        let next = Halfspace::new(&res.v).map_err(|_| {
            Error::invalid(format!("hinge minimizer returned the zero vector in round {k}"))
        })?;
        let mut row = MarginTrace {
            k,
            b: rk.b,
            r: rk.r,
            tau: rk.tau,
            z2: rk.z2,
            eps: rk.eps,
            s_len: 0,
            loss: res.loss,
            labels: 0,
            comparisons: 0,
            degraded: res.degraded,
            step,
            hinge_iterations: res.iterations,
        };
        w = next;
        // The last round's labeled sample would only feed a minimization
        // that never happens.
        if k < schedule.s {
            let fresh = spec.sample_unlabeled(rk.n, rng)?;
            let mut band = Points::new(spec.dim);
            for x in fresh.iter().filter(|x| band_membership(w.normal(), x, rk.b)) {
                band.push(x);
            }
            if band.is_empty() {
                return Err(Error::EmptyBand { round: k });
            }
            let items = band.rows();
            let out = adgac(&items, rk.n, rk.eps, rk.batch, oracle, rng)?;
            row.s_len = items.len();
            row.labels = out.label_queries();
            row.comparisons = out.comparisons;
            labels += row.labels;
            comparisons += row.comparisons;
            w_data = LabeledDataset::from_parts(band.clone(), out.labels, Provenance::AdgacPredicted)?;
        }
        trace.push(row);
    }
    Ok(MarginOutcome {
        w,
        schedule,
        trace,
        labels,
        comparisons,
        degraded,
    })
}
