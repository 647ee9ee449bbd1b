//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use adgac_core::a2::{run_a2_adgac, A2Params, NoiseMode};
use adgac_core::adgac::{adgac, k_adv, mismatches};
use adgac_core::constants::TunableConstants;
use adgac_core::experiment::{monte_carlo_error, run_trials, stream_rng, Battery, ExperimentConfig, Method};
use adgac_core::hypothesis::{HypothesisClass, LabeledDataset, Provenance, ThresholdGrid};
use adgac_core::margin::{
    batch_hinge_loss, batch_hinge_subgradient, minimize_hinge, run_margin_adgac, seed_direction, MarginParams,
    MarginSchedule,
};
use adgac_core::theory::{lemma_equality_instance, lemma_min_f, lemma_random_battery, minimax_refinement, ScoreBase};
use adgac_core::vector::{distance, dot, norm, normalized};
use adgac_core::{ComparisonNoise, Label, LabelNoise, Scenario, ScenarioSpec};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

static CONSERVATION_CHECKS: AtomicUsize = AtomicUsize::new(0);
static CONSERVATION_FAILURES: AtomicUsize = AtomicUsize::new(0);

fn conserve(ok: bool) {
    CONSERVATION_CHECKS.fetch_add(1, Ordering::Relaxed);
    if !ok {
        CONSERVATION_FAILURES.fetch_add(1, Ordering::Relaxed);
    }
}

/// Records the accounting check of every trial in a harness battery.
fn audited(b: Battery) -> Battery {
    for r in &b.reports {
        conserve(!r.has_flag("accounting_mismatch"));
    }
    conserve(b.summary.total_labels == b.reports.iter().map(|r| r.labels).sum::<u64>());
    conserve(b.summary.total_comparisons == b.reports.iter().map(|r| r.comparisons).sum::<u64>());
    b
}

fn frozen() -> TunableConstants {
    TunableConstants::frozen()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The ADGAC pool battery shared by the first two criteria.
struct PoolBattery {
    within: usize,
    max_labels: u64,
    label_bound: u64,
    at_most_25: usize,
    mean_comparisons: f64,
}

fn pool_battery(spec: ScenarioSpec, k: usize) -> Result<PoolBattery, String> {
    let sc = Scenario::new(spec).map_err(|e| e.to_string())?;
    let (n, eps) = (1000usize, 0.05);
    let mut b = PoolBattery {
        within: 0,
        max_labels: 0,
        label_bound: u64::MAX,
        at_most_25: 0,
        mean_comparisons: 0.0,
    };
    for seed in 0..100u64 {
        let mut rng = stream_rng(seed, 0);
        let pool = sc.sample_unlabeled(n, &mut rng).map_err(|e| e.to_string())?;
        let items = pool.rows();
        let mut o = sc.oracle(stream_rng(seed, 1));
        let out = adgac(&items, n, eps, k, &mut o, &mut rng).map_err(|e| e.to_string())?;
        conserve(o.counters().labels == out.label_queries() && o.counters().comparisons == out.comparisons);
        if mismatches(&items, &out.labels, |x| sc.truth(x)) as f64 <= eps * n as f64 {
            b.within += 1;
        }
        let groups = out.ranked.len() as f64;
        let bound = k as u64 * (groups + 1.0).log2().ceil() as u64;
        b.label_bound = b.label_bound.min(bound);
        ensure!(
            out.label_queries() <= bound,
            "seed {seed}: {} labels exceed k ceil(log2(G + 1)) = {bound}",
            out.label_queries()
        );
        b.max_labels = b.max_labels.max(out.label_queries());
        b.at_most_25 += usize::from(out.label_queries() <= 25);
        b.mean_comparisons += out.comparisons as f64 / 100.0;
    }
    Ok(b)
}

fn ac1() -> Outcome {
    let b = pool_battery(ScenarioSpec::uniform_threshold(0.5), 5)?;
    let m = 1000.0f64;
    let comp_bound = 2.0 * m * m.ln();
    ensure!(b.within >= 99, "only {}/100 trials within 50 mismatches", b.within);
    ensure!(
        b.mean_comparisons <= comp_bound,
        "mean comparisons {} exceed {comp_bound:.0}",
        b.mean_comparisons
    );
    Ok(format!(
        "{}/100 within 50 mismatches; labels max {} <= {} = k ceil(log2 40) on every trial ({} trials at <= 25); mean comparisons {:.0} <= {:.0}",
        b.within, b.max_labels, b.label_bound, b.at_most_25, b.mean_comparisons, comp_bound
    ))
}

fn ac2() -> Outcome {
    let c3 = frozen().c3;
    let k = k_adv(0.05, 0.1, c3).map_err(|e| e.to_string())?;
    let spec = ScenarioSpec::uniform_threshold(0.5)
        .with_label_noise(LabelNoise::Massart { beta: 0.2 })
        .with_comparison_noise(ComparisonNoise::BandAdversarial { nu_prime: 1e-4 });
    let b = pool_battery(spec, k)?;
    ensure!(b.within >= 90, "only {}/100 trials within 50 mismatches (k = {k})", b.within);
    Ok(format!("{}/100 within 50 mismatches with k = {k} (C3 = {c3})", b.within))
}

fn ac3() -> Outcome {
    let spec = ScenarioSpec::uniform_threshold(0.5).with_label_noise(LabelNoise::Massart { beta: 0.2 });
    let sc = Scenario::new(spec.clone()).map_err(|e| e.to_string())?;
    let class = ThresholdGrid::unit(1001).map_err(|e| e.to_string())?;
    let params = A2Params::new(0.05, 0.1, NoiseMode::from_label_noise(&spec.label_noise), frozen());
    let mut ok = 0;
    let mut labels = Vec::new();
    for seed in 0..100u64 {
        let mut o = sc.oracle(stream_rng(seed, 1));
        let out = run_a2_adgac(&spec, &class, &params, &mut o, &mut stream_rng(seed, 0)).map_err(|e| format!("seed {seed}: {e}"))?;
        let trace_labels: u64 = out.trace.iter().map(|t| t.labels).sum();
        let trace_comps: u64 = out.trace.iter().map(|t| t.comparisons).sum();
        let exact = trace_labels == out.labels
            && out.labels == o.counters().labels
            && trace_comps == out.comparisons
            && out.comparisons == o.counters().comparisons;
        conserve(exact);
        ensure!(exact, "seed {seed}: label accounting mismatch");
        let h = out.hypothesis;
        let (err, _) = monte_carlo_error(&spec, |x| class.predict(h, x), 100_000, &mut stream_rng(seed, 2)).map_err(|e| e.to_string())?;
        ok += usize::from(err <= 0.05);
        labels.push(out.labels as f64);
    }
    ensure!(ok >= 90, "success rate {ok}/100 below 0.90");
    Ok(format!(
        "success {ok}/100; accounting exact on every trial; median labels {}",
        median(labels)
    ))
}

fn battery(method: Method, eps: f64, grid: usize) -> Result<Battery, String> {
    let spec = ScenarioSpec::uniform_threshold(0.5).with_label_noise(LabelNoise::Massart { beta: 0.2 });
    let mut c = ExperimentConfig::new(spec, method, eps, 0.1).with_trials(100);
    c.grid_size = grid;
    let b = audited(run_trials(&c).map_err(|e| e.to_string())?);
    ensure!(b.summary.failed == 0, "{method} at eps {eps}: {} failed trials", b.summary.failed);
    Ok(b)
}

fn ac4() -> Outcome {
    let epsilons = [0.1, 0.05, 0.025];
    let mut adgac_med = Vec::new();
    let mut base_med = Vec::new();
    let mut shifts = Vec::new();
    for &eps in &epsilons {
        let fine = battery(Method::A2Adgac, eps, 10_000)?.summary.labels.median;
        let coarse = battery(Method::A2Adgac, eps, 1_000)?.summary.labels.median;
        let shift = (fine - coarse).abs() / fine;
        ensure!(shift <= 0.10, "eps {eps}: grid 1e3 vs 1e4 median labels {coarse} vs {fine}");
        shifts.push(shift);
        adgac_med.push(fine);
        base_med.push(battery(Method::BaselineA2, eps, 10_000)?.summary.labels.median);
    }
    let ratio = base_med[2] / adgac_med[2];
    ensure!(ratio >= 3.0, "label ratio at eps 0.025 is {ratio:.2} < 3");
    let growth = |v: &[f64]| format!("{:.2}/{:.2}", v[1] / v[0], v[2] / v[1]);
    Ok(format!(
        "median labels a2-adgac {:?} vs baseline {:?}; grid shift max {:.1}%; ratio at 0.025 = {ratio:.2}; growth per halving a2-adgac {} baseline {}",
        adgac_med,
        base_med,
        100.0 * shifts.iter().cloned().fold(0.0, f64::max),
        growth(&adgac_med),
        growth(&base_med)
    ))
}

/// 2-d gaussian sample labeled by `w_star` with a fraction of flips.
fn hinge_instance(seed: u64, w_star: &[f64], flip: f64, n: usize) -> LabeledDataset {
    let spec = ScenarioSpec::gaussian_halfspace(w_star.len());
    let mut r = stream_rng(seed, 5);
    let pts = spec.sample_unlabeled(n, &mut r).expect("sampling");
    let ys = pts
        .iter()
        .map(|x| {
            let y = Label::from_score(dot(w_star, x));
            if r.random::<f64>() < flip {
                y.flip()
            } else {
                y
            }
        })
        .collect();
    LabeledDataset::from_parts(pts, ys, Provenance::OracleDirect).expect("dataset")
}

fn ac5() -> Outcome {
    let c = frozen();
    // Noiseless success.
    let mut cfg = ExperimentConfig::new(ScenarioSpec::gaussian_halfspace(2), Method::MarginAdgac, 0.1, 0.2).with_trials(100);
    let b = audited(run_trials(&cfg).map_err(|e| e.to_string())?);
    let ok = b.summary.successes;
    ensure!(ok >= 90, "noiseless d = 2 success {ok}/100");

    // Schedule identities on every round of real runs.
    let mut rounds_checked = 0;
    for (dim, noise) in [(2, LabelNoise::NONE), (5, LabelNoise::Massart { beta: 0.2 })] {
        let spec = ScenarioSpec::gaussian_halfspace(dim).with_label_noise(noise);
        let sc = Scenario::new(spec.clone()).map_err(|e| e.to_string())?;
        let params = MarginParams::new(0.1, 0.2, NoiseMode::from_label_noise(&noise), c.clone());
        for seed in 0..5u64 {
            let mut o = sc.oracle(stream_rng(seed, 1));
            let mut r = stream_rng(seed, 0);
            let (w0, seed_labels) = seed_direction(&spec, &params, &mut o, &mut r).map_err(|e| e.to_string())?;
            let out = run_margin_adgac(&spec, &params, &w0, &mut o, &mut r).map_err(|e| e.to_string())?;
            conserve(o.counters().labels == out.labels + seed_labels && o.counters().comparisons == out.comparisons);
            let sch = &out.schedule;
            let [_, c2, lc3, lc4, _, _] = c.lc;
            let m = (2.0 / (c2 * std::f64::consts::PI)).max(2.0);
            ensure!(sch.m == m, "M mismatch");
            for (t, rs) in out.trace.iter().zip(&sch.rounds) {
                let k = t.k as i32;
                ensure!(rs.b_prev == c.lc_c1_prime * m.powi(-(k - 1)), "round {k}: b_(k-1)");
                ensure!(t.b == c.lc_c1_prime * m.powi(-k), "round {k}: b_k");
                ensure!(t.z2 == t.r * t.r + rs.b_prev * rs.b_prev, "round {k}: z^2 identity");
                ensure!(
                    t.eps == lc3 * t.tau * t.tau * t.b * sch.kappa_prec * sch.kappa_prec / (256.0 * lc4 * t.z2),
                    "round {k}: epsilon_k identity"
                );
                ensure!(t.step <= t.r + 1e-9, "round {k}: step {} exceeds r {}", t.step, t.r);
                rounds_checked += 1;
            }
        }
    }

    // Hinge minimizer against a dense grid over the feasible arc.
    let sched = MarginSchedule::new(0.1, 0.2, 2, NoiseMode::Tnc { kappa: 1.0 }, &c).map_err(|e| e.to_string())?;
    let slack = sched.kappa_prec / 8.0;
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut rng = stream_rng(77, 0);
    for inst in 0..20u64 {
        let ws = normalized(&[rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).expect("non-zero");
        let data = hinge_instance(inst, &ws, 0.1, 200);
        let phi: f64 = rng.random_range(-1.0..1.0);
        let w_prev = [ws[0] * phi.cos() - ws[1] * phi.sin(), ws[0] * phi.sin() + ws[1] * phi.cos()];
        let (r, tau) = if inst < 10 {
            let rs = sched.rounds[1 + (inst as usize % sched.s)];
            (rs.r, rs.tau)
        } else {
            (rng.random_range(0.3..1.0), rng.random_range(0.05..0.5))
        };
        let res = minimize_hinge(&data, &w_prev, r, tau, sched.kappa_prec / 64.0, c.hinge_iters).map_err(|e| e.to_string())?;
        ensure!(distance(&res.v, &w_prev) <= r + 1e-9 && norm(&res.v) <= 1.0 + 1e-12, "instance {inst}: infeasible");
        let base = w_prev[1].atan2(w_prev[0]);
        let half = 2.0 * (r / 2.0).min(1.0).asin();
        let steps = (2.0 * half / 1e-3).ceil() as usize;
        let grid_min = (0..=steps)
            .map(|i| {
                let a = base - half + 2.0 * half * i as f64 / steps as f64;
                batch_hinge_loss(&[a.cos(), a.sin()], &data, tau).expect("loss")
            })
            .fold(f64::INFINITY, f64::min);
        ensure!(
            res.loss <= grid_min + slack,
            "instance {inst}: loss {} vs grid {grid_min} (tau {tau}, r {r})",
            res.loss
        );
        worst = worst.max(res.loss - grid_min);
    }

    // Dimension echo under Massart noise.
    let mut med = Vec::new();
    for dim in [5usize, 20] {
        cfg = ExperimentConfig::new(
            ScenarioSpec::gaussian_halfspace(dim).with_label_noise(LabelNoise::Massart { beta: 0.2 }),
            Method::MarginAdgac,
            0.1,
            0.2,
        )
        .with_trials(25);
        let b = audited(run_trials(&cfg).map_err(|e| e.to_string())?);
        ensure!(b.summary.failed == 0, "d = {dim}: {} failed trials", b.summary.failed);
        med.push(b.summary.labels.median);
    }
    let ratio = med[1] / med[0];
    ensure!(ratio <= 1.5, "median labels d=20 / d=5 = {ratio:.2}");
    Ok(format!(
        "noiseless success {ok}/100; identities exact on {rounds_checked} rounds; hinge vs grid worst excess {worst:.2e} <= {slack:.2e}; median labels d=5 {} d=20 {} (ratio {ratio:.2})",
        med[0], med[1]
    ))
}

fn ac6() -> Outcome {
    let b = lemma_random_battery(10_000, 8, &mut stream_rng(6, 0)).map_err(|e| e.to_string())?;
    ensure!(b.violations == 0, "{} violations", b.violations);
    let mut worst_eq: f64 = 0.0;
    for n in 1..=8 {
        for t in [0.25, 1.0, 3.0] {
            let (x, y) = lemma_equality_instance(n, t);
            let o = lemma_min_f(&x, &y, Some(t)).map_err(|e| e.to_string())?;
            worst_eq = worst_eq.max((o.min - o.bound).abs());
        }
    }
    ensure!(worst_eq <= 1e-9, "equality configuration off by {worst_eq:e}");
    Ok(format!(
        "10000 instances, 0 violations (worst min - bound {:.3e}); equality gap {worst_eq:.1e}",
        b.worst_excess
    ))
}

fn ac7() -> Outcome {
    let (a, b) = minimax_refinement(ScoreBase::Uniform { t_star: 0.5 }, 0.01, 10_000).map_err(|e| e.to_string())?;
    ensure!((a.comparison_error - 0.01).abs() <= 4e-4, "comparison error {}", a.comparison_error);
    ensure!((a.threshold_error - 0.1).abs() <= 4e-4, "threshold error {}", a.threshold_error);
    let halves = |g2: f64, g1: f64| g2 <= g1 / 2.0 * (1.0 + 1e-9);
    ensure!(
        halves(b.comparison_gap, a.comparison_gap),
        "comparison gap {:e} -> {:e}",
        a.comparison_gap,
        b.comparison_gap
    );
    ensure!(
        halves(b.threshold_gap, a.threshold_gap),
        "threshold gap {:e} -> {:e}",
        a.threshold_gap,
        b.threshold_gap
    );
    Ok(format!(
        "comparison error {:.6}, best threshold error {:.6}; gaps {:.2e} -> {:.2e} and {:.2e} -> {:.2e}",
        a.comparison_error, a.threshold_error, a.comparison_gap, b.comparison_gap, a.threshold_gap, b.threshold_gap
    ))
}

fn ac8() -> Outcome {
    // Subgradient against central differences.
    let data = hinge_instance(8, &[0.3, -0.4, 0.866], 0.2, 60);
    let mut rng = stream_rng(88, 0);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 100 {
        let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let tau = rng.random_range(0.1..1.0);
        let smooth = data.iter().all(|(x, y)| (1.0 - y.as_f64() * dot(&w, x) / tau).abs() > 1e-4);
        if !smooth {
            continue;
        }
        let g = batch_hinge_subgradient(&w, &data, tau).map_err(|e| e.to_string())?;
        for i in 0..3 {
            let h = 1e-6;
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (batch_hinge_loss(&wp, &data, tau).unwrap() - batch_hinge_loss(&wm, &data, tau).unwrap()) / (2.0 * h);
            let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
            worst = worst.max(rel);
        }
        checked += 1;
    }
    ensure!(worst <= 1e-4, "finite-difference relative error {worst:e}");

    // Bit-identical reruns.
    let strip = |b: Battery| {
        b.reports
            .into_iter()
            .map(|mut r| {
                r.wall_ms = 0.0;
                r
            })
            .collect::<Vec<_>>()
    };
    let configs = [
        ExperimentConfig::new(ScenarioSpec::uniform_threshold(0.5), Method::AdgacOnly, 0.05, 0.1).with_trials(20),
        ExperimentConfig::new(
            ScenarioSpec::uniform_threshold(0.5).with_label_noise(LabelNoise::Massart { beta: 0.2 }),
            Method::A2Adgac,
            0.05,
            0.1,
        )
        .with_trials(20)
        .with_seed(1234),
        ExperimentConfig::new(ScenarioSpec::gaussian_halfspace(3), Method::MarginAdgac, 0.1, 0.2).with_trials(5),
    ];
    for c in &configs {
        let a = strip(audited(run_trials(c).map_err(|e| e.to_string())?));
        let b = strip(audited(run_trials(c).map_err(|e| e.to_string())?));
        ensure!(a == b, "{} battery differs between runs", c.method);
    }

    let checks = CONSERVATION_CHECKS.load(Ordering::Relaxed);
    let failures = CONSERVATION_FAILURES.load(Ordering::Relaxed);
    ensure!(failures == 0, "{failures} of {checks} counter conservation checks failed");
    Ok(format!(
        "subgradient worst relative error {worst:.1e} over 100 points; {checks} counter conservation checks, 0 failures; {} batteries re-ran bit-identically",
        configs.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC-1", "ADGAC noiseless pool battery", Duration::from_secs(10), ac1),
        ("AC-2", "ADGAC under massart and comparison noise", Duration::from_secs(30), ac2),
        ("AC-3", "A2-ADGAC end to end", Duration::from_secs(120), ac3),
        ("AC-4", "label complexity separation", Duration::from_secs(600), ac4),
        ("AC-5", "margin learner", Duration::from_secs(600), ac5),
        ("AC-6", "prefix/suffix inequality", Duration::from_secs(5), ac6),
        ("AC-7", "minimax comparison-noise identity", Duration::from_secs(30), ac7),
        ("AC-8", "numerical hygiene", Duration::from_secs(600), ac8),
    ];
    let mut failed = 0;
    for (id, title, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(msg) if start.elapsed() > budget => Err(format!("{msg}; runtime {secs:.1}s over {}s budget", budget.as_secs())),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("{id} PASS [{title}] {msg} ({secs:.1}s)"),
            Err(msg) => {
                failed += 1;
                println!("{id} FAIL [{title}] {msg} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {}/8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
