//! Seeded trial batteries, the passive baseline, and CSV reporting.
//!
//! Trial `i` of a battery uses seed `base + i`. The learner, the oracles and
//! the Monte Carlo evaluation each draw from their own ChaCha stream of that
//! seed, so every trial is reproducible on its own.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Median, OrderStatistics};

use crate::a2::{run_a2_adgac, run_baseline_a2, A2Params, NoiseMode};
use crate::adgac::{adgac, mismatches};
use crate::constants::{parse_kv, parse_value, read_text, KvEntry, TunableConstants};
use crate::error::{Error, Result};
use crate::hypothesis::{HalfspaceSet, HypothesisClass, LabeledDataset, Provenance, ThresholdGrid, VersionSpace};
use crate::label::Label;
use crate::margin::{run_margin_adgac, seed_direction, MarginParams};
use crate::oracle::{
    ComparisonNoise, Distribution, GroundTruth, LabelNoise, LabelOracle, Scenario, ScenarioSpec,
};
use crate::vector::angle;

const ALGO_STREAM: u64 = 0;
const ORACLE_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// The ChaCha stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    AdgacOnly,
    A2Adgac,
    MarginAdgac,
    BaselineA2,
    PassiveErm,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::AdgacOnly,
        Method::A2Adgac,
        Method::MarginAdgac,
        Method::BaselineA2,
        Method::PassiveErm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::AdgacOnly => "adgac-only",
            Method::A2Adgac => "a2-adgac",
            Method::MarginAdgac => "margin-adgac",
            Method::BaselineA2 => "baseline-a2",
            Method::PassiveErm => "passive-erm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether the method queries the comparison oracle.
    pub fn uses_comparisons(self) -> bool {
        matches!(self, Method::AdgacOnly | Method::A2Adgac | Method::MarginAdgac)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully specified battery.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    /// Base seed; trial `i` uses `seed + i`.
    pub seed: u64,
    pub constants: TunableConstants,
    pub output: Option<PathBuf>,
    /// Size of the finite class for the disagreement learners and ERM.
    pub grid_size: usize,
    /// Pool size for `adgac-only`.
    pub pool_size: usize,
    /// Fixed label batch for `adgac-only`; derived from the noise model when unset.
    pub batch_k: Option<usize>,
    /// Sample size for `passive-erm`.
    pub erm_n: usize,
    /// Fresh samples for the error estimate.
    pub mc_samples: usize,
    /// Per-round unlabeled sample cap of the learners.
    pub max_samples_per_round: usize,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec, method: Method, epsilon: f64, delta: f64) -> Self {
        ExperimentConfig {
            scenario,
            method,
            epsilon,
            delta,
            trials: 1,
            seed: 0,
            constants: TunableConstants::frozen(),
            output: None,
            grid_size: 1001,
            pool_size: 1000,
            batch_k: None,
            erm_n: 1000,
            mc_samples: 100_000,
            max_samples_per_round: 20_000_000,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.scenario.seed = seed;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse_with_base(&text, path.parent())
    }

    /// Parses the flat `key = value` format; unknown keys are tried as
    /// constants. A `constants = <path>` entry loads a constants file first,
    /// and inline constants override it.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_base(text, None)
    }

    fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Self> {
        let entries = parse_kv(text)?;
        let get = |k: &str| entries.iter().find(|e| e.key == k);
        let req = |k: &str| {
            get(k).ok_or_else(|| Error::ConfigParse {
                line: 0,
                message: format!("missing required key `{k}`"),
            })
        };
        let method_e = req("method")?;
        let method = Method::parse(&method_e.value).ok_or_else(|| Error::ConfigParse {
            line: method_e.line,
            message: format!("unknown method `{}`", method_e.value),
        })?;
        let scenario = parse_scenario(&entries)?;
        let mut c = ExperimentConfig::new(scenario, method, parse_value(req("epsilon")?)?, parse_value(req("delta")?)?);
        if let Some(e) = get("constants") {
            let p = PathBuf::from(&e.value);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            c.constants = TunableConstants::load(&p)?;
        }
        for e in &entries {
            match e.key.as_str() {
                "method" | "epsilon" | "delta" | "constants" => {}
                k if SCENARIO_KEYS.contains(&k) => {}
                "trials" => c.trials = parse_value(e)?,
                "seed" => c.seed = parse_value(e)?,
                "output" => c.output = Some(PathBuf::from(&e.value)),
                "grid_size" => c.grid_size = parse_value(e)?,
                "pool_size" => c.pool_size = parse_value(e)?,
                "batch_k" => c.batch_k = Some(parse_value(e)?),
                "erm_n" => c.erm_n = parse_value(e)?,
                "mc_samples" => c.mc_samples = parse_value(e)?,
                "max_samples_per_round" => c.max_samples_per_round = parse_value(e)?,
                _ => c.constants.set(e)?,
            }
        }
        c.scenario.seed = c.seed;
        c.constants.validate()?;
        Ok(c)
    }

    /// Serializes in the format accepted by [`ExperimentConfig::parse`],
    /// constants inline.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(p) = &self.output {
            let _ = writeln!(s, "output = {}", p.display());
        }
        let _ = writeln!(s, "grid_size = {}", self.grid_size);
        let _ = writeln!(s, "pool_size = {}", self.pool_size);
        if let Some(k) = self.batch_k {
            let _ = writeln!(s, "batch_k = {k}");
        }
        let _ = writeln!(s, "erm_n = {}", self.erm_n);
        let _ = writeln!(s, "mc_samples = {}", self.mc_samples);
        let _ = writeln!(s, "max_samples_per_round = {}", self.max_samples_per_round);
        s.push_str(&scenario_to_kv(&self.scenario));
        s.push_str(&self.constants.to_kv());
        s
    }

    /// Checks ranges and method/scenario compatibility without sampling.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.constants.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.grid_size == 0
            || self.pool_size == 0
            || self.erm_n == 0
            || self.mc_samples == 0
            || self.max_samples_per_round == 0
        {
            return Err(Error::invalid(
                "grid_size, pool_size, erm_n, mc_samples and max_samples_per_round must be positive",
            ));
        }
        if self.batch_k == Some(0) {
            return Err(Error::invalid("batch_k must be positive"));
        }
        let sc = &self.scenario;
        match self.method {
            Method::MarginAdgac => {
                if sc.dist != Distribution::IsotropicGaussian {
                    return Err(Error::Incompatible(
                        "margin-adgac requires the isotropic gaussian distribution".into(),
                    ));
                }
            }
            Method::A2Adgac | Method::BaselineA2 | Method::PassiveErm => {
                let ok = sc.dist == Distribution::UniformInterval
                    || (sc.dist == Distribution::IsotropicGaussian && sc.dim == 2);
                if !ok {
                    return Err(Error::Incompatible(format!(
                        "{} needs a finite class: thresholds on the unit interval or 2-d gaussian halfspaces",
                        self.method
                    )));
                }
            }
            Method::AdgacOnly => {}
        }
        Ok(())
    }

    /// Gate conditions of the comparison-based guarantees that this
    /// configuration violates.
    pub fn gate_flags(&self) -> Vec<String> {
        let mut flags = Vec::new();
        if !self.method.uses_comparisons() {
            return flags;
        }
        let c = &self.constants;
        let kappa = self.scenario.label_noise.kappa();
        if self.epsilon >= c.c1 {
            flags.push("gate_epsilon".to_string());
        }
        let nu_prime = self.scenario.comparison_noise.nu_prime();
        if nu_prime > c.c2 * self.epsilon.powf(2.0 * kappa) * self.delta {
            flags.push("gate_nu_prime".to_string());
        }
        if let LabelNoise::Adversarial { nu } = self.scenario.label_noise {
            if nu > c.c4 * self.epsilon {
                flags.push("gate_nu".to_string());
            }
        }
        flags
    }
}

const SCENARIO_KEYS: [&str; 11] = [
    "dist",
    "dim",
    "threshold",
    "normal",
    "label_noise",
    "beta",
    "kappa",
    "mu",
    "nu",
    "comparison_noise",
    "nu_prime",
];

fn parse_scenario(entries: &[KvEntry]) -> Result<ScenarioSpec> {
    let get = |k: &str| entries.iter().find(|e| e.key == k);
    let num = |k: &str, default: f64| -> Result<f64> {
        match get(k) {
            Some(e) => parse_value(e),
            None => Ok(default),
        }
    };
    let bad = |e: &KvEntry, what: &str| Error::ConfigParse {
        line: e.line,
        message: format!("unknown {what} `{}`", e.value),
    };
    let dist = match get("dist") {
        Some(e) => Distribution::parse(&e.value).ok_or_else(|| bad(e, "distribution"))?,
        None => Distribution::UniformInterval,
    };
    let mut spec = match dist {
        Distribution::UniformInterval => ScenarioSpec::uniform_threshold(num("threshold", 0.5)?),
        Distribution::IsotropicGaussian => {
            let dim = match get("dim") {
                Some(e) => parse_value(e)?,
                None => 2,
            };
            let mut s = ScenarioSpec::gaussian_halfspace(dim);
            if let Some(e) = get("normal") {
                let w = e
                    .value
                    .split(',')
                    .map(|v| {
                        v.trim().parse::<f64>().map_err(|_| Error::ConfigParse {
                            line: e.line,
                            message: format!("invalid normal component `{v}`"),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                s.truth = GroundTruth::halfspace(&w)?;
            }
            s
        }
    };
    if let Some(e) = get("dim") {
        let d: usize = parse_value(e)?;
        if d != spec.dim {
            return Err(Error::ConfigParse {
                line: e.line,
                message: format!("dim = {d} does not match the scenario"),
            });
        }
    }
    spec.label_noise = match get("label_noise").map(|e| (e, e.value.as_str())) {
        None | Some((_, "none")) => LabelNoise::NONE,
        Some((_, "massart")) => LabelNoise::Massart { beta: num("beta", 0.0)? },
        Some((_, "tsybakov")) => LabelNoise::Tsybakov {
            kappa: num("kappa", 2.0)?,
            mu: num("mu", 1.0)?,
        },
        Some((_, "adversarial")) => LabelNoise::Adversarial { nu: num("nu", 0.0)? },
        Some((e, _)) => return Err(bad(e, "label noise")),
    };
    spec.comparison_noise = match get("comparison_noise").map(|e| (e, e.value.as_str())) {
        None | Some((_, "perfect")) => ComparisonNoise::Perfect,
        Some((_, "band")) => ComparisonNoise::BandAdversarial {
            nu_prime: num("nu_prime", 0.0)?,
        },
        Some((e, _)) => return Err(bad(e, "comparison noise")),
    };
    Ok(spec)
}

fn scenario_to_kv(s: &ScenarioSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dist = {}", s.dist.name());
    let _ = writeln!(out, "dim = {}", s.dim);
    match &s.truth {
        GroundTruth::Threshold(t) => {
            let _ = writeln!(out, "threshold = {t}");
        }
        GroundTruth::Halfspace(w) => {
            let w: Vec<String> = w.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "normal = {}", w.join(","));
        }
    }
    match s.label_noise {
        LabelNoise::Massart { beta } => {
            let _ = writeln!(out, "label_noise = massart\nbeta = {beta}");
        }
        LabelNoise::Tsybakov { kappa, mu } => {
            let _ = writeln!(out, "label_noise = tsybakov\nkappa = {kappa}\nmu = {mu}");
        }
        LabelNoise::Adversarial { nu } => {
            let _ = writeln!(out, "label_noise = adversarial\nnu = {nu}");
        }
    }
    match s.comparison_noise {
        ComparisonNoise::Perfect => {
            let _ = writeln!(out, "comparison_noise = perfect");
        }
        ComparisonNoise::BandAdversarial { nu_prime } => {
            let _ = writeln!(out, "comparison_noise = band\nnu_prime = {nu_prime}");
        }
    }
    out
}

/// One trial's outcome; the columns of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub method: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Disagreement with the Bayes classifier; NaN when the trial failed.
    pub err: f64,
    pub err_se: f64,
    pub labels: u64,
    pub comparisons: u64,
    pub rounds: usize,
    pub wall_ms: f64,
    /// `;`-separated.
    pub flags: String,
}

impl TrialReport {
    pub fn flag_list(&self) -> Vec<&str> {
        self.flags.split(';').filter(|f| !f.is_empty()).collect()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flag_list().contains(&flag)
    }

    pub fn failed(&self) -> bool {
        self.flag_list().iter().any(|f| f.starts_with("error:"))
    }

    /// Finite error at most `epsilon`.
    pub fn succeeded(&self) -> bool {
        self.err.is_finite() && self.err <= self.epsilon
    }
}

/// Monte Carlo disagreement between `predict` and the Bayes classifier,
/// with its standard error.
pub fn monte_carlo_error<F, R>(spec: &ScenarioSpec, predict: F, samples: usize, rng: &mut R) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Label,
    R: Rng + ?Sized,
{
    if samples == 0 {
        return Err(Error::invalid("Monte Carlo sample count must be positive"));
    }
    let mut x = vec![0.0; spec.dim];
    let mut wrong = 0usize;
    for _ in 0..samples {
        spec.sample_point_into(rng, &mut x);
        if predict(&x) != spec.truth.label(&x) {
            wrong += 1;
        }
    }
    let n = samples as f64;
    let p = wrong as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// Empirical risk minimizer over `class` on `n` oracle-labeled samples;
/// ties go to the lowest index.
pub fn passive_erm<C, O, R>(spec: &ScenarioSpec, class: &C, n: usize, oracle: &mut O, rng: &mut R) -> Result<usize>
where
    C: HypothesisClass + ?Sized,
    O: LabelOracle<[f64]> + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::invalid("passive ERM needs at least one sample"));
    }
    if class.is_empty() {
        return Err(Error::invalid("hypothesis class is empty"));
    }
    let pts = spec.sample_unlabeled(n, rng)?;
    let ys = pts.iter().map(|x| oracle.label(x)).collect();
    let data = LabeledDataset::from_parts(pts, ys, Provenance::OracleDirect)?;
    let v = VersionSpace::full(class);
    let counts = class.error_counts(v.indices(), &data);
    let best = counts
        .iter()
        .enumerate()
        .min_by_key(|&(i, c)| (*c, i))
        .map(|(i, _)| v.indices()[i])
        .expect("non-empty class");
    Ok(best)
}

/// The finite class a configuration learns over.
#[derive(Debug, Clone)]
pub enum ClassKind {
    Thresholds(ThresholdGrid),
    Halfspaces(HalfspaceSet),
}

impl ClassKind {
    /// Thresholds on the unit interval, or `size` directions evenly spaced
    /// on the circle starting at the true normal.
    pub fn for_scenario(spec: &ScenarioSpec, size: usize) -> Result<Self> {
        match (&spec.dist, &spec.truth) {
            (Distribution::UniformInterval, _) => Ok(ClassKind::Thresholds(ThresholdGrid::unit(size)?)),
            (Distribution::IsotropicGaussian, GroundTruth::Halfspace(w)) if w.len() == 2 => {
                let base = w[1].atan2(w[0]);
                let normals = (0..size)
                    .map(|j| {
                        let a = base + std::f64::consts::TAU * j as f64 / size as f64;
                        vec![a.cos(), a.sin()]
                    })
                    .collect();
                Ok(ClassKind::Halfspaces(HalfspaceSet::new(normals)?))
            }
            _ => Err(Error::Incompatible("no finite class for this scenario".into())),
        }
    }

    pub fn as_class(&self) -> &dyn HypothesisClass {
        match self {
            ClassKind::Thresholds(c) => c,
            ClassKind::Halfspaces(c) => c,
        }
    }

    fn vc_dim(&self) -> f64 {
        match self {
            ClassKind::Thresholds(_) => 1.0,
            ClassKind::Halfspaces(_) => 2.0,
        }
    }
}

/// Shared, read-only state of a battery.
#[derive(Debug)]
pub struct TrialContext {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub class: Option<ClassKind>,
    gates: Vec<String>,
}

impl TrialContext {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scenario = Scenario::new(config.scenario.clone())?;
        let class = match config.method {
            Method::A2Adgac | Method::BaselineA2 | Method::PassiveErm => {
                Some(ClassKind::for_scenario(&config.scenario, config.grid_size)?)
            }
            _ => None,
        };
        Ok(TrialContext {
            config: config.clone(),
            scenario,
            class,
            gates: config.gate_flags(),
        })
    }

    /// Runs trial `i`; failures are recorded as `error:<kind>` flags.
    pub fn run(&self, i: usize) -> TrialReport {
        let cfg = &self.config;
        let seed = cfg.seed.wrapping_add(i as u64);
        let start = Instant::now();
        let mut oracle = self.scenario.oracle(stream_rng(seed, ORACLE_STREAM));
        let mut rng = stream_rng(seed, ALGO_STREAM);
        let mut flags = self.gates.clone();
        let outcome = self.run_method(seed, &mut oracle, &mut rng, &mut flags);
        let counters = oracle.counters();
        let (err, err_se, rounds) = match outcome {
            Ok(MethodOutcome {
                err,
                err_se,
                rounds,
                labels,
                comparisons,
            }) => {
                if labels != counters.labels || comparisons != counters.comparisons {
                    flags.push("accounting_mismatch".to_string());
                }
                (err, err_se, rounds)
            }
            Err(e) => {
                flags.push(format!("error:{}", e.kind()));
                (f64::NAN, f64::NAN, 0)
            }
        };
        TrialReport {
            seed,
            method: cfg.method.name().to_string(),
            epsilon: cfg.epsilon,
            delta: cfg.delta,
            err,
            err_se,
            labels: counters.labels,
            comparisons: counters.comparisons,
            rounds,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            flags: flags.join(";"),
        }
    }

    fn run_method(
        &self,
        seed: u64,
        oracle: &mut crate::oracle::SimOracle<'_>,
        rng: &mut ChaCha8Rng,
        flags: &mut Vec<String>,
    ) -> Result<MethodOutcome> {
        let cfg = &self.config;
        let spec = self.scenario.spec();
        let mode = NoiseMode::from_label_noise(&spec.label_noise);
        let mut eval = stream_rng(seed, EVAL_STREAM);
        match cfg.method {
            Method::AdgacOnly => {
                let k = match cfg.batch_k {
                    Some(k) => k,
                    None => mode.k(cfg.epsilon, cfg.delta, cfg.constants.c3)?,
                };
                let pool = spec.sample_unlabeled(cfg.pool_size, rng)?;
                let items = pool.rows();
                let out = adgac(&items, cfg.pool_size, cfg.epsilon, k, &mut *oracle, rng)?;
                let wrong = mismatches(&items, &out.labels, |x| spec.truth.label(x));
                Ok(MethodOutcome {
                    err: wrong as f64 / items.len() as f64,
                    err_se: 0.0,
                    rounds: 1,
                    labels: out.label_queries(),
                    comparisons: out.comparisons,
                })
            }
            Method::A2Adgac | Method::BaselineA2 => {
                let class = self.class.as_ref().expect("class built for this method");
                let mut params = A2Params::new(cfg.epsilon, cfg.delta, mode, cfg.constants.clone());
                params.vc_dim = class.vc_dim();
                params.max_samples_per_round = Some(cfg.max_samples_per_round);
                let c = class.as_class();
                let out = if cfg.method == Method::A2Adgac {
                    run_a2_adgac(spec, c, &params, &mut *oracle, rng)?
                } else {
                    run_baseline_a2(spec, c, &params, &mut *oracle, rng)?
                };
                let h = out.hypothesis;
                let (err, err_se) = monte_carlo_error(spec, |x| c.predict(h, x), cfg.mc_samples, &mut eval)?;
                Ok(MethodOutcome {
                    err,
                    err_se,
                    rounds: out.rounds_run(),
                    labels: out.labels,
                    comparisons: out.comparisons,
                })
            }
            Method::PassiveErm => {
                let c = self.class.as_ref().expect("class built for this method").as_class();
                let h = passive_erm(spec, c, cfg.erm_n, &mut *oracle, rng)?;
                let (err, err_se) = monte_carlo_error(spec, |x| c.predict(h, x), cfg.mc_samples, &mut eval)?;
                Ok(MethodOutcome {
                    err,
                    err_se,
                    rounds: 1,
                    labels: cfg.erm_n as u64,
                    comparisons: 0,
                })
            }
            Method::MarginAdgac => {
                let mut params = MarginParams::new(cfg.epsilon, cfg.delta, mode, cfg.constants.clone());
                params.max_samples_per_round = Some(cfg.max_samples_per_round);
                let (w0, seed_labels) = seed_direction(spec, &params, &mut *oracle, rng)?;
                if let GroundTruth::Halfspace(w_star) = &spec.truth {
                    if angle(w0.normal(), w_star) > std::f64::consts::FRAC_PI_2 {
                        flags.push("w0_obtuse".to_string());
                    }
                }
                let out = run_margin_adgac(spec, &params, &w0, &mut *oracle, rng)?;
                if out.degraded {
                    flags.push("degraded".to_string());
                }
                let (err, err_se) = monte_carlo_error(spec, |x| out.w.predict(x), cfg.mc_samples, &mut eval)?;
                Ok(MethodOutcome {
                    err,
                    err_se,
                    rounds: out.schedule.s,
                    labels: out.labels + seed_labels,
                    comparisons: out.comparisons,
                })
            }
        }
    }
}

struct MethodOutcome {
    err: f64,
    err_se: f64,
    rounds: usize,
    labels: u64,
    comparisons: u64,
}

/// Aggregate of a battery.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: String,
    pub trials: usize,
    pub successes: usize,
    pub failed: usize,
    pub success_rate: f64,
    /// Median and quartiles over trials with a finite error.
    pub err: Quartiles,
    pub labels: Quartiles,
    pub comparisons: Quartiles,
    pub total_labels: u64,
    pub total_comparisons: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    /// NaN for an empty sample.
    pub fn of(values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Quartiles {
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
            };
        }
        let mut d = Data::new(values);
        Quartiles {
            q1: d.lower_quartile(),
            median: d.median(),
            q3: d.upper_quartile(),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

impl Summary {
    pub fn of(reports: &[TrialReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::invalid("no trial reports"))?;
        let successes = reports.iter().filter(|r| r.succeeded()).count();
        Ok(Summary {
            method: first.method.clone(),
            trials: reports.len(),
            successes,
            failed: reports.iter().filter(|r| r.failed()).count(),
            success_rate: successes as f64 / reports.len() as f64,
            err: Quartiles::of(reports.iter().map(|r| r.err).filter(|e| e.is_finite()).collect()),
            labels: Quartiles::of(reports.iter().map(|r| r.labels as f64).collect()),
            comparisons: Quartiles::of(reports.iter().map(|r| r.comparisons as f64).collect()),
            total_labels: reports.iter().map(|r| r.labels).sum(),
            total_comparisons: reports.iter().map(|r| r.comparisons).sum(),
        })
    }

    /// Plain-text table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method            {}", self.method);
        let _ = writeln!(
            s,
            "trials            {} ({} succeeded, {} failed)",
            self.trials, self.successes, self.failed
        );
        let _ = writeln!(s, "success rate      {:.4}", self.success_rate);
        let _ = writeln!(s, "{:<17} {:>12} {:>12} {:>12}", "", "q1", "median", "q3");
        for (name, q) in [("error", &self.err), ("labels", &self.labels), ("comparisons", &self.comparisons)] {
            let _ = writeln!(s, "{name:<17} {:>12.6} {:>12.6} {:>12.6}", q.q1, q.median, q.q3);
        }
        let _ = writeln!(s, "total labels      {}", self.total_labels);
        let _ = writeln!(s, "total comparisons {}", self.total_comparisons);
        s
    }
}

/// Reports of every trial, in trial order, plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    pub reports: Vec<TrialReport>,
    pub summary: Summary,
}

/// Runs every trial of `config`. Configuration problems fail before any
/// sampling; per-trial failures are recorded in the reports.
pub fn run_trials(config: &ExperimentConfig) -> Result<Battery> {
    let ctx = TrialContext::new(config)?;
    let reports: Vec<TrialReport> = (0..config.trials).into_par_iter().map(|i| ctx.run(i)).collect();
    let summary = Summary::of(&reports)?;
    Ok(Battery { reports, summary })
}

pub const CSV_HEADER: &str = "seed,method,epsilon,delta,err,err_se,labels,comparisons,rounds,wall_ms,flags";

/// Paths of the summary table and config sidecar that accompany a CSV.
pub fn sidecar_paths(csv: &Path) -> (PathBuf, PathBuf) {
    let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    (
        csv.with_file_name(format!("{name}.summary.txt")),
        csv.with_file_name(format!("{name}.config")),
    )
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_err(path, e)
    })
}

/// CSV text of `reports`.
pub fn reports_to_csv(reports: &[TrialReport], path_for_errors: &Path) -> Result<Vec<u8>> {
    let csv_err = |source| Error::Csv {
        path: path_for_errors.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| io_err(path_for_errors, std::io::Error::other(e.to_string())))
}

/// Writes the CSV at `path`, the summary table, and the config sidecar.
pub fn emit_report(config: &ExperimentConfig, battery: &Battery, path: &Path) -> Result<()> {
    if battery.reports.is_empty() {
        return Err(Error::invalid("no trial reports to write"));
    }
    let (summary_path, config_path) = sidecar_paths(path);
    write_atomic(path, &reports_to_csv(&battery.reports, path)?)?;
    write_atomic(&summary_path, battery.summary.render().as_bytes())?;
    write_atomic(&config_path, config.to_kv().as_bytes())?;
    Ok(())
}

/// Parses a CSV written by [`emit_report`].
pub fn read_reports(path: &Path) -> Result<Vec<TrialReport>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::ConfigParse {
            line: 1,
            message: format!("unexpected CSV header `{header}`"),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SimOracle;

    fn small(method: Method) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ScenarioSpec::uniform_threshold(0.5), method, 0.1, 0.1).with_trials(3);
        c.grid_size = 101;
        c.pool_size = 200;
        c.erm_n = 100;
        c.mc_samples = 2000;
        c
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("bogus"), None);
    }

    #[test]
    fn config_round_trip() {
        let mut c = ExperimentConfig::new(
            ScenarioSpec::gaussian_halfspace(3)
                .with_label_noise(LabelNoise::Tsybakov { kappa: 1.5, mu: 0.7 })
                .with_comparison_noise(ComparisonNoise::BandAdversarial { nu_prime: 1e-4 }),
            Method::MarginAdgac,
            0.05,
            0.2,
        )
        .with_trials(7)
        .with_seed(42);
        c.batch_k = Some(9);
        c.output = Some("out/x.csv".into());
        c.constants.c3 = 2.5;
        let back = ExperimentConfig::parse(&c.to_kv()).unwrap();
        assert_eq!(back, c);
        let mut u = small(Method::A2Adgac);
        u.scenario.label_noise = LabelNoise::Adversarial { nu: 0.01 };
        assert_eq!(ExperimentConfig::parse(&u.to_kv()).unwrap(), u);
    }

    #[test]
    fn config_parse_errors() {
        assert!(matches!(
            ExperimentConfig::parse("epsilon = 0.1\ndelta = 0.1\n"),
            Err(Error::ConfigParse { .. })
        ));
        match ExperimentConfig::parse("method = a2-adgac\nepsilon = 0.1\ndelta = 0.1\nlabel_noise = loud\n") {
            Err(Error::ConfigParse { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("method = a2-adgac\nepsilon = 0.1\ndelta = 0.1\nfoo = 1\n") {
            Err(Error::ConfigParse { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inline_constants_override_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("k.conf"), "C3 = 7\nc0 = 3\n").unwrap();
        std::fs::write(
            dir.path().join("e.conf"),
            "method = adgac-only\nepsilon = 0.1\ndelta = 0.1\nc0 = 5\nconstants = k.conf\n",
        )
        .unwrap();
        let c = ExperimentConfig::load(&dir.path().join("e.conf")).unwrap();
        assert_eq!(c.constants.c3, 7.0);
        assert_eq!(c.constants.c0, 5.0);
    }

    #[test]
    fn incompatible_methods_fail_fast() {
        let c = small(Method::MarginAdgac);
        assert!(matches!(run_trials(&c), Err(Error::Incompatible(_))));
        let g = ExperimentConfig::new(ScenarioSpec::gaussian_halfspace(3), Method::A2Adgac, 0.1, 0.1);
        assert!(matches!(g.validate(), Err(Error::Incompatible(_))));
        assert!(small(Method::A2Adgac).with_trials(0).validate().is_err());
    }

    #[test]
    fn gate_flags_follow_constants() {
        let mut c = small(Method::A2Adgac);
        assert!(c.gate_flags().is_empty());
        c.epsilon = 0.6;
        assert_eq!(c.gate_flags(), vec!["gate_epsilon"]);
        c.epsilon = 0.05;
        c.scenario.comparison_noise = ComparisonNoise::BandAdversarial { nu_prime: 1e-3 };
        assert_eq!(c.gate_flags(), vec!["gate_nu_prime"]);
        c.scenario.comparison_noise = ComparisonNoise::Perfect;
        c.scenario.label_noise = LabelNoise::Adversarial { nu: 0.2 };
        assert_eq!(c.gate_flags(), vec!["gate_nu"]);
        c.method = Method::BaselineA2;
        assert!(c.gate_flags().is_empty());
    }

    #[test]
    fn every_method_runs_and_conserves_counts() {
        for m in [Method::AdgacOnly, Method::A2Adgac, Method::BaselineA2, Method::PassiveErm] {
            let b = run_trials(&small(m)).unwrap();
            assert_eq!(b.reports.len(), 3);
            for (i, r) in b.reports.iter().enumerate() {
                assert_eq!(r.seed, i as u64);
                assert!(!r.failed(), "{m}: {}", r.flags);
                assert!(!r.has_flag("accounting_mismatch"));
                assert!(r.err.is_finite());
                if !m.uses_comparisons() {
                    assert_eq!(r.comparisons, 0);
                }
            }
            assert_eq!(b.summary.total_labels, b.reports.iter().map(|r| r.labels).sum::<u64>());
        }
        let mut g = ExperimentConfig::new(ScenarioSpec::gaussian_halfspace(2), Method::MarginAdgac, 0.1, 0.2).with_trials(2);
        g.mc_samples = 2000;
        let b = run_trials(&g).unwrap();
        assert!(b.reports.iter().all(|r| !r.failed() && r.rounds == 4));
        g.method = Method::A2Adgac;
        g.grid_size = 64;
        assert!(run_trials(&g).unwrap().reports.iter().all(|r| !r.failed()));
    }

    #[test]
    fn batteries_are_deterministic() {
        let c = small(Method::A2Adgac).with_seed(9);
        let strip = |b: Battery| {
            b.reports
                .into_iter()
                .map(|mut r| {
                    r.wall_ms = 0.0;
                    r
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(run_trials(&c).unwrap()), strip(run_trials(&c).unwrap()));
    }

    #[test]
    fn trial_errors_are_recorded() {
        let mut c = small(Method::A2Adgac);
        c.constants.a2_n_mult = 1e15;
        let b = run_trials(&c).unwrap();
        assert!(b.reports.iter().all(|r| r.failed() && r.err.is_nan()));
        assert_eq!(b.summary.failed, 3);
        assert_eq!(b.summary.successes, 0);
    }

    #[test]
    fn erm_prefers_lowest_index_on_ties() {
        let class = ThresholdGrid::from_thresholds(vec![0.1, 0.2, 0.3, 0.9]).unwrap();
        let spec = ScenarioSpec::uniform_threshold(0.5);
        let sc = Scenario::new(spec.clone()).unwrap();
        let mut o: SimOracle<'_> = sc.oracle(stream_rng(0, 1));
        let mut r = stream_rng(1, 0);
        // One sample; when it lies outside (0.1, 0.3] the three low
        // thresholds tie and the first wins.
        let h = passive_erm(&spec, &class, 1, &mut o, &mut r).unwrap();
        let x = spec.sample_unlabeled(1, &mut stream_rng(1, 0)).unwrap().row(0)[0];
        let fits: Vec<usize> = (0..4)
            .filter(|&j| class.predict(j, &[x]) == spec.truth.label(&[x]))
            .collect();
        assert_eq!(h, fits[0]);
        assert!(passive_erm(&spec, &class, 0, &mut o, &mut r).is_err());
    }

    #[test]
    fn erm_single_sample_error_bounded() {
        let class = ThresholdGrid::unit(101).unwrap();
        let spec = ScenarioSpec::uniform_threshold(0.5);
        let sc = Scenario::new(spec.clone()).unwrap();
        for seed in 0..50 {
            let mut o = sc.oracle(stream_rng(seed, 1));
            let h = passive_erm(&spec, &class, 1, &mut o, &mut stream_rng(seed, 0)).unwrap();
            let t = class.threshold(h);
            assert!((t - 0.5).abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn erm_large_noiseless_sample_is_accurate() {
        let class = ThresholdGrid::unit(1001).unwrap();
        let spec = ScenarioSpec::uniform_threshold(0.37);
        let sc = Scenario::new(spec.clone()).unwrap();
        let mut o = sc.oracle(stream_rng(0, 1));
        let h = passive_erm(&spec, &class, 20_000, &mut o, &mut stream_rng(0, 0)).unwrap();
        assert!((class.threshold(h) - 0.37).abs() <= 1e-3 + 1e-12);
    }

    #[test]
    fn monte_carlo_error_matches_closed_form() {
        let spec = ScenarioSpec::uniform_threshold(0.5);
        let (p, se) = monte_carlo_error(&spec, |x| Label::from_bool(x[0] > 0.6), 100_000, &mut stream_rng(3, 2)).unwrap();
        assert!((p - 0.1).abs() <= 4.0 * se);
        assert!((se - (0.09f64 / 1e5).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn report_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let c = small(Method::BaselineA2);
        let mut b = run_trials(&c).unwrap();
        b.reports[1].flags = "gate_epsilon;error:budget_exceeded".into();
        b.reports[1].err = f64::NAN;
        emit_report(&c, &b, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 4);
        let back = read_reports(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&b.reports) {
            if a.err.is_nan() {
                assert!(b.err.is_nan());
                let (mut a, mut b) = (a.clone(), b.clone());
                a.err = 0.0;
                b.err = 0.0;
                a.err_se = 0.0;
                b.err_se = 0.0;
                assert_eq!(a, b);
            } else {
                assert_eq!(a, b);
            }
        }
        let (s, cfg) = sidecar_paths(&path);
        assert!(std::fs::read_to_string(s).unwrap().contains("success rate"));
        assert_eq!(ExperimentConfig::parse(&std::fs::read_to_string(cfg).unwrap()).unwrap(), c);
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn single_trial_csv_has_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        let c = small(Method::PassiveErm).with_trials(1);
        emit_report(&c, &run_trials(&c).unwrap(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let c = small(Method::PassiveErm).with_trials(1);
        let b = run_trials(&c).unwrap();
        let bad = Path::new("/nonexistent-dir/x.csv");
        match emit_report(&c, &b, bad) {
            Err(Error::Io { path, .. }) => assert!(path.starts_with("/nonexistent-dir")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quartiles_of_small_samples() {
        let q = Quartiles::of(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(q.median, 3.0);
        assert!(q.q1 <= q.median && q.median <= q.q3);
        assert!(Quartiles::of(vec![]).median.is_nan());
    }
}
