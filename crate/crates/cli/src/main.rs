//! `adgac-lab`: command-line front end for the trial batteries and the
//! numerical checks.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 a result fell
//! below a requested threshold.

use std::path::PathBuf;
use std::process::ExitCode;

use adgac_core::constants::TunableConstants;
use adgac_core::experiment::{emit_report, run_trials, stream_rng, ExperimentConfig, Method};
use adgac_core::theory::{lemma_equality_instance, lemma_min_f, lemma_random_battery, minimax_refinement, ScoreBase};
use adgac_core::{ComparisonNoise, Distribution, GroundTruth, LabelNoise, ScenarioSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "adgac-lab", version, about = "Active learning with label and comparison oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label a pool with ADGAC and score it against the Bayes labels.
    AdgacRun(Battery),
    /// Disagreement-based learner labeling with ADGAC.
    A2(Battery),
    /// Margin-based halfspace learner labeling with ADGAC.
    Margin(Battery),
    /// Label-only disagreement-based baseline.
    BaselineA2(Battery),
    /// Passive empirical risk minimization.
    Erm(Battery),
    /// Random battery of the prefix/suffix inequality.
    LemmaCheck(LemmaArgs),
    /// Adversarial score distortion versus the best threshold.
    MinimaxCheck(MinimaxArgs),
    /// Run a battery described entirely by a config file.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseArg {
    None,
    Massart,
    Tsybakov,
    Adversarial,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistArg {
    Uniform,
    Gaussian,
}

#[derive(Args, Debug, Default)]
struct Battery {
    /// Target error.
    #[arg(long)]
    eps: Option<f64>,
    /// Failure probability.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV report path (summary and config are written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Constants file replacing the frozen defaults.
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long, value_enum)]
    dist: Option<DistArg>,
    #[arg(long)]
    dim: Option<usize>,
    /// True threshold for the uniform distribution.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    label_noise: Option<NoiseArg>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Comparison-noise mass; 0 keeps the comparison oracle perfect.
    #[arg(long)]
    nu_prime: Option<f64>,
    /// Size of the finite hypothesis class.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Pool size for adgac-run.
    #[arg(long)]
    n: Option<usize>,
    /// Fixed label batch for adgac-run.
    #[arg(long)]
    k: Option<usize>,
    /// Sample size for erm.
    #[arg(long)]
    erm_n: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Exit with code 3 when the success rate is below this value.
    #[arg(long)]
    min_success: Option<f64>,
}

#[derive(Args, Debug)]
struct LemmaArgs {
    #[arg(long, default_value_t = 10_000)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MinimaxArgs {
    #[arg(long, default_value_t = 0.01)]
    nu_prime: f64,
    /// Quantile grid size.
    #[arg(long, default_value_t = 10_000)]
    grid: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    base: DistArg,
    #[arg(long, default_value_t = 0.5)]
    t_star: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long)]
    min_success: Option<f64>,
}

enum Failure {
    Runtime(String),
    Threshold(String),
}

impl From<adgac_core::Error> for Failure {
    fn from(e: adgac_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("threshold not met: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::AdgacRun(b) => battery(Method::AdgacOnly, b),
        Command::A2(b) => battery(Method::A2Adgac, b),
        Command::Margin(b) => battery(Method::MarginAdgac, b),
        Command::BaselineA2(b) => battery(Method::BaselineA2, b),
        Command::Erm(b) => battery(Method::PassiveErm, b),
        Command::Bench(a) => {
            let mut c = ExperimentConfig::load(&a.config)?;
            if let Some(p) = &a.constants {
                c.constants = TunableConstants::load(p)?;
            }
            if a.out.is_some() {
                c.output = a.out;
            }
            execute(&c, a.min_success)
        }
        Command::LemmaCheck(a) => lemma_check(a),
        Command::MinimaxCheck(a) => minimax_check(a),
    }
}

fn scenario_from_flags(b: &Battery, method: Method) -> ScenarioSpec {
    let dist = b.dist.unwrap_or(if method == Method::MarginAdgac {
        DistArg::Gaussian
    } else {
        DistArg::Uniform
    });
    match dist {
        DistArg::Uniform => ScenarioSpec::uniform_threshold(b.threshold.unwrap_or(0.5)),
        DistArg::Gaussian => ScenarioSpec::gaussian_halfspace(b.dim.unwrap_or(2)),
    }
}

fn config_from_flags(method: Method, b: Battery) -> Result<ExperimentConfig, Failure> {
    let mut c = match &b.config {
        Some(p) => {
            let mut c = ExperimentConfig::load(p)?;
            if c.method != method {
                return Err(Failure::Runtime(format!(
                    "config file describes {} but the subcommand runs {method}",
                    c.method
                )));
            }
            if b.dist.is_some() || b.dim.is_some() || b.threshold.is_some() {
                let old = c.scenario.clone();
                c.scenario = scenario_from_flags(&b, method)
                    .with_label_noise(old.label_noise)
                    .with_comparison_noise(old.comparison_noise)
                    .with_seed(old.seed);
            }
            c
        }
        None => ExperimentConfig::new(scenario_from_flags(&b, method), method, 0.05, 0.1),
    };
    if let Some(p) = &b.constants {
        c.constants = TunableConstants::load(p)?;
    }
    if let Some(v) = b.eps {
        c.epsilon = v;
    }
    if let Some(v) = b.delta {
        c.delta = v;
    }
    if let Some(v) = b.trials {
        c.trials = v;
    }
    if let Some(v) = b.seed {
        c = c.with_seed(v);
    }
    if let Some(v) = b.grid_size {
        c.grid_size = v;
    }
    if let Some(v) = b.n {
        c.pool_size = v;
    }
    if b.k.is_some() {
        c.batch_k = b.k;
    }
    if let Some(v) = b.erm_n {
        c.erm_n = v;
    }
    if let Some(v) = b.mc_samples {
        c.mc_samples = v;
    }
    if b.out.is_some() {
        c.output = b.out.clone();
    }
    match b.label_noise {
        Some(NoiseArg::None) => c.scenario.label_noise = LabelNoise::NONE,
        Some(NoiseArg::Massart) => c.scenario.label_noise = LabelNoise::Massart { beta: b.beta.unwrap_or(0.2) },
        Some(NoiseArg::Tsybakov) => {
            c.scenario.label_noise = LabelNoise::Tsybakov {
                kappa: b.kappa.unwrap_or(2.0),
                mu: b.mu.unwrap_or(1.0),
            }
        }
        Some(NoiseArg::Adversarial) => c.scenario.label_noise = LabelNoise::Adversarial { nu: b.nu.unwrap_or(0.01) },
        None => {
            if b.beta.is_some() || b.kappa.is_some() || b.mu.is_some() || b.nu.is_some() {
                return Err(Failure::Runtime("noise parameters need --label-noise".into()));
            }
        }
    }
    match b.nu_prime {
        Some(v) if v > 0.0 => c.scenario.comparison_noise = ComparisonNoise::BandAdversarial { nu_prime: v },
        Some(_) => c.scenario.comparison_noise = ComparisonNoise::Perfect,
        None => {}
    }
    Ok(c)
}

fn battery(method: Method, b: Battery) -> Result<(), Failure> {
    let min_success = b.min_success;
    let c = config_from_flags(method, b)?;
    execute(&c, min_success)
}

fn describe(c: &ExperimentConfig) -> String {
    let s = &c.scenario;
    let truth = match &s.truth {
        GroundTruth::Threshold(t) => format!("threshold {t}"),
        GroundTruth::Halfspace(_) => "halfspace e1".to_string(),
    };
    let dist = match s.dist {
        Distribution::UniformInterval => "uniform(0,1)".to_string(),
        Distribution::IsotropicGaussian => format!("gaussian d={}", s.dim),
    };
    let label = match s.label_noise {
        n if n == LabelNoise::NONE => "none".to_string(),
        LabelNoise::Massart { beta } => format!("massart beta={beta}"),
        LabelNoise::Tsybakov { kappa, mu } => format!("tsybakov kappa={kappa} mu={mu}"),
        LabelNoise::Adversarial { nu } => format!("adversarial nu={nu}"),
    };
    let comparison = match s.comparison_noise {
        ComparisonNoise::Perfect => "perfect".to_string(),
        ComparisonNoise::BandAdversarial { nu_prime } => format!("band nu'={nu_prime}"),
    };
    format!(
        "{} on {dist}, {truth}, label noise {label}, comparisons {comparison}, eps {} delta {}, {} trials from seed {}",
        c.method, c.epsilon, c.delta, c.trials, c.seed
    )
}

fn execute(c: &ExperimentConfig, min_success: Option<f64>) -> Result<(), Failure> {
    let b = run_trials(c)?;
    println!("{}", describe(c));
    for f in c.gate_flags() {
        println!("warning: configuration violates {f}");
    }
    print!("{}", b.summary.render());
    if let Some(p) = &c.output {
        emit_report(c, &b, p)?;
        println!("report written to {}", p.display());
    }
    if let Some(m) = min_success {
        if b.summary.success_rate < m {
            return Err(Failure::Threshold(format!(
                "success rate {:.4} below {m}",
                b.summary.success_rate
            )));
        }
    }
    Ok(())
}

fn lemma_check(a: LemmaArgs) -> Result<(), Failure> {
    let b = lemma_random_battery(a.instances, a.n_max, &mut stream_rng(a.seed, 0))?;
    println!(
        "random instances: {} (n <= {}), violations: {}, worst min - bound: {:.3e}",
        b.instances, a.n_max, b.violations, b.worst_excess
    );
    let mut worst: f64 = 0.0;
    for n in 1..=a.n_max {
        let (x, y) = lemma_equality_instance(n, 1.0);
        let o = lemma_min_f(&x, &y, Some(1.0))?;
        worst = worst.max((o.min - o.bound).abs());
    }
    println!("equality configuration, n = 1..={}: largest |min - bound| = {worst:.3e}", a.n_max);
    if b.violations > 0 || worst > 1e-9 {
        return Err(Failure::Threshold("inequality check failed".into()));
    }
    Ok(())
}

fn minimax_check(a: MinimaxArgs) -> Result<(), Failure> {
    let base = match a.base {
        DistArg::Uniform => ScoreBase::Uniform { t_star: a.t_star },
        DistArg::Gaussian => ScoreBase::Gaussian { t_star: a.t_star },
    };
    let (m, m2) = minimax_refinement(base, a.nu_prime, a.grid)?;
    let tol = 4.0 / a.grid as f64;
    println!("grid {}: comparison error {:.6} (target {}), best threshold error {:.6} (target {:.6}), threshold {:.6}", m.n, m.comparison_error, a.nu_prime, m.threshold_error, a.nu_prime.sqrt(), m.threshold);
    println!(
        "grid {}: comparison gap {:.3e}, threshold gap {:.3e}",
        m2.n, m2.comparison_gap, m2.threshold_gap
    );
    if m.comparison_gap > tol || m.threshold_gap > tol {
        return Err(Failure::Threshold(format!("gap exceeds 4/n = {tol:.1e}")));
    }
    Ok(())
}
