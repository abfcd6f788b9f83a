//! Seeded trial execution, batch statistics and sweeps.
//!
//! A trial is fully determined by the configuration, the master seed and
//! its index: its random stream is ChaCha8 seeded from the master seed with
//! the trial index as stream id. Batches run trials in parallel and
//! aggregate them in index order, so results do not depend on the number of
//! threads.

mod engine;
pub mod report;
pub mod schedule;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::operators::Portfolio;
use crate::theory;

pub use schedule::{ResolvedSigma, SigmaSchedule, TauSpec};

/// Default ARG update factor.
pub const DEFAULT_F: f64 = 1.5;
/// Default initial learning period.
pub const DEFAULT_TAU0: f64 = 1.0;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_BUCKETS: usize = 100;
pub const DEFAULT_SEED: u64 = 20_180_715;
/// The default evaluation budget is this multiple of `n^2`.
pub const DEFAULT_BUDGET_FACTOR: u64 = 20;

/// Learning mechanism as configured, before problem-size dependent
/// parameters are resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MechanismSpec {
    SimpleRandom,
    Permutation,
    Greedy,
    RandomGradient,
    Grg {
        tau: TauSpec,
    },
    Arg {
        sigma: SigmaSchedule,
        factor: f64,
        tau0: f64,
    },
}

impl MechanismSpec {
    pub fn arg(sigma: SigmaSchedule) -> Self {
        MechanismSpec::Arg {
            sigma,
            factor: DEFAULT_F,
            tau0: DEFAULT_TAU0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MechanismSpec::SimpleRandom => "simple-random",
            MechanismSpec::Permutation => "permutation",
            MechanismSpec::Greedy => "greedy",
            MechanismSpec::RandomGradient => "random-gradient",
            MechanismSpec::Grg { .. } => "grg",
            MechanismSpec::Arg { .. } => "arg",
        }
    }

    /// Mechanism for a name, with default parameters to be overridden
    /// by the caller.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "simple-random" | "simple_random" => MechanismSpec::SimpleRandom,
            "permutation" => MechanismSpec::Permutation,
            "greedy" => MechanismSpec::Greedy,
            "random-gradient" | "random_gradient" => MechanismSpec::RandomGradient,
            "grg" => MechanismSpec::Grg { tau: TauSpec::Infinite },
            "arg" => MechanismSpec::arg(SigmaSchedule::SqrtNOverLnN),
            _ => {
                return Err(Error::UnknownName {
                    kind: "mechanism",
                    value: name.to_string(),
                })
            }
        })
    }
}

impl FromStr for MechanismSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismSpec::from_name(s)
    }
}

/// Which simulation engine executes a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    /// Generates and evaluates every offspring.
    Stepwise,
    /// Skips runs of non-improving offspring by sampling their length from
    /// the geometric distribution, then samples the improving offspring
    /// from its conditional distribution. Same trial distribution as
    /// `Stepwise`, cost proportional to the number of improvements.
    #[default]
    FastForward,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Stepwise => "stepwise",
            Engine::FastForward => "fast-forward",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepwise" => Ok(Engine::Stepwise),
            "fast-forward" | "fast_forward" => Ok(Engine::FastForward),
            _ => Err(Error::UnknownName {
                kind: "engine",
                value: s.to_string(),
            }),
        }
    }
}

/// Everything needed to run a batch of trials.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub portfolio: Portfolio,
    pub mechanism: MechanismSpec,
    pub trials: usize,
    pub master_seed: u64,
    pub buckets: usize,
    pub tau_trace: bool,
    pub usage_trace: bool,
    /// Cap on fitness evaluations per trial; `None` means `20 n^2`.
    pub eval_budget: Option<u64>,
    pub engine: Engine,
}

/// Problem-size dependent values derived from a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub mechanism: Mechanism,
    pub sigma: Option<ResolvedSigma>,
    pub tau: Option<f64>,
    pub budget: u64,
}

impl ExperimentConfig {
    pub fn new(n: usize, portfolio: Portfolio, mechanism: MechanismSpec) -> Self {
        ExperimentConfig {
            n,
            portfolio,
            mechanism,
            trials: DEFAULT_TRIALS,
            master_seed: DEFAULT_SEED,
            buckets: DEFAULT_BUCKETS,
            tau_trace: false,
            usage_trace: false,
            eval_budget: None,
            engine: Engine::default(),
        }
    }

    pub fn budget(&self) -> u64 {
        self.eval_budget
            .unwrap_or_else(|| DEFAULT_BUDGET_FACTOR.saturating_mul((self.n as u64).saturating_mul(self.n as u64)))
    }

    /// Validates the configuration and resolves its schedules at `n`.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if self.buckets == 0 {
            return Err(Error::param("buckets", "must be at least 1"));
        }
        self.portfolio.check_fits(self.n)?;
        let budget = self.budget();
        if budget == 0 {
            return Err(Error::param("budget", "must be at least 1"));
        }
        let (mechanism, sigma, tau) = match self.mechanism {
            MechanismSpec::SimpleRandom => (Mechanism::SimpleRandom, None, None),
            MechanismSpec::Permutation => (Mechanism::Permutation, None, None),
            MechanismSpec::Greedy => (Mechanism::Greedy, None, None),
            MechanismSpec::RandomGradient => (Mechanism::RandomGradient, None, None),
            MechanismSpec::Grg { tau } => {
                let tau = tau.resolve(self.n);
                (Mechanism::grg(tau)?, None, Some(tau))
            }
            MechanismSpec::Arg { sigma, factor, tau0 } => {
                let resolved = sigma.resolve(self.n)?;
                (
                    Mechanism::arg(tau0, resolved.sigma, factor)?,
                    Some(resolved),
                    Some(tau0),
                )
            }
        };
        Ok(ResolvedConfig {
            mechanism,
            sigma,
            tau,
            budget,
        })
    }
}

/// Sample of the learning period taken when the fitness enters a new
/// percent of `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauSample {
    pub pct: u32,
    pub tau_over_n: f64,
}

/// Iteration counts per (fitness bucket, portfolio operator).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UsageMatrix {
    pub buckets: usize,
    pub ops: usize,
    counts: Vec<u64>,
}

impl UsageMatrix {
    pub fn new(buckets: usize, ops: usize) -> Self {
        UsageMatrix {
            buckets,
            ops,
            counts: vec![0; buckets * ops],
        }
    }

    pub fn get(&self, bucket: usize, op: usize) -> u64 {
        self.counts[bucket * self.ops + op]
    }

    pub fn bucket_total(&self, bucket: usize) -> u64 {
        self.counts[bucket * self.ops..(bucket + 1) * self.ops].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub(crate) fn add(&mut self, bucket: usize, op: usize, count: u64) {
        self.counts[bucket * self.ops + op] += count;
    }
}

/// Outcome of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    /// Fitness evaluations including the initial solution.
    pub evaluations: u64,
    pub reached_optimum: bool,
    pub final_fitness: usize,
    pub improvements: u64,
    pub usage: Option<UsageMatrix>,
    pub tau_samples: Vec<TauSample>,
    pub final_tau: Option<f64>,
    /// Iterations run while tau exceeded `tau_max` of the current fitness
    /// (ARG with tau tracing only).
    pub tau_excess: u64,
}

/// Per-batch values shared by all trials.
pub struct TrialContext<'a> {
    config: &'a ExperimentConfig,
    resolved: ResolvedConfig,
    tau_max: Option<Vec<f64>>,
}

impl<'a> TrialContext<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let resolved = config.resolve()?;
        let tau_max = match (resolved.sigma, config.tau_trace) {
            (Some(s), true) => Some(theory::tau_max_table(config.n, &config.portfolio, s.sigma)?),
            _ => None,
        };
        Ok(TrialContext {
            config,
            resolved,
            tau_max,
        })
    }

    pub fn resolved(&self) -> &ResolvedConfig {
        &self.resolved
    }

    pub fn run(&self, trial: u64) -> TrialResult {
        engine::run(self, trial)
    }
}

/// Random stream of one trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Runs trial `trial_index` of `config` in isolation.
pub fn run_trial(config: &ExperimentConfig, trial_index: u64) -> Result<TrialResult> {
    Ok(TrialContext::new(config)?.run(trial_index))
}

/// Aggregate statistics of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub n: usize,
    pub trials: usize,
    pub reached: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single trial).
    pub std_dev: f64,
    pub min: u64,
    pub max: u64,
    pub mean_over_n2: f64,
    /// Per bucket, per operator share of iterations in percent, averaged
    /// over the trials that visited the bucket.
    pub usage_pct: Option<Vec<Vec<f64>>>,
    /// Average tau/n for each fitness percent 0..100.
    pub tau_trajectory: Option<Vec<f64>>,
    /// Fraction of all iterations run with tau above `tau_max`.
    pub tau_excess_fraction: Option<f64>,
}

impl BatchSummary {
    pub fn from_trials(n: usize, results: &[TrialResult], tau_traced: bool) -> Self {
        let count = results.len();
        let evals: Vec<f64> = results.iter().map(|r| r.evaluations as f64).collect();
        let mean = evals.iter().sum::<f64>() / count as f64;
        let std_dev = if count > 1 {
            (evals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let usage_pct = results.first().and_then(|r| r.usage.as_ref()).map(|first| {
            let mut acc = vec![vec![0.0; first.ops]; first.buckets];
            let mut visits = vec![0usize; first.buckets];
            for usage in results.iter().filter_map(|r| r.usage.as_ref()) {
                for (b, row) in acc.iter_mut().enumerate() {
                    let total = usage.bucket_total(b);
                    if total == 0 {
                        continue;
                    }
                    visits[b] += 1;
                    for (op, cell) in row.iter_mut().enumerate() {
                        *cell += 100.0 * usage.get(b, op) as f64 / total as f64;
                    }
                }
            }
            for (row, &v) in acc.iter_mut().zip(&visits) {
                if v > 0 {
                    row.iter_mut().for_each(|cell| *cell /= v as f64);
                }
            }
            acc
        });
        let tau_trajectory = tau_traced.then(|| {
            let mut avg = vec![0.0; 100];
            let mut contributing = 0usize;
            for r in results {
                if let Some(curve) = tau_curve(&r.tau_samples) {
                    contributing += 1;
                    avg.iter_mut().zip(curve).for_each(|(a, v)| *a += v);
                }
            }
            avg.iter_mut().for_each(|a| *a /= contributing.max(1) as f64);
            avg
        });
        let tau_excess_fraction = (tau_traced && results.iter().any(|r| r.final_tau.is_some())).then(|| {
            let excess: u64 = results.iter().map(|r| r.tau_excess).sum();
            let iterations: u64 = results.iter().map(|r| r.evaluations - 1).sum();
            excess as f64 / iterations.max(1) as f64
        });
        BatchSummary {
            n,
            trials: count,
            reached: results.iter().filter(|r| r.reached_optimum).count(),
            mean,
            std_dev,
            min: results.iter().map(|r| r.evaluations).min().unwrap_or(0),
            max: results.iter().map(|r| r.evaluations).max().unwrap_or(0),
            mean_over_n2: mean / (n as f64 * n as f64),
            usage_pct,
            tau_trajectory,
            tau_excess_fraction,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.std_dev / (self.trials as f64).sqrt()
    }
}

/// tau/n at each fitness percent 0..100, carrying the last sample forward
/// over percents the run jumped across.
pub fn tau_curve(samples: &[TauSample]) -> Option<Vec<f64>> {
    let first = samples.first()?;
    let mut curve = Vec::with_capacity(100);
    let mut next = 0;
    let mut value = first.tau_over_n;
    for pct in 0..100u32 {
        while next < samples.len() && samples[next].pct <= pct {
            value = samples[next].tau_over_n;
            next += 1;
        }
        curve.push(value);
    }
    Some(curve)
}

/// A batch together with its raw trial results.
#[derive(Clone, Debug)]
pub struct BatchReport {
    pub config: ExperimentConfig,
    pub resolved: ResolvedConfig,
    pub trials: Vec<TrialResult>,
    pub summary: BatchSummary,
}

/// Runs all trials of `config` on the global thread pool.
pub fn run_batch(config: &ExperimentConfig) -> Result<BatchReport> {
    let ctx = TrialContext::new(config)?;
    let trials: Vec<TrialResult> = (0..config.trials as u64).into_par_iter().map(|t| ctx.run(t)).collect();
    Ok(finish_batch(config, ctx.resolved, trials))
}

/// Runs all trials of `config` on a dedicated pool of `threads` threads.
pub fn run_batch_with_threads(config: &ExperimentConfig, threads: usize) -> Result<BatchReport> {
    with_threads(threads, || run_batch(config))?
}

/// Runs `f` inside a dedicated pool of `threads` threads, so that batches
/// started from `f` use exactly that many workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Err(Error::param("threads", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param("threads", e.to_string()))?;
    Ok(pool.install(f))
}

fn finish_batch(config: &ExperimentConfig, resolved: ResolvedConfig, trials: Vec<TrialResult>) -> BatchReport {
    let summary = BatchSummary::from_trials(config.n, &trials, config.tau_trace);
    BatchReport {
        config: config.clone(),
        resolved,
        trials,
        summary,
    }
}

/// One column of a runtime sweep.
#[derive(Clone, Debug)]
pub struct SweepVariant {
    pub label: String,
    /// Template; its `n` is replaced by each swept size.
    pub config: ExperimentConfig,
}

/// Mean runtime / n^2 for each (n, variant).
#[derive(Clone, Debug)]
pub struct SweepTable {
    pub ns: Vec<usize>,
    pub labels: Vec<String>,
    /// `summaries[row][column]`.
    pub summaries: Vec<Vec<BatchSummary>>,
}

impl SweepTable {
    pub fn value(&self, row: usize, column: usize) -> f64 {
        self.summaries[row][column].mean_over_n2
    }
}

/// Runs every variant at every problem size in `ns`.
pub fn sweep(variants: &[SweepVariant], ns: &[usize]) -> Result<SweepTable> {
    let first = variants
        .first()
        .ok_or_else(|| Error::param("variants", "sweep needs at least one variant"))?;
    if let Some(v) = variants.iter().find(|v| v.config.portfolio != first.config.portfolio) {
        return Err(Error::param(
            "variants",
            format!(
                "variant {} uses portfolio {} instead of {}",
                v.label, v.config.portfolio, first.config.portfolio
            ),
        ));
    }
    let mut summaries = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut row = Vec::with_capacity(variants.len());
        for v in variants {
            let mut config = v.config.clone();
            config.n = n;
            row.push(run_batch(&config)?.summary);
        }
        summaries.push(row);
    }
    Ok(SweepTable {
        ns: ns.to_vec(),
        labels: variants.iter().map(|v| v.label.clone()).collect(),
        summaries,
    })
}
