//! Trial execution.
//!
//! The stepwise engine generates every offspring. The fast-forward engine
//! relies on elitism: a rejected offspring leaves the parent unchanged, so
//! between two improvements every evaluation is an independent Bernoulli
//! trial with the improvement probability of its operator. Runs of
//! failures are drawn from the geometric distribution and the improving
//! flip set from its conditional law (first zero flipped, prefix intact,
//! remaining flips uniform over the suffix).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};

use super::{trial_rng, Engine, TauSample, TrialContext, TrialResult, UsageMatrix};
use crate::fitness::BitString;
use crate::mechanisms::{greedy_step_in_place, Mechanism, MechanismState, Selection};
use crate::operators::{improvement_probability_unchecked, sample_improving_flips, FlipSampler, Portfolio};

struct Recorder<'a> {
    n: usize,
    buckets: usize,
    usage: Option<UsageMatrix>,
    tau_samples: Option<Vec<TauSample>>,
    last_pct: u32,
    tau_max: Option<&'a [f64]>,
    tau_excess: u64,
}

impl Recorder<'_> {
    #[inline]
    fn iterations(&mut self, fitness: usize, op: usize, count: u64, tau: Option<f64>) {
        if count == 0 {
            return;
        }
        if let Some(usage) = &mut self.usage {
            usage.add(fitness * self.buckets / self.n, op, count);
        }
        if let (Some(table), Some(tau)) = (self.tau_max, tau) {
            if tau > table[fitness] {
                self.tau_excess += count;
            }
        }
    }

    fn fitness_changed(&mut self, fitness: usize, tau: Option<f64>) {
        let (Some(samples), Some(tau)) = (&mut self.tau_samples, tau) else {
            return;
        };
        if fitness >= self.n {
            return;
        }
        let pct = (fitness * 100 / self.n) as u32;
        if pct != self.last_pct {
            self.last_pct = pct;
            samples.push(TauSample {
                pct,
                tau_over_n: tau / self.n as f64,
            });
        }
    }
}

struct TrialRun<'a> {
    n: usize,
    portfolio: &'a Portfolio,
    x: BitString,
    state: MechanismState,
    rec: Recorder<'a>,
    rng: ChaCha8Rng,
    evaluations: u64,
    budget: u64,
    improvements: u64,
    flips: Vec<usize>,
    probs: Vec<f64>,
}

pub(super) fn run(ctx: &TrialContext<'_>, trial: u64) -> TrialResult {
    let config = ctx.config;
    let n = config.n;
    let mut rng = trial_rng(config.master_seed, trial);
    let x = BitString::random(n, &mut rng).expect("validated problem size");
    let state = MechanismState::new(&ctx.resolved.mechanism, &config.portfolio).expect("validated mechanism");
    let tracks_tau = config.tau_trace && state.tau().is_some();
    let rec = Recorder {
        n,
        buckets: config.buckets,
        usage: config
            .usage_trace
            .then(|| UsageMatrix::new(config.buckets, config.portfolio.len())),
        tau_samples: tracks_tau.then(Vec::new),
        last_pct: u32::MAX,
        tau_max: ctx.tau_max.as_deref(),
        tau_excess: 0,
    };
    let mut run = TrialRun {
        n,
        portfolio: &config.portfolio,
        x,
        state,
        rec,
        rng,
        evaluations: 1,
        budget: ctx.resolved.budget,
        improvements: 0,
        flips: Vec::with_capacity(config.portfolio.max_size()),
        probs: vec![0.0; config.portfolio.len()],
    };
    let tau = run.state.tau();
    run.rec.fitness_changed(run.x.fitness(), tau);

    match (config.engine, ctx.resolved.mechanism) {
        (Engine::Stepwise, _) => run.stepwise(),
        (Engine::FastForward, Mechanism::Grg { .. } | Mechanism::Arg(_)) => run.ff_phased(),
        (Engine::FastForward, Mechanism::SimpleRandom) => run.ff_simple_random(),
        (Engine::FastForward, Mechanism::RandomGradient) => run.ff_random_gradient(),
        (Engine::FastForward, Mechanism::Permutation) => run.ff_permutation(),
        (Engine::FastForward, Mechanism::Greedy) => run.ff_greedy(),
    }

    TrialResult {
        trial,
        evaluations: run.evaluations,
        reached_optimum: run.x.is_optimal(),
        final_fitness: run.x.fitness(),
        improvements: run.improvements,
        usage: run.rec.usage,
        tau_samples: run.rec.tau_samples.unwrap_or_default(),
        final_tau: run.state.tau(),
        tau_excess: run.rec.tau_excess,
    }
}

/// Failures before the first success of a Bernoulli(p) sequence.
fn failures_before_success(p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if p <= 0.0 {
        u64::MAX
    } else if p >= 1.0 {
        0
    } else {
        Geometric::new(p).expect("probability in (0, 1)").sample(rng)
    }
}

fn weighted_index(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (idx, &w) in weights.iter().enumerate() {
        if u < w {
            return idx;
        }
        u -= w;
    }
    // rounding left a sliver of mass; take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl TrialRun<'_> {
    fn done(&self) -> bool {
        self.x.is_optimal() || self.evaluations >= self.budget
    }

    fn refresh_probs(&mut self) {
        let f = self.x.fitness();
        for (p, op) in self.probs.iter_mut().zip(self.portfolio.operators()) {
            *p = improvement_probability_unchecked(op.m(), f, self.n);
        }
    }

    /// Replaces the parent by an offspring of operator `op` drawn
    /// conditionally on improving.
    fn improve(&mut self, op: usize) {
        let f = self.x.fitness();
        let m = self.portfolio.get(op).m();
        sample_improving_flips(f, self.n, m, &mut self.rng, &mut self.flips);
        let nf = self.x.incremental_unchecked(&self.flips);
        debug_assert!(nf > f);
        self.x.apply_flips_unchecked(&self.flips, nf);
        self.improvements += 1;
    }

    fn stepwise(&mut self) {
        let mut sampler = FlipSampler::new(self.n);
        let ops = self.portfolio.len() as u64;
        while !self.done() {
            let f = self.x.fitness();
            match self.state.select(&mut self.rng) {
                Selection::Single(op) => {
                    self.rec.iterations(f, op, 1, self.state.tau());
                    let flips = sampler.sample(self.portfolio.get(op).m(), &mut self.rng);
                    let nf = self.x.incremental_unchecked(flips);
                    self.evaluations += 1;
                    let improved = nf > f;
                    if improved {
                        self.x.apply_flips_unchecked(flips, nf);
                        self.improvements += 1;
                    }
                    self.state.feedback(improved);
                    if improved {
                        self.rec.fitness_changed(nf, self.state.tau());
                    }
                }
                Selection::All => {
                    if self.evaluations + ops > self.budget {
                        break;
                    }
                    for op in 0..self.portfolio.len() {
                        self.rec.iterations(f, op, 1, None);
                    }
                    self.evaluations += ops;
                    let winner = greedy_step_in_place(
                        &mut self.x,
                        self.portfolio,
                        &mut sampler,
                        &mut self.flips,
                        &mut self.rng,
                    );
                    if winner.is_some() {
                        self.improvements += 1;
                        self.rec.fitness_changed(self.x.fitness(), None);
                    }
                }
            }
        }
    }

    /// GRG and ARG: the operator is fixed for the whole phase, so one
    /// geometric draw decides whether the phase fails before the next
    /// improvement.
    fn ff_phased(&mut self) {
        while !self.done() {
            let Selection::Single(op) = self.state.select(&mut self.rng) else {
                unreachable!("phased mechanisms select single operators");
            };
            let f = self.x.fitness();
            let p = improvement_probability_unchecked(self.portfolio.get(op).m(), f, self.n);
            let remaining = self.state.remaining_in_phase().expect("phased mechanism");
            let left = self.budget - self.evaluations;
            let tau = self.state.tau();
            let failures = failures_before_success(p, &mut self.rng);
            if failures >= remaining {
                if remaining > left {
                    self.rec.iterations(f, op, left, tau);
                    self.evaluations = self.budget;
                    return;
                }
                self.rec.iterations(f, op, remaining, tau);
                self.evaluations += remaining;
                self.state.record_failures(remaining);
            } else {
                if failures >= left {
                    self.rec.iterations(f, op, left, tau);
                    self.evaluations = self.budget;
                    return;
                }
                self.rec.iterations(f, op, failures + 1, tau);
                self.evaluations += failures + 1;
                if failures > 0 {
                    self.state.record_failures(failures);
                }
                self.improve(op);
                self.state.feedback(true);
                self.rec.fitness_changed(self.x.fitness(), self.state.tau());
            }
        }
    }

    /// Iterations with a uniformly drawn operator until the first
    /// improvement. Returns the improving operator, or `None` when the
    /// budget ran out first. Expects `self.probs` to be current.
    fn uniform_until_success(&mut self) -> Option<usize> {
        let f = self.x.fitness();
        let k = self.probs.len();
        let mean_p = self.probs.iter().sum::<f64>() / k as f64;
        let left = self.budget - self.evaluations;
        let failures = failures_before_success(mean_p, &mut self.rng);
        let exhausted = failures >= left;
        let failed = if exhausted { left } else { failures };

        // operators of failed iterations: multinomial with weights 1 - p
        let mut remaining = failed;
        let mut mass: f64 = self.probs.iter().map(|p| 1.0 - p).sum();
        for op in 0..k {
            if remaining == 0 {
                break;
            }
            let w = 1.0 - self.probs[op];
            let count = if op + 1 == k || mass <= w {
                remaining
            } else {
                Binomial::new(remaining, (w / mass).clamp(0.0, 1.0))
                    .expect("valid binomial")
                    .sample(&mut self.rng)
            };
            self.rec.iterations(f, op, count, None);
            remaining -= count;
            mass -= w;
        }
        self.evaluations += failed;
        if exhausted {
            return None;
        }
        let op = weighted_index(&self.probs, mean_p * k as f64, &mut self.rng);
        self.rec.iterations(f, op, 1, None);
        self.evaluations += 1;
        Some(op)
    }

    fn ff_simple_random(&mut self) {
        while !self.done() {
            self.refresh_probs();
            match self.uniform_until_success() {
                Some(op) => {
                    self.improve(op);
                    self.rec.fitness_changed(self.x.fitness(), None);
                }
                None => return,
            }
        }
    }

    fn ff_random_gradient(&mut self) {
        let mut kept: Option<usize> = None;
        while !self.done() {
            self.refresh_probs();
            let f = self.x.fitness();
            let improving = match kept {
                Some(op) => {
                    self.rec.iterations(f, op, 1, None);
                    self.evaluations += 1;
                    (self.rng.random::<f64>() < self.probs[op]).then_some(op)
                }
                None => match self.uniform_until_success() {
                    Some(op) => Some(op),
                    None => return,
                },
            };
            kept = improving;
            if let Some(op) = improving {
                self.improve(op);
                self.rec.fitness_changed(self.x.fitness(), None);
            }
        }
    }

    fn ff_permutation(&mut self) {
        let k = self.portfolio.len();
        let mut order: Vec<usize> = (0..k).collect();
        let mut cursor = k;
        while !self.done() {
            self.refresh_probs();
            let f = self.x.fitness();
            if cursor < k {
                let op = order[cursor];
                cursor += 1;
                self.rec.iterations(f, op, 1, None);
                self.evaluations += 1;
                if self.rng.random::<f64>() < self.probs[op] {
                    self.improve(op);
                    self.rec.fitness_changed(self.x.fitness(), None);
                }
                continue;
            }
            // whole passes without an improvement, then one pass that has one
            let pass_fail: f64 = self.probs.iter().map(|p| 1.0 - p).product();
            let passes = failures_before_success(1.0 - pass_fail, &mut self.rng);
            let affordable = (self.budget - self.evaluations) / k as u64;
            let skipped = passes.min(affordable);
            for op in 0..k {
                self.rec.iterations(f, op, skipped, None);
            }
            self.evaluations += skipped * k as u64;
            if passes >= affordable {
                // fewer than k evaluations left cannot hold a full pass
                self.evaluations = self.evaluations.max(self.budget);
                return;
            }
            order.shuffle(&mut self.rng);
            for (pos, &op) in order.iter().enumerate() {
                self.rec.iterations(f, op, 1, None);
                self.evaluations += 1;
                let rest_fail: f64 = order[pos..].iter().map(|&o| 1.0 - self.probs[o]).product();
                cursor = pos + 1;
                if self.probs[op] <= 0.0 {
                    continue;
                }
                let p = self.probs[op] / (1.0 - rest_fail);
                if p >= 1.0 - 1e-12 || self.rng.random::<f64>() < p {
                    self.improve(op);
                    self.rec.fitness_changed(self.x.fitness(), None);
                    break;
                }
            }
        }
    }

    fn ff_greedy(&mut self) {
        let k = self.portfolio.len();
        let mut best_flips = Vec::with_capacity(self.portfolio.max_size());
        let mut weights = vec![0.0; k];
        while !self.done() {
            self.refresh_probs();
            let f = self.x.fitness();
            let step_fail: f64 = self.probs.iter().map(|p| 1.0 - p).product();
            let steps = failures_before_success(1.0 - step_fail, &mut self.rng);
            let affordable = (self.budget - self.evaluations) / k as u64;
            if steps >= affordable {
                for op in 0..k {
                    self.rec.iterations(f, op, affordable, None);
                }
                self.evaluations += affordable * k as u64;
                self.evaluations = self.evaluations.max(self.budget);
                return;
            }
            for op in 0..k {
                self.rec.iterations(f, op, steps + 1, None);
            }
            self.evaluations += (steps + 1) * k as u64;

            // first improving operator, then independent outcomes after it
            let mut none_before = 1.0;
            for (w, p) in weights.iter_mut().zip(&self.probs) {
                *w = none_before * p;
                none_before *= 1.0 - p;
            }
            let first = weighted_index(&weights, 1.0 - step_fail, &mut self.rng);
            let mut best: Option<(usize, usize)> = None;
            let mut ties = 0u32;
            for op in first..k {
                if op > first && self.rng.random::<f64>() >= self.probs[op] {
                    continue;
                }
                let m = self.portfolio.get(op).m();
                sample_improving_flips(f, self.n, m, &mut self.rng, &mut self.flips);
                let nf = self.x.incremental_unchecked(&self.flips);
                let replace = match best {
                    Some((_, bf)) if nf < bf => false,
                    Some((_, bf)) if nf == bf => {
                        ties += 1;
                        self.rng.random_range(0..ties) == 0
                    }
                    _ => {
                        ties = 1;
                        true
                    }
                };
                if replace {
                    best = Some((op, nf));
                    best_flips.clear();
                    best_flips.extend_from_slice(&self.flips);
                }
            }
            let (_, nf) = best.expect("at least one improving operator");
            self.x.apply_flips_unchecked(&best_flips, nf);
            self.improvements += 1;
            self.rec.fitness_changed(nf, None);
        }
    }
}
