//! Analytic reference values: best-possible expected runtimes of unbiased
//! (1+1) algorithms restricted to a portfolio of RLS operators, their
//! limiting constants, and the learning-period envelope `tau_max(i)`.

use crate::error::{Error, Result};
use crate::operators::{improvement_probability_unchecked, optimal_index_unchecked, OperatorId, Portfolio};

/// Kahan-Babuska compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.compensation
        } else {
            self.sum
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k > n {
        return Err(Error::OperatorTooLarge { m: k, n });
    }
    Ok(())
}

/// Fitness levels assigned to each operator of the initial segment
/// `{RLS_1..RLS_k}` in the best-possible runtime sum, as half-open ranges
/// `(m, lo..hi)`. RLS_k takes `0..ceil(n/k)` and RLS_x takes
/// `ceil(n/(x+1))..ceil(n/x)`; together they cover `0..n` exactly once.
pub fn operator_regions(n: usize, k: usize) -> Result<Vec<(usize, std::ops::Range<usize>)>> {
    check_k(n, k)?;
    let mut regions = vec![(k, 0..n.div_ceil(k))];
    for x in (1..k).rev() {
        regions.push((x, n.div_ceil(x + 1)..n.div_ceil(x)));
    }
    Ok(regions)
}

/// Best-possible expected runtime of an unbiased (1+1) algorithm using
/// `{RLS_1, ..., RLS_k}` on LeadingOnes of size `n`:
/// half the sum of the waiting times `1/p_m(i)` of the region operators.
pub fn expected_opt_runtime(n: usize, k: usize) -> Result<f64> {
    let mut acc = CompensatedSum::default();
    for (m, levels) in operator_regions(n, k)? {
        for i in levels {
            acc.add(1.0 / improvement_probability_unchecked(m, i, n));
        }
    }
    Ok(0.5 * acc.value())
}

/// Same quantity for an arbitrary portfolio, taking at every level the
/// operator with the largest improvement probability. Infinite when some
/// level cannot be left (no RLS_1 in the portfolio).
pub fn expected_opt_runtime_for(n: usize, portfolio: &Portfolio) -> Result<f64> {
    portfolio.check_fits(n)?;
    region_runtime(n, 0..n, portfolio)
}

/// Expected time the best-possible algorithm over `portfolio` spends on the
/// fitness levels in `levels`.
pub fn region_runtime(n: usize, levels: std::ops::Range<usize>, portfolio: &Portfolio) -> Result<f64> {
    portfolio.check_fits(n)?;
    if levels.end > n {
        return Err(Error::FitnessOutOfDomain { i: levels.end - 1, n });
    }
    let acc: CompensatedSum = levels
        .map(|i| {
            1.0 / improvement_probability_unchecked(portfolio.get(optimal_index_unchecked(i, n, portfolio)).m(), i, n)
        })
        .collect();
    Ok(0.5 * acc.value())
}

/// `lim E[T_k,opt] / n^2`. Closed forms for k in {1, 2, 3, 5}; other values
/// are evaluated numerically at `n = 10^7`.
pub fn leading_constant(k: usize) -> Result<f64> {
    let (ln2, ln3) = (2f64.ln(), 3f64.ln());
    Ok(match k {
        0 => return Err(Error::param("k", "must be at least 1")),
        1 => 0.5,
        2 => (1.0 + ln2) / 4.0,
        3 => 1.0 / 3.0 + ln2 / 2.0 - ln3 / 4.0,
        5 => 3721.0 / 11520.0 + ln2 / 2.0 - ln3 / 4.0,
        _ => {
            let n = 10_000_000usize;
            expected_opt_runtime(n, k)? / (n as f64 * n as f64)
        }
    })
}

/// Whether [`leading_constant`] has a closed form for `k`.
pub fn has_closed_form(k: usize) -> bool {
    matches!(k, 1 | 2 | 3 | 5)
}

/// Improvement probability of the best portfolio operator at level `i`.
pub fn optimal_probability(i: usize, n: usize, portfolio: &Portfolio) -> Result<f64> {
    if i >= n {
        return Err(Error::FitnessOutOfDomain { i, n });
    }
    portfolio.check_fits(n)?;
    let op = portfolio.get(optimal_index_unchecked(i, n, portfolio));
    Ok(improvement_probability_unchecked(op.m(), i, n))
}

/// Upper envelope for the ARG learning period at level `i`:
/// `(1 + 4/ln n) * sigma / p_opt(i)`.
pub fn tau_max(i: usize, n: usize, portfolio: &Portfolio, sigma: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::param("n", "tau_max needs n >= 3"));
    }
    let p = optimal_probability(i, n, portfolio)?;
    Ok(envelope_factor(n) * sigma / p)
}

fn envelope_factor(n: usize) -> f64 {
    1.0 + 4.0 / (n as f64).ln()
}

/// `tau_max(i)` for every level `0..n`.
pub fn tau_max_table(n: usize, portfolio: &Portfolio, sigma: f64) -> Result<Vec<f64>> {
    tau_max(0, n, portfolio, sigma)?;
    let factor = envelope_factor(n) * sigma;
    Ok((0..n)
        .map(|i| {
            let m = portfolio.get(optimal_index_unchecked(i, n, portfolio)).m();
            factor / improvement_probability_unchecked(m, i, n)
        })
        .collect())
}

/// Per-level optimal operators and waiting times for one `(n, portfolio)`.
#[derive(Clone, Debug)]
pub struct TheoryTable {
    pub n: usize,
    pub portfolio: Portfolio,
    pub optimal: Vec<OperatorId>,
    pub waiting_time: Vec<f64>,
    pub expected_runtime: f64,
}

impl TheoryTable {
    pub fn build(n: usize, portfolio: &Portfolio) -> Result<Self> {
        portfolio.check_fits(n)?;
        let mut optimal = Vec::with_capacity(n);
        let mut waiting_time = Vec::with_capacity(n);
        let mut acc = CompensatedSum::default();
        for i in 0..n {
            let op = portfolio.get(optimal_index_unchecked(i, n, portfolio));
            let w = 1.0 / improvement_probability_unchecked(op.m(), i, n);
            optimal.push(op);
            waiting_time.push(w);
            acc.add(w);
        }
        Ok(TheoryTable {
            n,
            portfolio: portfolio.clone(),
            optimal,
            waiting_time,
            expected_runtime: 0.5 * acc.value(),
        })
    }

    pub fn normalized_runtime(&self) -> f64 {
        self.expected_runtime / (self.n as f64 * self.n as f64)
    }
}

/// One row of the theory TSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryRow {
    pub n: usize,
    pub k: usize,
    pub expected_runtime: f64,
    pub normalized: f64,
    pub leading_constant: f64,
}

impl TheoryRow {
    pub fn compute(n: usize, k: usize) -> Result<Self> {
        let expected_runtime = expected_opt_runtime(n, k)?;
        Ok(TheoryRow {
            n,
            k,
            expected_runtime,
            normalized: expected_runtime / (n as f64 * n as f64),
            leading_constant: leading_constant(k)?,
        })
    }
}

pub const THEORY_HEADER: &str = "n\tk\tE_opt\tE_opt_over_n2\tleading_constant";

pub fn theory_tsv(rows: &[TheoryRow]) -> String {
    let mut out = String::from(THEORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.n, r.k, r.expected_runtime, r.normalized, r.leading_constant
        ));
    }
    out
}

pub const TAU_MAX_HEADER: &str = "pct_lo\ttau_max_over_n";

/// `tau_max / n` at the first fitness level of each percent of `0..n`.
pub fn tau_max_tsv(n: usize, portfolio: &Portfolio, sigma: f64) -> Result<String> {
    let table = tau_max_table(n, portfolio, sigma)?;
    let mut out = String::from(TAU_MAX_HEADER);
    out.push('\n');
    for pct in 0..100usize {
        let i = (pct * n).div_ceil(100).min(n - 1);
        out.push_str(&format!("{}\t{:.6}\n", pct, table[i] / n as f64));
    }
    Ok(out)
}
