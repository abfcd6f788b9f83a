//! RLS_m mutation operators and their improvement probabilities on
//! LeadingOnes.

use num_rational::Ratio;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fitness::BitString;

/// An RLS operator that flips exactly `m` distinct bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperatorId(usize);

impl OperatorId {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidOperator(m));
        }
        Ok(OperatorId(m))
    }

    /// Neighbourhood size.
    pub fn m(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for OperatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RLS_{}", self.0)
    }
}

/// Ordered set of neighbourhood sizes available to a hyper-heuristic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Portfolio {
    ops: Vec<OperatorId>,
}

impl Portfolio {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        let valid = !sizes.is_empty() && sizes[0] >= 1 && sizes.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(Error::InvalidPortfolio(sizes.to_vec()));
        }
        Ok(Portfolio {
            ops: sizes.iter().map(|&m| OperatorId(m)).collect(),
        })
    }

    /// The initial segment `{RLS_1, ..., RLS_k}`.
    pub fn initial_segment(k: usize) -> Result<Self> {
        Self::new(&(1..=k).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, idx: usize) -> OperatorId {
        self.ops[idx]
    }

    pub fn operators(&self) -> &[OperatorId] {
        &self.ops
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ops.iter().map(|op| op.m()).collect()
    }

    pub fn max_size(&self) -> usize {
        self.ops.last().map_or(0, |op| op.m())
    }

    pub fn index_of(&self, op: OperatorId) -> Option<usize> {
        self.ops.binary_search(&op).ok()
    }

    /// Fails when some operator flips more bits than the string has.
    pub fn check_fits(&self, n: usize) -> Result<()> {
        match self.max_size() {
            m if m > n => Err(Error::OperatorTooLarge { m, n }),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Portfolio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sizes: Vec<String> = self.ops.iter().map(|op| op.m().to_string()).collect();
        write!(f, "{}", sizes.join(","))
    }
}

/// Draws uniformly random `m`-subsets of `0..n` by a partial Fisher-Yates
/// shuffle over a persistent index table. No allocation after construction.
#[derive(Clone, Debug)]
pub struct FlipSampler {
    index: Vec<u32>,
    picked: Vec<usize>,
}

impl FlipSampler {
    pub fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize, "problem size exceeds index width");
        FlipSampler {
            index: (0..n as u32).collect(),
            picked: Vec::with_capacity(8),
        }
    }

    pub fn n(&self) -> usize {
        self.index.len()
    }

    /// Samples `m` distinct positions. The index table is left permuted,
    /// which keeps later draws uniform.
    pub fn sample<R: Rng + ?Sized>(&mut self, m: usize, rng: &mut R) -> &[usize] {
        let n = self.index.len();
        debug_assert!(m <= n);
        self.picked.clear();
        for j in 0..m {
            let r = rng.random_range(j..n);
            self.index.swap(j, r);
            self.picked.push(self.index[j] as usize);
        }
        &self.picked
    }
}

/// Applies RLS_m to `x` and returns the offspring; `x` is left unchanged.
///
/// The offspring is at Hamming distance exactly `m`, with the flipped
/// positions uniform over all `C(n, m)` subsets.
pub fn mutate<R: Rng + ?Sized>(x: &BitString, op: OperatorId, rng: &mut R) -> Result<BitString> {
    let n = x.len();
    if op.m() > n {
        return Err(Error::OperatorTooLarge { m: op.m(), n });
    }
    let mut sampler = FlipSampler::new(n);
    let flips = sampler.sample(op.m(), rng);
    let mut y = x.clone();
    y.apply_flips(flips)?;
    Ok(y)
}

/// Samples a flip set for RLS_m conditioned on the offspring improving on
/// `fitness`: the first zero is flipped, no prefix bit is, and the remaining
/// `m - 1` positions are uniform among the bits after the first zero.
///
/// Uses Floyd's subset sampling; `out` is cleared and refilled.
pub fn sample_improving_flips<R: Rng + ?Sized>(fitness: usize, n: usize, m: usize, rng: &mut R, out: &mut Vec<usize>) {
    debug_assert!(fitness < n && m >= 1 && m - 1 < n - fitness);
    out.clear();
    out.push(fitness);
    let base = fitness + 1;
    let range = n - base;
    let amount = m - 1;
    for j in range - amount..range {
        let t = rng.random_range(0..=j);
        let candidate = if out[1..].contains(&(base + t)) {
            base + j
        } else {
            base + t
        };
        out.push(candidate);
    }
}

fn check_domain(m: usize, i: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidOperator(m));
    }
    if m > n {
        return Err(Error::OperatorTooLarge { m, n });
    }
    if i >= n {
        return Err(Error::FitnessOutOfDomain { i, n });
    }
    Ok(())
}

/// Probability that RLS_m improves a string with LeadingOnes value `i`.
///
/// `m/n * prod_{j=1}^{m-1} (n-i-j)/(n-j)`, evaluated as a running product;
/// zero once a factor is non-positive (`i > n - m`).
pub fn improvement_probability(m: usize, i: usize, n: usize) -> Result<f64> {
    check_domain(m, i, n)?;
    Ok(improvement_probability_unchecked(m, i, n))
}

#[inline]
pub(crate) fn improvement_probability_unchecked(m: usize, i: usize, n: usize) -> f64 {
    if i + m > n {
        return 0.0;
    }
    let nf = n as f64;
    let mut p = m as f64 / nf;
    for j in 1..m {
        p *= (n - i - j) as f64 / (n - j) as f64;
    }
    p
}

/// The same product as [`improvement_probability`], kept as an exact
/// rational. Returns `None` when intermediate values overflow `u128`.
pub fn improvement_probability_ratio(m: usize, i: usize, n: usize) -> Result<Option<Ratio<u128>>> {
    check_domain(m, i, n)?;
    if i + m > n {
        return Ok(Some(Ratio::from_integer(0)));
    }
    let mut acc = Ratio::new(m as u128, n as u128);
    for j in 1..m {
        let factor = Ratio::new((n - i - j) as u128, (n - j) as u128);
        let num = acc.numer().checked_mul(*factor.numer());
        let den = acc.denom().checked_mul(*factor.denom());
        match (num, den) {
            (Some(num), Some(den)) => acc = Ratio::new(num, den),
            _ => return Ok(None),
        }
    }
    Ok(Some(acc))
}

/// Portfolio operator with the highest improvement probability at fitness
/// `i`; ties go to the smaller neighbourhood size.
pub fn optimal_operator(i: usize, n: usize, portfolio: &Portfolio) -> Result<OperatorId> {
    if i >= n {
        return Err(Error::FitnessOutOfDomain { i, n });
    }
    portfolio.check_fits(n)?;
    Ok(portfolio.get(optimal_index_unchecked(i, n, portfolio)))
}

pub(crate) fn optimal_index_unchecked(i: usize, n: usize, portfolio: &Portfolio) -> usize {
    let mut best = 0;
    let mut best_p = improvement_probability_unchecked(portfolio.get(0).m(), i, n);
    for (idx, op) in portfolio.operators().iter().enumerate().skip(1) {
        let p = improvement_probability_unchecked(op.m(), i, n);
        if p > best_p {
            best = idx;
            best_p = p;
        }
    }
    best
}
