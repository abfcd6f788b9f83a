//! Packed bit strings and the LeadingOnes objective.
//!
//! Positions are 0-based in code; position `p` here is bit `p + 1` in the
//! usual 1-based notation. The cached fitness is always the length of the
//! all-ones prefix.

use rand::Rng;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// Length of the all-ones prefix of `bits`.
pub fn evaluate_full(bits: &[bool]) -> usize {
    bits.iter().take_while(|&&b| b).count()
}

/// A fixed-length bit string with its LeadingOnes value cached.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
    fitness: usize,
}

impl BitString {
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyBitString);
        }
        let mut words = vec![0u64; bits.len().div_ceil(WORD_BITS)];
        for (p, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[p / WORD_BITS] |= 1 << (p % WORD_BITS);
        }
        let mut x = BitString {
            words,
            len: bits.len(),
            fitness: 0,
        };
        x.fitness = x.scan_from(0);
        Ok(x)
    }

    /// Parses a string of `0`/`1` characters, first character is position 0.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidBitChar(other)),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }

    /// Uniformly random string of length `n`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyBitString);
        }
        let mut words: Vec<u64> = (0..n.div_ceil(WORD_BITS)).map(|_| rng.random()).collect();
        let tail = n % WORD_BITS;
        if tail != 0 {
            *words.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        let mut x = BitString {
            words,
            len: n,
            fitness: 0,
        };
        x.fitness = x.scan_from(0);
        Ok(x)
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::from_bits(&vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Cached LeadingOnes value.
    pub fn fitness(&self) -> usize {
        self.fitness
    }

    pub fn is_optimal(&self) -> bool {
        self.fitness == self.len
    }

    pub fn get(&self, pos: usize) -> bool {
        debug_assert!(pos < self.len);
        self.words[pos / WORD_BITS] >> (pos % WORD_BITS) & 1 == 1
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.len).map(|p| self.get(p)).collect()
    }

    pub fn hamming_distance(&self, other: &BitString) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Recomputes the fitness with a full scan, ignoring the cache.
    pub fn evaluate_full(&self) -> usize {
        self.scan_from(0)
    }

    /// Fitness of the string obtained by flipping `flipped`, without
    /// modifying `self`.
    ///
    /// Runs in O(|flipped|) when the flip set touches the prefix or misses
    /// the first zero, and in O(|flipped| + gain) otherwise. Positions must
    /// be distinct.
    pub fn evaluate_incremental(&self, flipped: &[usize]) -> Result<usize> {
        self.check_positions(flipped)?;
        Ok(self.incremental_unchecked(flipped))
    }

    /// Flips `flipped` in place and updates the cached fitness incrementally.
    pub fn apply_flips(&mut self, flipped: &[usize]) -> Result<usize> {
        self.check_positions(flipped)?;
        let fitness = self.incremental_unchecked(flipped);
        self.flip_unchecked(flipped);
        self.fitness = fitness;
        Ok(fitness)
    }

    /// Hot-loop variant of [`BitString::evaluate_incremental`]; positions
    /// are only checked in debug builds.
    pub(crate) fn incremental_unchecked(&self, flipped: &[usize]) -> usize {
        debug_assert!(self.check_positions(flipped).is_ok());
        let f = self.fitness;
        // A flipped prefix bit truncates the prefix at the earliest such bit.
        let earliest_prefix = flipped.iter().copied().filter(|&p| p < f).min();
        if let Some(p) = earliest_prefix {
            return p;
        }
        if f == self.len || !flipped.contains(&f) {
            return f;
        }
        // The first zero became a one; extend through the overlay.
        let mut pos = f + 1;
        while pos < self.len {
            let w = pos / WORD_BITS;
            let mut word = self.words[w];
            for &q in flipped {
                if q / WORD_BITS == w {
                    word ^= 1 << (q % WORD_BITS);
                }
            }
            let shift = pos % WORD_BITS;
            let run = (word >> shift).trailing_ones() as usize;
            let run = run.min(WORD_BITS - shift);
            pos += run;
            if shift + run < WORD_BITS {
                break;
            }
        }
        pos.min(self.len)
    }

    pub(crate) fn apply_flips_unchecked(&mut self, flipped: &[usize], fitness: usize) {
        self.flip_unchecked(flipped);
        self.fitness = fitness;
    }

    fn flip_unchecked(&mut self, flipped: &[usize]) {
        for &p in flipped {
            self.words[p / WORD_BITS] ^= 1 << (p % WORD_BITS);
        }
    }

    fn check_positions(&self, flipped: &[usize]) -> Result<()> {
        for (k, &p) in flipped.iter().enumerate() {
            if p >= self.len {
                return Err(Error::PositionOutOfRange { pos: p, len: self.len });
            }
            if flipped[..k].contains(&p) {
                return Err(Error::DuplicatePosition(p));
            }
        }
        Ok(())
    }

    fn scan_from(&self, start: usize) -> usize {
        let mut pos = start;
        while pos < self.len {
            let shift = pos % WORD_BITS;
            let run = (self.words[pos / WORD_BITS] >> shift).trailing_ones() as usize;
            let run = run.min(WORD_BITS - shift);
            pos += run;
            if shift + run < WORD_BITS {
                break;
            }
        }
        pos.min(self.len)
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in 0..self.len {
            f.write_str(if self.get(p) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flipped_bits(x: &BitString, flips: &[usize]) -> Vec<bool> {
        let mut bits = x.to_bits();
        for &p in flips {
            bits[p] = !bits[p];
        }
        bits
    }

    #[test]
    fn full_evaluation_examples() {
        assert_eq!(evaluate_full(&[true; 8]), 8);
        assert_eq!(evaluate_full(&[false, true, true]), 0);
        assert_eq!(BitString::parse("1101111").unwrap().fitness(), 2);
    }

    #[test]
    fn incremental_examples() {
        let x = BitString::parse("1101").unwrap();
        assert_eq!(x.fitness(), 2);
        assert_eq!(x.evaluate_incremental(&[2]).unwrap(), 4);
        assert_eq!(x.evaluate_incremental(&[0]).unwrap(), 0);
        // untouched
        assert_eq!(x.to_string(), "1101");
    }

    #[test]
    fn incremental_rejects_bad_positions() {
        let x = BitString::parse("1101").unwrap();
        assert!(matches!(
            x.evaluate_incremental(&[4]),
            Err(Error::PositionOutOfRange { pos: 4, len: 4 })
        ));
        assert!(matches!(
            x.evaluate_incremental(&[1, 1]),
            Err(Error::DuplicatePosition(1))
        ));
    }

    #[test]
    fn empty_string_rejected() {
        assert!(BitString::from_bits(&[]).is_err());
        assert!(BitString::parse("10x").is_err());
    }

    #[test]
    fn runs_across_word_boundaries() {
        let mut bits = vec![true; 200];
        bits[130] = false;
        bits[64] = false;
        let mut x = BitString::from_bits(&bits).unwrap();
        assert_eq!(x.fitness(), 64);
        assert_eq!(x.apply_flips(&[64]).unwrap(), 130);
        assert_eq!(x.apply_flips(&[130, 3]).unwrap(), 3);
        assert_eq!(x.apply_flips(&[3]).unwrap(), 200);
        assert!(x.is_optimal());
    }

    #[test]
    fn exhaustive_small_strings() {
        // every string of length <= 12, every flip set of size <= 3
        for n in 1..=12usize {
            let positions: Vec<usize> = (0..n).collect();
            let mut flip_sets: Vec<Vec<usize>> = vec![vec![]];
            for a in 0..n {
                flip_sets.push(vec![a]);
                for b in a + 1..n {
                    flip_sets.push(vec![a, b]);
                    for c in b + 1..n {
                        flip_sets.push(vec![a, b, c]);
                    }
                }
            }
            for mask in 0u32..(1 << n) {
                let bits: Vec<bool> = positions.iter().map(|&p| mask >> p & 1 == 1).collect();
                let x = BitString::from_bits(&bits).unwrap();
                assert_eq!(x.fitness(), evaluate_full(&bits));
                for flips in &flip_sets {
                    let expected = evaluate_full(&flipped_bits(&x, flips));
                    assert_eq!(x.evaluate_incremental(flips).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn random_string_has_consistent_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 63, 64, 65, 1000] {
            let x = BitString::random(n, &mut rng).unwrap();
            assert_eq!(x.len(), n);
            assert_eq!(x.fitness(), x.evaluate_full());
            assert_eq!(x.fitness(), evaluate_full(&x.to_bits()));
        }
    }

    proptest! {
        #[test]
        fn incremental_matches_full_scan(
            bits in proptest::collection::vec(any::<bool>(), 20),
            flips in proptest::sample::subsequence((0..20usize).collect::<Vec<_>>(), 3),
        ) {
            let mut x = BitString::from_bits(&bits).unwrap();
            let expected = evaluate_full(&flipped_bits(&x, &flips));
            prop_assert_eq!(x.evaluate_incremental(&flips).unwrap(), expected);
            x.apply_flips(&flips).unwrap();
            prop_assert_eq!(x.fitness(), expected);
            prop_assert_eq!(x.evaluate_full(), expected);
        }

        #[test]
        fn long_strings_with_long_prefixes(prefix in 0usize..300, tail in proptest::collection::vec(any::<bool>(), 0..100)) {
            let mut bits = vec![true; prefix];
            bits.push(false);
            bits.extend(tail);
            let x = BitString::from_bits(&bits).unwrap();
            prop_assert_eq!(x.fitness(), prefix);
            let expected = evaluate_full(&flipped_bits(&x, &[prefix]));
            prop_assert_eq!(x.evaluate_incremental(&[prefix]).unwrap(), expected);
        }

        #[test]
        fn prefix_extension_keeps_value(
            bits in proptest::collection::vec(any::<bool>(), 1..50),
            extra in proptest::collection::vec(any::<bool>(), 0..50),
        ) {
            prop_assume!(bits.contains(&false));
            let mut longer = bits.clone();
            longer.extend(extra);
            prop_assert_eq!(evaluate_full(&bits), evaluate_full(&longer));
        }
    }
}
