//! Bit-word encodings of integers and the position relations derived from them.
//!
//! `beta` maps an integer to the binary digits that follow the leftmost zero of
//! its MSB-first representation. `mu` and `sigma` decode tuples of such words
//! into words over an ordered alphabet. The two relation kinds answer
//! membership queries `(i, j)` on demand; they are never materialized.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A word over the two letters 0̄ and 1̄. `true` is 1̄.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct BitWord(Vec<bool>);

impl BitWord {
    pub fn new(bits: Vec<bool>) -> Self {
        BitWord(bits)
    }

    pub fn empty() -> Self {
        BitWord(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Letter at 1-based position `pos`.
    pub fn get(&self, pos: usize) -> Option<bool> {
        pos.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    /// The word read as a binary numeral, MSB first. Saturates at `u64::MAX`.
    pub fn value(&self) -> u64 {
        self.0
            .iter()
            .fold(0u64, |acc, &b| acc.saturating_mul(2).saturating_add(b as u64))
    }

    /// Parses a string of `0`/`1` digits.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(BitWord)
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromIterator<bool> for BitWord {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitWord(iter.into_iter().collect())
    }
}

/// Index of the leftmost zero bit of `x` (below its most significant one).
/// `None` for zero and for all-ones integers.
fn leftmost_zero(x: u64) -> Option<u32> {
    if x == 0 {
        return None;
    }
    let width = 64 - x.leading_zeros();
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let zeros = !x & mask;
    if zeros == 0 {
        None
    } else {
        Some(63 - zeros.leading_zeros())
    }
}

/// Length of `beta(x)` without building the word.
pub fn beta_len(x: u64) -> Option<usize> {
    leftmost_zero(x).map(|j| j as usize)
}

/// Digits following the leftmost zero of `x`, MSB first.
///
/// Undefined for `0` and for integers with no zero digit (`2^m - 1`).
pub fn beta(x: u64) -> Option<BitWord> {
    let j = leftmost_zero(x)?;
    Some((0..j).rev().map(|i| (x >> i) & 1 == 1).collect())
}

/// Positions (1-based, ascending) at which `beta(j)` carries 1̄.
pub fn one_positions(j: u64) -> Vec<usize> {
    let Some(len) = leftmost_zero(j) else {
        return Vec::new();
    };
    (1..=len as usize)
        .filter(|&p| (j >> (len as usize - p)) & 1 == 1)
        .collect()
}

/// Consistent-tuple decoding: all words share one length and every position
/// carries exactly one 1̄ across the tuple. Word `i` maps to `alphabet[i]`.
pub fn mu<T: Clone>(words: &[BitWord], alphabet: &[T]) -> Option<Vec<T>> {
    if words.is_empty() || words.len() != alphabet.len() {
        return None;
    }
    let m = words[0].len();
    if words.iter().any(|w| w.len() != m) {
        return None;
    }
    let mut out = Vec::with_capacity(m);
    for p in 0..m {
        let mut hit = None;
        for (i, w) in words.iter().enumerate() {
            if w.0[p] {
                if hit.is_some() {
                    return None;
                }
                hit = Some(i);
            }
        }
        out.push(alphabet[hit?].clone());
    }
    Some(out)
}

/// `mu` applied to the `beta` images of `xs`.
pub fn sigma<T: Clone>(xs: &[u64], alphabet: &[T]) -> Option<Vec<T>> {
    let words = xs.iter().map(|&x| beta(x)).collect::<Option<Vec<_>>>()?;
    mu(&words, alphabet)
}

/// Ascending stream of every `l` with `beta(l) == w`. Ends when the next
/// element would not fit in a `u64`.
pub fn preimages(w: &BitWord) -> Preimages {
    Preimages {
        shift: w.len() as u32 + 1,
        base: if w.len() >= 64 { None } else { Some(w.value()) },
        k: 1,
    }
}

#[derive(Debug, Clone)]
pub struct Preimages {
    shift: u32,
    base: Option<u64>,
    k: u32,
}

impl Iterator for Preimages {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let base = self.base?;
        // (2^k - 1) * 2^(|w|+1) + val(w) fits while k + |w| + 1 <= 64
        if self.k + self.shift > 64 {
            self.base = None;
            return None;
        }
        let ones = (1u64 << self.k) - 1;
        self.k += 1;
        Some((ones << self.shift) | base)
    }
}

/// The two position relations over `(i, j)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RpeKind {
    /// `beta(j)` has 1̄ at position `i`.
    One,
    /// `i` lies within `[1, |beta(j)|]`.
    Len,
}

impl RpeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            RpeKind::One => "one",
            RpeKind::Len => "len",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "one" => Some(RpeKind::One),
            "len" => Some(RpeKind::Len),
            _ => None,
        }
    }

    /// Positions `i` with `(i, j)` in the relation, ascending.
    pub fn positions(self, j: u64) -> Vec<usize> {
        match self {
            RpeKind::One => one_positions(j),
            RpeKind::Len => (1..=beta_len(j).unwrap_or(0)).collect(),
        }
    }
}

impl fmt::Display for RpeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Membership query for `(i, j)`; positions are 1-based.
pub fn rel_contains(kind: RpeKind, i: u64, j: u64) -> bool {
    if i == 0 || i > j {
        return false;
    }
    let Some(len) = beta_len(j) else {
        return false;
    };
    let i = i as usize;
    if i > len {
        return false;
    }
    match kind {
        RpeKind::Len => true,
        RpeKind::One => (j >> (len - i)) & 1 == 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bw(s: &str) -> BitWord {
        BitWord::parse(s).unwrap()
    }

    #[test]
    fn beta_worked_values() {
        assert_eq!(beta(42), Some(bw("1010")));
        assert_eq!(beta(64), Some(bw("00000")));
        assert_eq!(beta(26), Some(bw("10")));
        assert_eq!(beta(0), None);
        assert_eq!(beta(2), Some(BitWord::empty()));
        assert_eq!(beta(7), None);
        assert_eq!(beta(1), None);
        assert_eq!(beta(u64::MAX), None);
        assert_eq!(beta(u64::MAX - 1).map(|w| w.len()), Some(0));
    }

    #[test]
    fn one_positions_examples() {
        assert_eq!(one_positions(107), vec![1, 3, 4]);
        assert!(one_positions(64).is_empty());
        assert_eq!(one_positions(26), vec![1]);
        assert!(one_positions(0).is_empty());
        assert!(one_positions(15).is_empty());
    }

    #[test]
    fn mu_and_sigma() {
        let alpha = ["a1", "a2"];
        assert_eq!(
            mu(&[bw("001"), bw("110")], &alpha),
            Some(vec!["a2", "a2", "a1"])
        );
        assert_eq!(mu(&[bw("1"), bw("01")], &alpha), None);
        assert_eq!(mu(&[bw("0"), bw("0")], &alpha), None);
        assert_eq!(mu(&[bw("1"), bw("1")], &alpha), None);
        assert_eq!(sigma(&[17, 22], &alpha), Some(vec!["a2", "a2", "a1"]));
        assert_eq!(sigma(&[49, 22], &alpha), Some(vec!["a2", "a2", "a1"]));
        assert_eq!(sigma(&[0, 22], &alpha), None);
    }

    #[test]
    fn relation_membership() {
        assert!(!rel_contains(RpeKind::One, 2, 107));
        assert!(rel_contains(RpeKind::One, 3, 107));
        assert!(rel_contains(RpeKind::Len, 4, 107));
        assert!(!rel_contains(RpeKind::Len, 5, 107));
        assert!(!rel_contains(RpeKind::Len, 0, 107));
        assert_eq!(RpeKind::Len.positions(107), vec![1, 2, 3, 4]);
    }

    fn brute_preimages(w: &BitWord, limit: u64) -> Vec<u64> {
        (1..=limit).filter(|&l| beta(l).as_ref() == Some(w)).collect()
    }

    #[test]
    fn preimages_match_brute_force() {
        for (w, first) in [("10", vec![10, 26, 58]), ("", vec![2, 6, 14]), ("01", vec![9, 25, 57])] {
            let w = bw(w);
            let stream: Vec<u64> = preimages(&w).take(3).collect();
            assert_eq!(stream, first);
            let brute = brute_preimages(&w, 1000);
            let closed: Vec<u64> = preimages(&w).take_while(|&l| l <= 1000).collect();
            assert_eq!(brute, closed);
        }
    }

    #[test]
    fn preimages_terminate_without_overflow() {
        let w = bw(&"1".repeat(40));
        let all: Vec<u64> = preimages(&w).collect();
        assert!(!all.is_empty());
        assert!(all.iter().all(|&l| beta(l).as_ref() == Some(&w)));
        assert!(all.windows(2).all(|p| p[0] < p[1]));
        let long = BitWord::new(vec![false; 70]);
        assert_eq!(preimages(&long).next(), None);
    }
}
