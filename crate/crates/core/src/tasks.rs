//! The benchmark languages, their alphabets and direct membership oracles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crasp::{tok, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Parity,
    Prime,
    Exponential,
    Division,
    Gcd,
    Multiplication,
    EndsInB,
    BinaryEven,
}

/// How inputs are written. `Binary` inputs are consumed through the
/// positional decoding of the general construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Unary,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown task `{0}`")]
pub struct UnknownTask(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown encoding `{0}` (expected unary or binary)")]
pub struct UnknownEncoding(pub String);

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Parity,
        Task::Prime,
        Task::Exponential,
        Task::Division,
        Task::Gcd,
        Task::Multiplication,
        Task::EndsInB,
        Task::BinaryEven,
    ];

    /// The five arithmetic languages.
    pub const ARITHMETIC: [Task; 5] = [Task::Prime, Task::Exponential, Task::Division, Task::Gcd, Task::Multiplication];

    pub fn name(self) -> &'static str {
        match self {
            Task::Parity => "parity",
            Task::Prime => "prime",
            Task::Exponential => "exponential",
            Task::Division => "division",
            Task::Gcd => "gcd",
            Task::Multiplication => "multiplication",
            Task::EndsInB => "ends_in_b",
            Task::BinaryEven => "binary_even",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        Task::ARITHMETIC.contains(&self)
    }

    /// Number of integers in one instance of the arithmetic relation.
    pub fn arity(self) -> usize {
        match self {
            Task::Prime => 1,
            Task::Exponential | Task::Division => 2,
            Task::Gcd | Task::Multiplication => 3,
            Task::Parity | Task::EndsInB | Task::BinaryEven => 0,
        }
    }

    pub fn supports(self, enc: Encoding) -> bool {
        match enc {
            Encoding::Unary => !matches!(self, Task::EndsInB | Task::BinaryEven),
            Encoding::Binary => self != Task::Parity,
        }
    }

    /// Input alphabet in counter order.
    pub fn alphabet(self, enc: Encoding) -> Vec<Token> {
        let names: &[&str] = match (self, enc) {
            (Task::Prime, Encoding::Unary) => &["a"],
            (Task::Gcd | Task::Multiplication, Encoding::Unary) => &["a", "b", "c"],
            (_, Encoding::Unary) | (Task::EndsInB, _) => &["a", "b"],
            (Task::BinaryEven, _) => &["b0", "b1"],
            (_, Encoding::Binary) => &["b0", "b1", "sl"],
        };
        names.iter().map(|n| tok(n)).collect()
    }

    /// The arithmetic relation on an instance.
    pub fn relation(self, xs: &[u64]) -> bool {
        match (self, xs) {
            (Task::Prime, [n]) => is_prime(*n),
            (Task::Exponential, [n]) => n.is_power_of_two(),
            (Task::Exponential, [i, j]) => *i < 64 && *j == 1u64 << i,
            (Task::Division, [i, j]) => divides(*j, *i),
            (Task::Gcd, [i, j, k]) => gcd(*i, *j) == *k,
            (Task::Multiplication, [i, j, k]) => i.checked_mul(*j) == Some(*k),
            _ => false,
        }
    }

    /// Direct membership test for a word over this task's alphabet.
    pub fn accepts_word(self, enc: Encoding, w: &[Token]) -> bool {
        if w.is_empty() {
            return false;
        }
        match (self, enc) {
            (Task::Parity, Encoding::Unary) => w.iter().filter(|t| t.as_str() == "a").count() % 2 == 0,
            (Task::EndsInB, _) => w.last().map(Token::as_str) == Some("b"),
            (Task::BinaryEven, _) => w.last().map(Token::as_str) == Some("b0"),
            (Task::Exponential, Encoding::Unary) => {
                unary_blocks(w, &self.alphabet(enc)).is_some_and(|c| c[1] == 0 && self.relation(&c[..1]))
            }
            (_, Encoding::Unary) => unary_blocks(w, &self.alphabet(enc)).is_some_and(|c| self.relation(&c)),
            (_, Encoding::Binary) => {
                decode_numerals(w).is_some_and(|xs| xs.len() == self.arity() && self.relation(&xs))
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Unary => "unary",
            Encoding::Binary => "binary",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Encoding {
    type Err = UnknownEncoding;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unary" => Ok(Encoding::Unary),
            "binary" | "general" => Ok(Encoding::Binary),
            _ => Err(UnknownEncoding(s.to_string())),
        }
    }
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// `d | n`, where 0 divides only 0.
pub fn divides(d: u64, n: u64) -> bool {
    n.is_multiple_of(d)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Block lengths when `w` is `a_1^x_1 ... a_n^x_n`, `None` otherwise.
pub fn unary_blocks(w: &[Token], alphabet: &[Token]) -> Option<Vec<u64>> {
    let mut counts = vec![0u64; alphabet.len()];
    let mut at = 0;
    for t in w {
        let i = alphabet.iter().position(|a| a == t)?;
        if i < at {
            return None;
        }
        at = i;
        counts[i] += 1;
    }
    Some(counts)
}

/// Tokens for `bin(x_1) sl bin(x_2) ...`, most significant digit first.
pub fn encode_numerals(xs: &[u64]) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(tok("sl"));
        }
        let s = format!("{x:b}");
        out.extend(s.chars().map(|c| tok(if c == '1' { "b1" } else { "b0" })));
    }
    out
}

/// Inverse of `encode_numerals`; rejects leading zeros and empty numerals.
pub fn decode_numerals(w: &[Token]) -> Option<Vec<u64>> {
    let mut out = Vec::new();
    for part in w.split(|t| t.as_str() == "sl") {
        if part.is_empty() || part.len() > 63 || (part.len() > 1 && part[0].as_str() == "b0") {
            return None;
        }
        let mut x = 0u64;
        for t in part {
            x = (x << 1)
                | match t.as_str() {
                    "b0" => 0,
                    "b1" => 1,
                    _ => return None,
                };
        }
        out.push(x);
    }
    Some(out)
}

/// Human-readable rendering: `101/11` for binary tokens, letters otherwise.
pub fn display_word(w: &[Token]) -> String {
    let binary = w.iter().all(|t| matches!(t.as_str(), "b0" | "b1" | "sl"));
    if binary && !w.is_empty() {
        w.iter()
            .map(|t| match t.as_str() {
                "b0" => '0',
                "b1" => '1',
                _ => '/',
            })
            .collect()
    } else if w.iter().all(|t| t.as_str().len() == 1) {
        w.iter().map(|t| t.as_str()).collect()
    } else {
        w.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
    }
}
