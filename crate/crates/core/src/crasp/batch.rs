//! Whole-word reference semantics, computed by structural induction.

use super::{EvalError, Formula, Signature, Term, Token};
use crate::rpe::rel_contains;

fn check_word(word: &[Token], sig: &Signature) -> Result<(), EvalError> {
    if word.is_empty() {
        return Err(EvalError::EmptyWord);
    }
    for t in word {
        sig.id(t)?;
    }
    Ok(())
}

/// Truth value of `f` at every position of `word`.
pub fn eval_formula(word: &[Token], f: &Formula, sig: &Signature) -> Result<Vec<bool>, EvalError> {
    check_word(word, sig)?;
    sig.check_formula(f)?;
    formula(word, f, sig)
}

/// Value of `t` at every position of `word`.
pub fn eval_term(word: &[Token], t: &Term, sig: &Signature) -> Result<Vec<i64>, EvalError> {
    check_word(word, sig)?;
    sig.check_term(t)?;
    term(word, t, sig)
}

fn formula(word: &[Token], f: &Formula, sig: &Signature) -> Result<Vec<bool>, EvalError> {
    Ok(match f {
        Formula::True => vec![true; word.len()],
        Formula::Atom(a) => word.iter().map(|w| w == a).collect(),
        Formula::Not(g) => formula(word, g, sig)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => zip_with(formula(word, a, sig)?, formula(word, b, sig)?, |x, y| x.min(y)),
        Formula::Or(a, b) => zip_with(formula(word, a, sig)?, formula(word, b, sig)?, |x, y| x.max(y)),
        Formula::Compare(a, op, b) => {
            zip_with(term(word, a, sig)?, term(word, b, sig)?, |x, y| op.holds(x, y))
        }
    })
}

fn term(word: &[Token], t: &Term, sig: &Signature) -> Result<Vec<i64>, EvalError> {
    match t {
        Term::Const(c) => {
            let c = i64::try_from(*c).map_err(|_| EvalError::IntegerOverflow)?;
            Ok(vec![c; word.len()])
        }
        Term::Count(f) => {
            let bits = formula(word, f, sig)?;
            let mut acc = 0i64;
            Ok(bits
                .into_iter()
                .map(|b| {
                    acc += b as i64;
                    acc
                })
                .collect())
        }
        Term::CountRel(name, f) => {
            let kind = sig.relations().resolve(name)?;
            let bits = formula(word, f, sig)?;
            Ok((1..=word.len())
                .map(|j| {
                    (1..=j)
                        .filter(|&i| rel_contains(kind, i as u64, j as u64) && bits[i - 1])
                        .count() as i64
                })
                .collect())
        }
        Term::Add(a, b) => checked_zip(term(word, a, sig)?, term(word, b, sig)?, i64::checked_add),
        Term::Sub(a, b) => checked_zip(term(word, a, sig)?, term(word, b, sig)?, i64::checked_sub),
        Term::Scale(k, a) => {
            let k = i64::try_from(*k).map_err(|_| EvalError::IntegerOverflow)?;
            term(word, a, sig)?
                .into_iter()
                .map(|v| v.checked_mul(k).ok_or(EvalError::IntegerOverflow))
                .collect()
        }
    }
}

fn zip_with<A: Copy, B>(xs: Vec<A>, ys: Vec<A>, f: impl Fn(A, A) -> B) -> Vec<B> {
    xs.into_iter().zip(ys).map(|(x, y)| f(x, y)).collect()
}

fn checked_zip(
    xs: Vec<i64>,
    ys: Vec<i64>,
    f: impl Fn(i64, i64) -> Option<i64>,
) -> Result<Vec<i64>, EvalError> {
    xs.into_iter()
        .zip(ys)
        .map(|(x, y)| f(x, y).ok_or(EvalError::IntegerOverflow))
        .collect()
}
