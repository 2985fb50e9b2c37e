//! Distributed products and the three contraction rules:
//! `dt*dt = 0`, `dt*dW = 0`, and `a*dW*b * c*dW*d = phi(b*c)*a*d*dt`.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::One;

use crate::algebra::{Algebra, Letter, Mode};
use crate::form::{merge_commuting, Commuting, DifferentialForm, Grade, Monomial};

/// Letter of an unreduced product; `dt` is central but kept in place so
/// every rule application is visible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawLetter {
    Letter(Letter),
    Dt,
}

/// A product of graded words before any rule is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTerm {
    pub coeff: BigRational,
    pub commuting: BTreeMap<Commuting, BigRational>,
    pub letters: Vec<RawLetter>,
}

/// A place where one rule applies; positions index `RawTerm::letters`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Redex {
    DtDt(usize, usize),
    DtDw(usize, usize),
    Contract(usize, usize),
}

impl RawTerm {
    pub fn new(coeff: BigRational, letters: Vec<RawLetter>) -> Self {
        Self {
            coeff,
            commuting: BTreeMap::new(),
            letters,
        }
    }

    fn from_monomial(grade: Grade, mono: &Monomial, coeff: &BigRational) -> Self {
        let mut letters: Vec<RawLetter> =
            mono.word.iter().cloned().map(RawLetter::Letter).collect();
        if grade == Grade::Dt {
            letters.push(RawLetter::Dt);
        }
        Self {
            coeff: coeff.clone(),
            commuting: mono.commuting.clone(),
            letters,
        }
    }

    fn concat(mut self, other: RawTerm) -> Self {
        self.coeff *= other.coeff;
        merge_commuting(&mut self.commuting, &other.commuting);
        self.letters.extend(other.letters);
        self
    }

    /// Every applicable rule instance.
    pub fn redexes(&self) -> Vec<Redex> {
        let dts: Vec<usize> = positions(&self.letters, |l| *l == RawLetter::Dt);
        let dws: Vec<usize> = positions(&self.letters, |l| *l == RawLetter::Letter(Letter::Dw));
        let mut out = Vec::new();
        for (k, &i) in dts.iter().enumerate() {
            out.extend(dts[k + 1..].iter().map(|&j| Redex::DtDt(i, j)));
        }
        for &i in &dts {
            out.extend(dws.iter().map(|&j| Redex::DtDw(i, j)));
        }
        out.extend(dws.windows(2).map(|w| Redex::Contract(w[0], w[1])));
        out
    }

    /// Applies one rule; `None` when the term vanishes.
    pub fn apply(mut self, alg: &Algebra, redex: Redex) -> Option<Self> {
        let Redex::Contract(i, j) = redex else {
            return None;
        };
        let tail = self.letters.split_off(j + 1);
        let middle: Vec<RawLetter> = self.letters.drain(i + 1..j).collect();
        self.letters.truncate(i);
        let (dts, ops): (Vec<RawLetter>, Vec<RawLetter>) =
            middle.into_iter().partition(|l| *l == RawLetter::Dt);
        match alg.mode() {
            Mode::Free => {
                let word: Vec<Letter> = ops.into_iter().filter_map(letter).collect();
                let key = alg.moment_key(&word);
                if !key.is_empty() {
                    let one = BTreeMap::from([(Commuting::Moment(key), BigRational::one())]);
                    merge_commuting(&mut self.commuting, &one);
                }
            }
            Mode::Commutative => self.letters.extend(ops),
        }
        self.letters.extend(dts);
        self.letters.push(RawLetter::Dt);
        self.letters.extend(tail);
        Some(self)
    }

    /// Applies rules until none is left, letting `choose` pick among the
    /// available instances, and returns the normal form.
    pub fn reduce(
        self,
        alg: &Algebra,
        choose: &mut dyn FnMut(&[Redex]) -> usize,
    ) -> DifferentialForm {
        let mut term = self;
        loop {
            let redexes = term.redexes();
            if redexes.is_empty() {
                break;
            }
            let pick = choose(&redexes).min(redexes.len() - 1);
            match term.apply(alg, redexes[pick]) {
                Some(t) => term = t,
                None => return DifferentialForm::zero(),
            }
        }
        let dt = term.letters.contains(&RawLetter::Dt);
        let word = alg.normalize_word(term.letters.into_iter().filter_map(letter).collect());
        let mono = Monomial {
            word,
            commuting: term.commuting,
        };
        DifferentialForm::monomial(mono, term.coeff, dt)
    }
}

fn letter(l: RawLetter) -> Option<Letter> {
    match l {
        RawLetter::Letter(x) => Some(x),
        RawLetter::Dt => None,
    }
}

fn positions(letters: &[RawLetter], pred: impl Fn(&RawLetter) -> bool) -> Vec<usize> {
    letters
        .iter()
        .enumerate()
        .filter(|(_, l)| pred(l))
        .map(|(i, _)| i)
        .collect()
}

/// Leftmost-first rule order.
pub fn first_redex(_: &[Redex]) -> usize {
    0
}

impl Algebra {
    /// Noncommutative product of two forms, reduced to normal form.
    pub fn multiply(&self, lhs: &DifferentialForm, rhs: &DifferentialForm) -> DifferentialForm {
        self.multiply_with(lhs, rhs, &mut first_redex)
    }

    /// As [`Algebra::multiply`], with a caller-chosen rule order.
    pub fn multiply_with(
        &self,
        lhs: &DifferentialForm,
        rhs: &DifferentialForm,
        choose: &mut dyn FnMut(&[Redex]) -> usize,
    ) -> DifferentialForm {
        let mut out = DifferentialForm::zero();
        for (g1, m1, c1) in lhs.terms() {
            for (g2, m2, c2) in rhs.terms() {
                let raw =
                    RawTerm::from_monomial(g1, m1, c1).concat(RawTerm::from_monomial(g2, m2, c2));
                out = out.add(&raw.reduce(self, choose));
            }
        }
        out
    }

    /// Reduces a sum of raw products.
    pub fn reduce_all(
        &self,
        raws: Vec<RawTerm>,
        choose: &mut dyn FnMut(&[Redex]) -> usize,
    ) -> DifferentialForm {
        raws.into_iter().fold(DifferentialForm::zero(), |acc, t| {
            acc.add(&t.reduce(self, choose))
        })
    }
}

/// Product in the default algebra.
pub fn multiply_forms(lhs: &DifferentialForm, rhs: &DifferentialForm) -> DifferentialForm {
    Algebra::default().multiply(lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn op(n: &str) -> RawLetter {
        RawLetter::Letter(Letter::op(n))
    }

    #[test]
    fn contraction_takes_the_moment_of_the_middle() {
        let alg = Algebra::free();
        let raw = RawTerm::new(
            r(1, 1),
            vec![
                op("a"),
                RawLetter::Letter(Letter::Dw),
                op("b"),
                op("c"),
                RawLetter::Letter(Letter::Dw),
                op("d"),
            ],
        );
        let f = raw.reduce(&alg, &mut first_redex);
        let (g, m, c) = f.as_monomial().unwrap();
        assert_eq!(g, Grade::Dt);
        assert_eq!(c, &r(1, 1));
        assert_eq!(m.word, vec![Letter::op("a"), Letter::op("d")]);
        let key = Commuting::Moment(vec![Letter::op("b"), Letter::op("c")]);
        assert_eq!(m.commuting.get(&key), Some(&r(1, 1)));
    }

    #[test]
    fn adjacent_increments_give_plain_dt() {
        let alg = Algebra::free();
        let dw = RawLetter::Letter(Letter::Dw);
        let f = RawTerm::new(r(1, 1), vec![dw.clone(), dw]).reduce(&alg, &mut first_redex);
        assert_eq!(f.to_string(), "dt");
    }

    #[test]
    fn higher_order_products_vanish() {
        let alg = Algebra::free();
        let dw = || RawLetter::Letter(Letter::Dw);
        for letters in [
            vec![RawLetter::Dt, RawLetter::Dt],
            vec![RawLetter::Dt, op("x"), dw()],
            vec![dw(), op("x"), dw(), dw()],
            vec![dw(), dw(), dw(), dw()],
        ] {
            assert!(RawTerm::new(r(1, 1), letters)
                .reduce(&alg, &mut first_redex)
                .is_zero());
        }
    }

    #[test]
    fn commutative_mode_keeps_the_middle_inline() {
        let alg = Algebra::commutative();
        let dw = || RawLetter::Letter(Letter::Dw);
        let f = RawTerm::new(r(1, 4), vec![op("s"), dw(), op("s"), dw()])
            .reduce(&alg, &mut first_redex);
        assert_eq!(f.to_string(), "1/4*s^2*dt");
    }
}
