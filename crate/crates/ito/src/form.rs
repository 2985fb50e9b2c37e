//! Graded sums of words with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::algebra::{fmt_power, Algebra, Letter, Mode};

/// Central factor pulled out of a word: a declared scalar, or a moment
/// `phi(word)` keyed by its canonical word.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Commuting {
    Scalar(String),
    Moment(Vec<Letter>),
}

impl Commuting {
    fn render(&self, exp: &BigRational) -> String {
        match self {
            Commuting::Scalar(name) => fmt_power(name, name, exp),
            Commuting::Moment(word) => {
                let m = format!("phi({})", join_word(word));
                fmt_power(&m, &m, exp)
            }
        }
    }
}

pub(crate) fn join_word(word: &[Letter]) -> String {
    word.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("*")
}

/// Product of central factors (with rational exponents) and an ordered word.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub word: Vec<Letter>,
    pub commuting: BTreeMap<Commuting, BigRational>,
}

impl Monomial {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn from_word(word: Vec<Letter>) -> Self {
        Self {
            word,
            commuting: BTreeMap::new(),
        }
    }

    pub fn contains_dw(&self) -> bool {
        self.word.iter().any(Letter::is_dw)
    }

    pub(crate) fn absorb(&mut self, factors: &BTreeMap<Commuting, BigRational>) {
        merge_commuting(&mut self.commuting, factors);
    }

    /// Factors and word joined by `*`; `None` for the unit monomial.
    fn render(&self) -> Option<String> {
        let parts: Vec<String> = self
            .commuting
            .iter()
            .map(|(c, e)| c.render(e))
            .chain(self.word.iter().map(ToString::to_string))
            .collect();
        (!parts.is_empty()).then(|| parts.join("*"))
    }
}

pub(crate) fn merge_commuting(
    into: &mut BTreeMap<Commuting, BigRational>,
    from: &BTreeMap<Commuting, BigRational>,
) {
    for (c, e) in from {
        let slot = into.entry(c.clone()).or_insert_with(BigRational::zero);
        *slot += e;
        if slot.is_zero() {
            into.remove(c);
        }
    }
}

/// Which part of a differential form a term lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grade {
    Zero,
    Dt,
    Dw,
}

pub type Sum = BTreeMap<Monomial, BigRational>;

/// `order_zero + dt_part * dt + dw_part`, where every word of `dw_part`
/// carries exactly one `dW` and no other part carries any.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DifferentialForm {
    order_zero: Sum,
    dt_part: Sum,
    dw_part: Sum,
}

impl DifferentialForm {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut f = Self::zero();
        f.add_term(Grade::Zero, Monomial::unit(), c);
        f
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    /// Single monomial; the grade follows from the word unless `dt` is set.
    pub fn monomial(mono: Monomial, coeff: BigRational, dt: bool) -> Self {
        let grade = match (dt, mono.contains_dw()) {
            (true, false) => Grade::Dt,
            (false, true) => Grade::Dw,
            (false, false) => Grade::Zero,
            (true, true) => return Self::zero(),
        };
        let mut f = Self::zero();
        f.add_term(grade, mono, coeff);
        f
    }

    pub fn order_zero(&self) -> &Sum {
        &self.order_zero
    }

    pub fn dt_part(&self) -> &Sum {
        &self.dt_part
    }

    pub fn dw_part(&self) -> &Sum {
        &self.dw_part
    }

    pub fn part(&self, grade: Grade) -> &Sum {
        match grade {
            Grade::Zero => &self.order_zero,
            Grade::Dt => &self.dt_part,
            Grade::Dw => &self.dw_part,
        }
    }

    fn part_mut(&mut self, grade: Grade) -> &mut Sum {
        match grade {
            Grade::Zero => &mut self.order_zero,
            Grade::Dt => &mut self.dt_part,
            Grade::Dw => &mut self.dw_part,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.order_zero.is_empty() && self.dt_part.is_empty() && self.dw_part.is_empty()
    }

    pub fn is_plain(&self) -> bool {
        self.dt_part.is_empty() && self.dw_part.is_empty()
    }

    pub fn len(&self) -> usize {
        self.order_zero.len() + self.dt_part.len() + self.dw_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    /// The rational value, if the form is a constant.
    pub fn as_constant(&self) -> Option<BigRational> {
        if !self.is_plain() {
            return None;
        }
        match self.order_zero.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (m, c) = self.order_zero.iter().next()?;
                (*m == Monomial::unit()).then(|| c.clone())
            }
            _ => None,
        }
    }

    /// The single term of a one-term form.
    pub fn as_monomial(&self) -> Option<(Grade, &Monomial, &BigRational)> {
        let mut it = self.terms();
        let first = it.next()?;
        it.next().is_none().then_some(first)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Grade, &Monomial, &BigRational)> {
        [Grade::Zero, Grade::Dt, Grade::Dw]
            .into_iter()
            .flat_map(move |g| self.part(g).iter().map(move |(m, c)| (g, m, c)))
    }

    /// Adds `coeff * mono` to the given part; the monomial must already be
    /// in normal form.
    pub fn add_term(&mut self, grade: Grade, mono: Monomial, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        let part = self.part_mut(grade);
        let slot = part.entry(mono.clone()).or_insert_with(BigRational::zero);
        *slot += coeff;
        if slot.is_zero() {
            part.remove(&mono);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (g, m, c) in other.terms() {
            out.add_term(g, m.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, k: &BigRational) -> Self {
        let mut out = Self::zero();
        for (g, m, c) in self.terms() {
            out.add_term(g, m.clone(), c * k);
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(&-BigRational::one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Image under the reversal anti-automorphism: every word, including
    /// the words inside moments, is read backwards.
    pub fn reversed(&self, alg: &Algebra) -> Self {
        let mut out = Self::zero();
        for (g, m, c) in self.terms() {
            let word = alg.normalize_word(m.word.iter().rev().cloned().collect());
            let commuting = m
                .commuting
                .iter()
                .map(|(k, e)| match k {
                    Commuting::Moment(w) => {
                        let rev: Vec<Letter> = w.iter().rev().cloned().collect();
                        let key = match alg.mode() {
                            Mode::Free => alg.moment_key(&rev),
                            Mode::Commutative => rev,
                        };
                        (Commuting::Moment(key), e.clone())
                    }
                    other => (other.clone(), e.clone()),
                })
                .collect();
            out.add_term(g, Monomial { word, commuting }, c.clone());
        }
        out
    }
}

fn push_term(out: &mut String, coeff: &BigRational, body: Option<String>) {
    let neg = coeff.is_negative();
    if out.is_empty() {
        if neg {
            out.push('-');
        }
    } else {
        out.push_str(if neg { " - " } else { " + " });
    }
    let mag = coeff.abs();
    match body {
        None => out.push_str(&mag.to_string()),
        Some(b) if mag.is_one() => out.push_str(&b),
        Some(b) => {
            out.push_str(&mag.to_string());
            out.push('*');
            out.push_str(&b);
        }
    }
}

fn render_sum(sum: &Sum) -> String {
    let mut s = String::new();
    for (m, c) in sum {
        push_term(&mut s, c, m.render());
    }
    s
}

impl fmt::Display for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut out = render_sum(&self.order_zero);
        if !self.dt_part.is_empty() {
            let inner = render_sum(&self.dt_part);
            let body = if self.dt_part.len() == 1 {
                let (m, c) = self.dt_part.iter().next().unwrap();
                let text = match m.render() {
                    None => "dt".to_owned(),
                    Some(b) => format!("{b}*dt"),
                };
                push_term(&mut out, c, Some(text));
                None
            } else {
                Some(format!("({inner})*dt"))
            };
            if let Some(b) = body {
                push_term(&mut out, &BigRational::one(), Some(b));
            }
        }
        for (m, c) in &self.dw_part {
            push_term(&mut out, c, m.render());
        }
        f.write_str(&out)
    }
}
