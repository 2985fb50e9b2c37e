//! Alphabet, commutation declarations and word normal forms.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Name of an operator symbol. Composite bases stand for a whole expression
/// under a fractional power or an inverse, e.g. `sqrt(a + X)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Base {
    pub name: String,
    pub composite: bool,
}

impl Base {
    pub fn symbol(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            composite: false,
        }
    }

    pub fn composite(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            composite: true,
        }
    }

    fn bracketed(&self) -> String {
        if self.composite {
            format!("({})", self.name)
        } else {
            self.name.clone()
        }
    }
}

/// One factor of a noncommutative word: a power of an operator, or the
/// free Brownian increment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    Op { base: Base, exp: BigRational },
    Dw,
}

impl Letter {
    pub fn op(name: &str) -> Self {
        Letter::Op {
            base: Base::symbol(name),
            exp: BigRational::one(),
        }
    }

    pub fn power(name: &str, exp: BigRational) -> Self {
        Letter::Op {
            base: Base::symbol(name),
            exp,
        }
    }

    pub fn base(&self) -> Option<&Base> {
        match self {
            Letter::Op { base, .. } => Some(base),
            Letter::Dw => None,
        }
    }

    pub fn is_dw(&self) -> bool {
        matches!(self, Letter::Dw)
    }
}

pub(crate) fn fmt_power(base: &str, bracketed: &str, exp: &BigRational) -> String {
    let half = BigRational::new(1.into(), 2.into());
    let quarter = BigRational::new(1.into(), 4.into());
    if exp.is_one() {
        bracketed.to_owned()
    } else if *exp == half {
        format!("sqrt({base})")
    } else if *exp == quarter {
        format!("root4({base})")
    } else if *exp == -BigRational::one() {
        format!("inv({base})")
    } else if exp.is_integer() && exp.is_positive() {
        format!("{bracketed}^{exp}")
    } else {
        format!("{bracketed}^({exp})")
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Letter::Dw => f.write_str("dW"),
            Letter::Op { base, exp } => f.write_str(&fmt_power(&base.name, &base.bracketed(), exp)),
        }
    }
}

/// How products of distinct symbols behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Noncommutative by default; `phi` is the tracial state.
    Free,
    /// Everything commutes and `phi` is the identity map: the classical
    /// scalar Ito calculus.
    Commutative,
}

/// Commutation declarations and scalar symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Algebra {
    mode: Mode,
    commuting: BTreeSet<(String, String)>,
    scalars: BTreeSet<String>,
}

/// Symbols generated by the initial value, mutually commuting by default.
pub const DEFAULT_COMMUTING: [&str; 5] = ["a", "sigma", "X0", "V0", "U0"];
/// Symbols treated as real scalars by default.
pub const DEFAULT_SCALARS: [&str; 1] = ["b"];

impl Default for Algebra {
    fn default() -> Self {
        let mut alg = Self::free();
        alg.declare_commuting(&DEFAULT_COMMUTING);
        for s in DEFAULT_SCALARS {
            alg.declare_scalar(s);
        }
        alg
    }
}

impl Algebra {
    /// No declarations: every pair of distinct symbols is noncommuting.
    pub fn free() -> Self {
        Self {
            mode: Mode::Free,
            commuting: BTreeSet::new(),
            scalars: BTreeSet::new(),
        }
    }

    /// Classical calculus, with the default scalar symbols.
    pub fn commutative() -> Self {
        let mut alg = Self {
            mode: Mode::Commutative,
            ..Self::free()
        };
        for s in DEFAULT_SCALARS {
            alg.declare_scalar(s);
        }
        alg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Declares every pair of the given symbols commuting.
    pub fn declare_commuting(&mut self, names: &[&str]) -> &mut Self {
        for (i, x) in names.iter().enumerate() {
            for y in &names[i + 1..] {
                self.commuting.insert(ordered(x, y));
            }
        }
        self
    }

    pub fn declare_scalar(&mut self, name: &str) -> &mut Self {
        self.scalars.insert(name.to_owned());
        self
    }

    pub fn is_scalar(&self, name: &str) -> bool {
        self.scalars.contains(name)
    }

    pub fn scalars(&self) -> impl Iterator<Item = &str> {
        self.scalars.iter().map(String::as_str)
    }

    /// Whether the symbol takes part in some commutation declaration.
    pub fn has_declarations(&self, name: &str) -> bool {
        self.commuting.iter().any(|(x, y)| x == name || y == name)
    }

    pub fn symbols_commute(&self, x: &str, y: &str) -> bool {
        self.mode == Mode::Commutative || x == y || self.commuting.contains(&ordered(x, y))
    }

    pub fn commute(&self, x: &Letter, y: &Letter) -> bool {
        if self.mode == Mode::Commutative {
            return true;
        }
        match (x.base(), y.base()) {
            (Some(p), Some(q)) if p == q => true,
            (Some(p), Some(q)) if !p.composite && !q.composite => {
                self.commuting.contains(&ordered(&p.name, &q.name))
            }
            _ => false,
        }
    }

    /// Canonical representative of a word in the partially commutative
    /// monoid: powers of one base that can meet are merged, then the
    /// lexicographically least arrangement is chosen.
    pub fn normalize_word(&self, mut word: Vec<Letter>) -> Vec<Letter> {
        while self.merge_once(&mut word) {}
        self.lex_normal_form(word)
    }

    fn merge_once(&self, word: &mut Vec<Letter>) -> bool {
        for i in 0..word.len() {
            let Letter::Op { base, .. } = &word[i] else {
                continue;
            };
            let base = base.clone();
            for j in i + 1..word.len() {
                if word[j].base() == Some(&base) {
                    let Letter::Op { exp: extra, .. } = word.remove(j) else {
                        unreachable!()
                    };
                    if let Letter::Op { exp, .. } = &mut word[i] {
                        *exp += extra;
                        if exp.is_zero() {
                            word.remove(i);
                        }
                    }
                    return true;
                }
                if !self.commute(&word[j], &word[i]) {
                    break;
                }
            }
        }
        false
    }

    fn lex_normal_form(&self, mut rest: Vec<Letter>) -> Vec<Letter> {
        let mut out = Vec::with_capacity(rest.len());
        while !rest.is_empty() {
            let mut pick = 0;
            for i in 1..rest.len() {
                if rest[i] < rest[pick] && (0..i).all(|k| self.commute(&rest[k], &rest[i])) {
                    pick = i;
                }
            }
            out.push(rest.remove(pick));
        }
        out
    }

    /// Key of `phi(word)`: the least normal form among all cyclic
    /// conjugates, shortest first.
    pub fn moment_key(&self, word: &[Letter]) -> Vec<Letter> {
        let start = self.normalize_word(word.to_vec());
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = vec![start.clone()];
        let mut best = start;
        while let Some(w) = queue.pop() {
            if (w.len(), &w) < (best.len(), &best) {
                best = w.clone();
            }
            for i in 0..w.len() {
                if !(0..i).all(|k| self.commute(&w[k], &w[i])) {
                    continue;
                }
                let mut next = w.clone();
                let l = next.remove(i);
                next.push(l);
                let next = self.normalize_word(next);
                if seen.insert(next.clone()) {
                    queue.push(next);
                }
            }
        }
        best
    }
}

fn ordered(x: &str, y: &str) -> (String, String) {
    if x <= y {
        (x.to_owned(), y.to_owned())
    } else {
        (y.to_owned(), x.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn inverse_cancels_and_roots_merge() {
        let alg = Algebra::default();
        let w = vec![
            Letter::op("V"),
            Letter::power("V", r(-1, 1)),
            Letter::op("a"),
        ];
        assert_eq!(alg.normalize_word(w), vec![Letter::op("a")]);
        let w = vec![Letter::power("X", r(1, 2)), Letter::power("X", r(1, 2))];
        assert_eq!(alg.normalize_word(w), vec![Letter::op("X")]);
    }

    #[test]
    fn declared_pairs_reorder_but_others_do_not() {
        let alg = Algebra::default();
        let w = vec![Letter::op("sigma"), Letter::op("a")];
        assert_eq!(
            alg.normalize_word(w),
            vec![Letter::op("a"), Letter::op("sigma")]
        );
        let w = vec![Letter::op("X"), Letter::op("a")];
        assert_eq!(alg.normalize_word(w.clone()), w);
        let w = vec![Letter::op("sigma"), Letter::op("V"), Letter::op("a")];
        assert_eq!(alg.normalize_word(w.clone()), w);
    }

    #[test]
    fn merging_reaches_across_commuting_letters() {
        let alg = Algebra::default();
        let w = vec![Letter::op("sigma"), Letter::op("a"), Letter::op("sigma")];
        assert_eq!(
            alg.normalize_word(w),
            vec![Letter::op("a"), Letter::power("sigma", r(2, 1))]
        );
    }

    #[test]
    fn moment_keys_are_cyclic_invariant() {
        let alg = Algebra::free();
        let w = vec![Letter::op("b"), Letter::op("c"), Letter::op("d")];
        let rot = vec![Letter::op("d"), Letter::op("b"), Letter::op("c")];
        assert_eq!(alg.moment_key(&w), alg.moment_key(&rot));
        let rev = vec![Letter::op("d"), Letter::op("c"), Letter::op("b")];
        assert_ne!(alg.moment_key(&w), alg.moment_key(&rev));
        let w = vec![
            Letter::power("X", r(1, 2)),
            Letter::op("a"),
            Letter::power("X", r(1, 2)),
        ];
        assert_eq!(
            alg.moment_key(&w),
            alg.moment_key(&[Letter::op("X"), Letter::op("a")])
        );
        let w = vec![
            Letter::op("V"),
            Letter::op("a"),
            Letter::power("V", r(-1, 1)),
        ];
        assert_eq!(alg.moment_key(&w), vec![Letter::op("a")]);
    }

    #[test]
    fn commutative_mode_sorts_everything() {
        let alg = Algebra::commutative();
        let w = vec![
            Letter::Dw,
            Letter::op("U"),
            Letter::op("sigma"),
            Letter::op("U"),
        ];
        assert_eq!(
            alg.normalize_word(w),
            vec![Letter::power("U", r(2, 1)), Letter::op("sigma"), Letter::Dw]
        );
    }

    #[test]
    fn letters_print_in_the_input_grammar() {
        assert_eq!(Letter::power("X", r(1, 2)).to_string(), "sqrt(X)");
        assert_eq!(Letter::power("X", r(1, 4)).to_string(), "root4(X)");
        assert_eq!(Letter::power("V", r(-1, 1)).to_string(), "inv(V)");
        assert_eq!(Letter::power("V", r(2, 1)).to_string(), "V^2");
        assert_eq!(Letter::power("V", r(-2, 1)).to_string(), "V^(-2)");
        assert_eq!(Letter::power("V", r(3, 2)).to_string(), "V^(3/2)");
        let c = Letter::Op {
            base: Base::composite("a + X"),
            exp: r(1, 2),
        };
        assert_eq!(c.to_string(), "sqrt(a + X)");
    }
}
