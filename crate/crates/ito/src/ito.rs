//! Ito product rule and form comparison.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

use crate::algebra::{Algebra, Letter, DEFAULT_COMMUTING};
use crate::error::ItoError;
use crate::form::{Commuting, DifferentialForm, Monomial};

/// Outcome of [`forms_equal`]; `difference` is `lhs - rhs` in normal form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub equal: bool,
    pub difference: DifferentialForm,
}

pub fn forms_equal(lhs: &DifferentialForm, rhs: &DifferentialForm) -> Comparison {
    let difference = lhs.sub(rhs);
    Comparison {
        equal: difference.is_zero(),
        difference,
    }
}

enum Piece {
    Fixed(Letter),
    Process,
}

fn mentions(name: &str, process: &str) -> bool {
    name.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|tok| tok == process)
}

fn letter_mentions(l: &Letter, process: &str) -> bool {
    l.base().is_some_and(|b| {
        if b.composite {
            mentions(&b.name, process)
        } else {
            b.name == process
        }
    })
}

impl Algebra {
    /// `dP` for a polynomial `P` of degree at most two in `process`, given
    /// `d(process)`. Every other symbol is treated as constant in time:
    /// `d(u X v X w) = u dX v X w + u X v dX w + u dX v dX w`.
    pub fn ito_differential(
        &self,
        p: &DifferentialForm,
        process: &str,
        dx: &DifferentialForm,
    ) -> Result<DifferentialForm, ItoError> {
        if !p.is_plain() {
            return Err(ItoError::UnsupportedPolynomial(
                "the polynomial must not contain dt or dW".into(),
            ));
        }
        if !dx.order_zero().is_empty() {
            return Err(ItoError::InvalidDifferential(format!(
                "order-zero terms in d{process}"
            )));
        }
        let x = DifferentialForm::monomial(
            Monomial::from_word(vec![Letter::op(process)]),
            BigRational::one(),
            false,
        );
        let mut out = DifferentialForm::zero();
        for (mono, coeff) in p.order_zero() {
            for key in mono.commuting.keys() {
                if let Commuting::Moment(w) = key {
                    if w.iter().any(|l| letter_mentions(l, process)) {
                        return Err(ItoError::UnsupportedPolynomial(format!(
                            "{process} inside a moment"
                        )));
                    }
                }
            }
            let pieces = expand(&mono.word, process)?;
            let slots: Vec<usize> = (0..pieces.len())
                .filter(|&i| matches!(pieces[i], Piece::Process))
                .collect();
            if slots.len() > 2 {
                return Err(ItoError::UnsupportedPolynomial(format!(
                    "degree {} in {process}; at most 2 is supported",
                    slots.len()
                )));
            }
            let central = DifferentialForm::monomial(
                Monomial {
                    word: vec![],
                    commuting: mono.commuting.clone(),
                },
                coeff.clone(),
                false,
            );
            for mask in 1u32..(1 << slots.len()) {
                let mut prod = central.clone();
                for (i, piece) in pieces.iter().enumerate() {
                    let factor = match piece {
                        Piece::Fixed(l) => DifferentialForm::monomial(
                            Monomial::from_word(vec![l.clone()]),
                            BigRational::one(),
                            false,
                        ),
                        Piece::Process => {
                            let k = slots.iter().position(|&s| s == i).unwrap();
                            if mask & (1 << k) != 0 {
                                dx.clone()
                            } else {
                                x.clone()
                            }
                        }
                    };
                    prod = self.multiply(&prod, &factor);
                }
                out = out.add(&prod);
            }
        }
        Ok(out)
    }

    /// The symbol a differential most plausibly describes: the unique
    /// operator symbol that has no commutation declarations and is not
    /// one of the coefficient names in [`DEFAULT_COMMUTING`].
    pub fn infer_process(&self, dx: &DifferentialForm) -> Option<String> {
        let mut found: Vec<String> = Vec::new();
        for (_, m, _) in dx.terms() {
            for l in &m.word {
                if let Some(b) = l.base() {
                    if !b.composite
                        && !self.has_declarations(&b.name)
                        && !DEFAULT_COMMUTING.contains(&b.name.as_str())
                        && !found.contains(&b.name)
                    {
                        found.push(b.name.clone());
                    }
                }
            }
        }
        (found.len() == 1).then(|| found.remove(0))
    }
}

fn expand(word: &[Letter], process: &str) -> Result<Vec<Piece>, ItoError> {
    let mut pieces = Vec::new();
    for l in word {
        match l {
            Letter::Op { base, exp } if !base.composite && base.name == process => {
                let k = exp
                    .is_integer()
                    .then(|| exp.to_u32())
                    .flatten()
                    .filter(|_| exp.is_positive())
                    .ok_or_else(|| {
                        ItoError::UnsupportedPolynomial(format!("{process} raised to {exp}"))
                    })?;
                pieces.extend((0..k).map(|_| Piece::Process));
            }
            l if letter_mentions(l, process) => {
                return Err(ItoError::UnsupportedPolynomial(format!(
                    "{process} inside {l}"
                )));
            }
            l => pieces.push(Piece::Fixed(l.clone())),
        }
    }
    Ok(pieces)
}

/// [`Algebra::ito_differential`] in the default algebra.
pub fn ito_differential(
    p: &DifferentialForm,
    process: &str,
    dx: &DifferentialForm,
) -> Result<DifferentialForm, ItoError> {
    Algebra::default().ito_differential(p, process, dx)
}
