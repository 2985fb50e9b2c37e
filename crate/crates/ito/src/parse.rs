//! Expression grammar.
//!
//! ```text
//! expr    := ['+'|'-'] term (('+'|'-') term)*
//! term    := unary (('*'|'/') unary)*
//! unary   := '-' unary | power
//! power   := primary ['^' (integer | '(' expr ')')]
//! primary := number | ident | 'dt' | 'dW' | func '(' expr ')' | '(' expr ')'
//! func    := 'phi' | 'sqrt' | 'root4' | 'inv'
//! ```
//!
//! Division is only by nonzero constants and scalar symbols.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

use crate::algebra::{Algebra, Base, Letter, Mode};
use crate::error::ItoError;
use crate::form::{Commuting, DifferentialForm, Grade, Monomial};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ItoError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                out.push((start, Tok::Num(decimal(&lit, start)?)));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                out.push((
                    start,
                    Tok::Ident(if name == "φ" { "phi".into() } else { name }),
                ));
                continue;
            }
            other => {
                return Err(ItoError::syntax(
                    start,
                    format!("unexpected character '{other}'"),
                ))
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((chars.len(), Tok::End));
    Ok(out)
}

fn decimal(lit: &str, pos: usize) -> Result<BigRational, ItoError> {
    let bad = || ItoError::syntax(pos, format!("malformed number '{lit}'"));
    let (int, frac) = match lit.split_once('.') {
        Some((a, b)) => (a, b),
        None => (lit, ""),
    };
    if (int.is_empty() && frac.is_empty()) || frac.contains('.') {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let d = num_traits::pow(BigInt::from(10), frac.len());
    Ok(BigRational::new(n, d))
}

struct Parser<'a> {
    alg: &'a Algebra,
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ItoError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ItoError::syntax(self.pos(), format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<DifferentialForm, ItoError> {
        let mut acc = match self.peek() {
            Tok::Plus => {
                self.bump();
                self.term()?
            }
            Tok::Minus => {
                self.bump();
                self.term()?.neg()
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<DifferentialForm, ItoError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = self.alg.multiply(&acc, &self.unary()?);
                }
                Tok::Slash => {
                    self.bump();
                    let pos = self.pos();
                    let rhs = self.unary()?;
                    let inv = central_inverse(&rhs).ok_or_else(|| {
                        ItoError::syntax(pos, "divisor must be a nonzero constant or scalar")
                    })?;
                    acc = self.alg.multiply(&acc, &inv);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<DifferentialForm, ItoError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<DifferentialForm, ItoError> {
        let pos = self.pos();
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let epos = self.pos();
        let exp = match self.bump().1 {
            Tok::Num(n) => n,
            Tok::Minus => match self.bump().1 {
                Tok::Num(n) => -n,
                _ => return Err(ItoError::syntax(epos, "expected exponent")),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                e.as_constant()
                    .ok_or_else(|| ItoError::syntax(epos, "exponent must be a rational constant"))?
            }
            _ => return Err(ItoError::syntax(epos, "expected exponent")),
        };
        power(self.alg, &base, &exp, pos)
    }

    fn primary(&mut self) -> Result<DifferentialForm, ItoError> {
        let (pos, tok) = self.bump();
        match tok {
            Tok::Num(n) => Ok(DifferentialForm::constant(n)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) if *self.peek() == Tok::LParen && is_function(&name) => {
                self.bump();
                let arg = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                match name.as_str() {
                    "phi" => phi(self.alg, &arg, pos),
                    "sqrt" => power(self.alg, &arg, &BigRational::new(1.into(), 2.into()), pos),
                    "root4" => power(self.alg, &arg, &BigRational::new(1.into(), 4.into()), pos),
                    _ => power(self.alg, &arg, &-BigRational::one(), pos),
                }
            }
            Tok::Ident(name) => Ok(symbol(self.alg, &name)),
            Tok::End => Err(ItoError::syntax(pos, "unexpected end of input")),
            other => Err(ItoError::syntax(
                pos,
                format!("unexpected {}", describe(&other)),
            )),
        }
    }
}

fn describe(t: &Tok) -> &'static str {
    match t {
        Tok::RParen => "')'",
        Tok::Plus => "'+'",
        Tok::Minus => "'-'",
        Tok::Star => "'*'",
        Tok::Slash => "'/'",
        Tok::Caret => "'^'",
        Tok::LParen => "'('",
        _ => "token",
    }
}

fn is_function(name: &str) -> bool {
    matches!(name, "phi" | "sqrt" | "root4" | "inv")
}

fn symbol(alg: &Algebra, name: &str) -> DifferentialForm {
    let one = BigRational::one();
    match name {
        "dt" => DifferentialForm::monomial(Monomial::unit(), one, true),
        "dW" => DifferentialForm::monomial(Monomial::from_word(vec![Letter::Dw]), one, false),
        s if alg.is_scalar(s) => {
            let mono = Monomial {
                word: vec![],
                commuting: BTreeMap::from([(Commuting::Scalar(s.into()), one.clone())]),
            };
            DifferentialForm::monomial(mono, one, false)
        }
        s => DifferentialForm::monomial(Monomial::from_word(vec![Letter::op(s)]), one, false),
    }
}

/// Inverse of `c * (central factors)` with `c != 0`.
fn central_inverse(f: &DifferentialForm) -> Option<DifferentialForm> {
    let (g, m, c) = f.as_monomial()?;
    if g != Grade::Zero || !m.word.is_empty() {
        return None;
    }
    let commuting = m.commuting.iter().map(|(k, e)| (k.clone(), -e)).collect();
    Some(DifferentialForm::monomial(
        Monomial {
            word: vec![],
            commuting,
        },
        c.recip(),
        false,
    ))
}

fn phi(alg: &Algebra, arg: &DifferentialForm, pos: usize) -> Result<DifferentialForm, ItoError> {
    if !arg.dw_part().is_empty() {
        return Err(ItoError::grading(
            pos,
            "phi cannot be applied to an expression containing dW",
        ));
    }
    if !arg.dt_part().is_empty() {
        return Err(ItoError::grading(
            pos,
            "phi cannot be applied to an expression containing dt",
        ));
    }
    if alg.mode() == Mode::Commutative {
        return Ok(arg.clone());
    }
    let mut out = DifferentialForm::zero();
    for (m, c) in arg.order_zero() {
        let mut mono = Monomial {
            word: vec![],
            commuting: m.commuting.clone(),
        };
        let key = alg.moment_key(&m.word);
        if !key.is_empty() {
            mono.absorb(&BTreeMap::from([(
                Commuting::Moment(key),
                BigRational::one(),
            )]));
        }
        out.add_term(Grade::Zero, mono, c.clone());
    }
    Ok(out)
}

fn exact_root(n: &BigInt, k: u32) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.nth_root(k);
    (num_traits::pow(r.clone(), k as usize) == *n).then_some(r)
}

/// `x^(1/q)` for a rational, when it is rational.
fn rational_root(x: &BigRational, q: u32) -> Option<BigRational> {
    Some(BigRational::new(
        exact_root(x.numer(), q)?,
        exact_root(x.denom(), q)?,
    ))
}

fn power(
    alg: &Algebra,
    base: &DifferentialForm,
    exp: &BigRational,
    pos: usize,
) -> Result<DifferentialForm, ItoError> {
    if exp.is_integer() && !exp.is_negative() {
        let k = exp
            .to_u32()
            .ok_or_else(|| ItoError::syntax(pos, "exponent too large"))?;
        return Ok((0..k).fold(DifferentialForm::one(), |acc, _| alg.multiply(&acc, base)));
    }
    if !base.is_plain() {
        return Err(ItoError::grading(
            pos,
            "fractional or negative power of a stochastic differential",
        ));
    }
    if base.is_zero() {
        return Err(ItoError::syntax(
            pos,
            "zero raised to a negative or fractional power",
        ));
    }
    if let Some(f) = monomial_power(alg, base, exp) {
        return Ok(f);
    }
    let letter = Letter::Op {
        base: Base::composite(&base.to_string()),
        exp: exp.clone(),
    };
    Ok(DifferentialForm::monomial(
        Monomial::from_word(vec![letter]),
        BigRational::one(),
        false,
    ))
}

/// Power of a single-term plain form whose letters commute pairwise
/// (always true for one letter); negative integer powers need no
/// commutation since the word is simply reversed.
fn monomial_power(
    alg: &Algebra,
    base: &DifferentialForm,
    exp: &BigRational,
) -> Option<DifferentialForm> {
    let (_, m, c) = base.as_monomial()?;
    let w = &m.word;
    let commuting_word = (0..w.len()).all(|i| (i + 1..w.len()).all(|j| alg.commute(&w[i], &w[j])));
    if !commuting_word && !exp.is_integer() {
        return None;
    }
    let q = exp.denom().to_u32()?;
    let p = exp.numer().to_i32()?;
    let root = rational_root(c, q)?;
    let coeff = num_traits::pow(
        if p < 0 { root.recip() } else { root },
        p.unsigned_abs() as usize,
    );
    let mut word: Vec<Letter> = w
        .iter()
        .map(|l| match l {
            Letter::Op { base, exp: e } => Letter::Op {
                base: base.clone(),
                exp: e * exp,
            },
            Letter::Dw => Letter::Dw,
        })
        .collect();
    if exp.is_negative() {
        word.reverse();
    }
    let mut out = if commuting_word || p == -1 {
        DifferentialForm::monomial(
            Monomial::from_word(alg.normalize_word(word)),
            BigRational::one(),
            false,
        )
    } else {
        let unit: Vec<Letter> = w
            .iter()
            .rev()
            .map(|l| match l {
                Letter::Op { base, exp: e } => Letter::Op {
                    base: base.clone(),
                    exp: -e,
                },
                Letter::Dw => Letter::Dw,
            })
            .collect();
        let inv = DifferentialForm::monomial(Monomial::from_word(unit), BigRational::one(), false);
        (0..p.unsigned_abs()).fold(DifferentialForm::one(), |acc, _| alg.multiply(&acc, &inv))
    };
    let commuting: BTreeMap<Commuting, BigRational> = m
        .commuting
        .iter()
        .map(|(k, e)| (k.clone(), e * exp))
        .collect();
    let central = DifferentialForm::monomial(
        Monomial {
            word: vec![],
            commuting,
        },
        coeff,
        false,
    );
    out = alg.multiply(&central, &out);
    Some(out)
}

impl Algebra {
    /// Parses an expression into normal form.
    pub fn parse(&self, text: &str) -> Result<DifferentialForm, ItoError> {
        let mut p = Parser {
            alg: self,
            toks: tokenize(text)?,
            at: 0,
        };
        let f = p.expr()?;
        if *p.peek() != Tok::End {
            return Err(ItoError::syntax(
                p.pos(),
                format!("unexpected {}", describe(p.peek())),
            ));
        }
        Ok(f)
    }
}

/// Parses in the default algebra.
pub fn parse_expression(text: &str) -> Result<DifferentialForm, ItoError> {
    Algebra::default().parse(text)
}
