//! `derive`: the symbolic Ito rewriter on the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use freecir_ito::{forms_equal, Algebra, DifferentialForm, ItoError};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeriveMode {
    /// Normal form of an expression.
    Reduce,
    /// `d(P)` for a polynomial `P` given `dX`.
    DSquare,
    /// Equality of two expressions.
    Compare,
}

impl FromStr for DeriveMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "reduce" => Ok(DeriveMode::Reduce),
            "d-square" | "differential" => Ok(DeriveMode::DSquare),
            "compare" => Ok(DeriveMode::Compare),
            _ => Err(CliError::Input(format!(
                "unknown derive mode {s:?}; expected reduce, d-square or compare"
            ))),
        }
    }
}

impl fmt::Display for DeriveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeriveMode::Reduce => "reduce",
            DeriveMode::DSquare => "d-square",
            DeriveMode::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct DeriveOptions {
    pub expr: Option<String>,
    pub file: Option<PathBuf>,
    /// `d-square`: the polynomial, default `X^2` for the process `X`.
    pub poly: Option<String>,
    pub process: Option<String>,
    /// `compare`: right-hand side; otherwise the input is split at `==`.
    pub against: Option<String>,
    pub commutative: bool,
    pub commute: Vec<String>,
    pub scalars: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DeriveOutcome {
    pub result: DifferentialForm,
    /// `Some` for `compare`.
    pub equal: Option<bool>,
    pub text: String,
}

fn ito_err(input: &str, e: ItoError) -> CliError {
    let caret = match &e {
        ItoError::Syntax { position, .. } | ItoError::Grading { position, .. } => {
            let col: usize = input.chars().take(*position).count();
            format!("\n  {input}\n  {}^", " ".repeat(col))
        }
        _ => String::new(),
    };
    CliError::Input(format!("{e}{caret}"))
}

impl DeriveOptions {
    pub fn algebra(&self) -> Algebra {
        let mut alg = if self.commutative {
            Algebra::commutative()
        } else {
            Algebra::default()
        };
        if !self.commute.is_empty() {
            let names: Vec<&str> = self.commute.iter().map(String::as_str).collect();
            alg.declare_commuting(&names);
        }
        for s in &self.scalars {
            alg.declare_scalar(s);
        }
        alg
    }

    fn input(&self) -> Result<String, CliError> {
        match (&self.expr, &self.file) {
            (Some(e), None) => Ok(e.clone()),
            (None, Some(p)) => std::fs::read_to_string(p)
                .map(|s| s.trim().to_owned())
                .map_err(|source| CliError::Io {
                    path: p.display().to_string(),
                    source,
                }),
            (Some(_), Some(_)) => Err(CliError::Input(
                "give either --expr or --file, not both".into(),
            )),
            (None, None) => Err(CliError::Input(
                "an expression is required (--expr or --file)".into(),
            )),
        }
    }
}

fn parse(alg: &Algebra, text: &str) -> Result<DifferentialForm, CliError> {
    alg.parse(text).map_err(|e| ito_err(text, e))
}

pub fn run_derive(mode: DeriveMode, opts: &DeriveOptions) -> Result<DeriveOutcome, CliError> {
    let alg = opts.algebra();
    let input = opts.input()?;
    match mode {
        DeriveMode::Reduce => {
            let f = parse(&alg, &input)?;
            Ok(DeriveOutcome {
                text: f.to_string(),
                result: f,
                equal: None,
            })
        }
        DeriveMode::DSquare => {
            let dx = parse(&alg, &input)?;
            let process = match &opts.process {
                Some(p) => p.clone(),
                None => alg.infer_process(&dx).ok_or_else(|| {
                    CliError::Input("cannot infer the process symbol; pass --process".into())
                })?,
            };
            let poly_text = opts.poly.clone().unwrap_or_else(|| format!("{process}^2"));
            let poly = parse(&alg, &poly_text)?;
            let d = alg
                .ito_differential(&poly, &process, &dx)
                .map_err(|e| ito_err(&poly_text, e))?;
            Ok(DeriveOutcome {
                text: format!("d({poly_text}) = {d}"),
                result: d,
                equal: None,
            })
        }
        DeriveMode::Compare => {
            let (lhs, rhs) = match &opts.against {
                Some(r) => (input.clone(), r.clone()),
                None => {
                    let (l, r) = input.split_once("==").ok_or_else(|| {
                        CliError::Input(
                            "compare needs --against or an input of the form 'lhs == rhs'".into(),
                        )
                    })?;
                    (l.trim().to_owned(), r.trim().to_owned())
                }
            };
            let c = forms_equal(&parse(&alg, &lhs)?, &parse(&alg, &rhs)?);
            let text = if c.equal {
                "equal".to_owned()
            } else {
                format!("not equal; lhs - rhs = {}", c.difference)
            };
            Ok(DeriveOutcome {
                result: c.difference,
                equal: Some(c.equal),
                text,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(expr: &str) -> DeriveOptions {
        DeriveOptions {
            expr: Some(expr.into()),
            ..Default::default()
        }
    }

    #[test]
    fn reduce_dt_squared() {
        assert_eq!(
            run_derive(DeriveMode::Reduce, &opts("dt*dt")).unwrap().text,
            "0"
        );
    }

    #[test]
    fn d_square_infers_the_process() {
        let mut o = opts("(1/2*(a - sigma^2/4)*inv(U) - b/2*U)*dt + sigma/2*dW");
        o.commutative = true;
        let out = run_derive(DeriveMode::DSquare, &o).unwrap();
        assert_eq!(out.text, "d(U^2) = (-b*U^2 + a)*dt + U*sigma*dW");
    }

    #[test]
    fn compare_split_and_witness() {
        let out = run_derive(DeriveMode::Compare, &opts("X*a == a*X")).unwrap();
        assert_eq!(out.equal, Some(false));
        assert!(out.text.contains("X*a - a*X"), "{}", out.text);
        let mut o = opts("X*a == a*X");
        o.commute = vec!["X".into(), "a".into()];
        assert_eq!(
            run_derive(DeriveMode::Compare, &o).unwrap().equal,
            Some(true)
        );
    }

    #[test]
    fn parse_errors_point_at_the_column() {
        let err = run_derive(DeriveMode::Reduce, &opts("a + * b")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("\n      ^"), "{err}");
    }
}
