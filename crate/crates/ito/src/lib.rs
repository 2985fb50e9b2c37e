//! Exact free Ito calculus on noncommutative polynomials.
//!
//! Forms are graded sums `order_zero + dt_part*dt + dw_part` with rational
//! coefficients. Products are reduced by the rules
//! `dt*dt = dt*dW = 0` and `a*dW*b * c*dW*d = phi(b*c)*a*d*dt`,
//! where `phi` is a tracial state. Moments `phi(w)` are central atoms
//! keyed by the least cyclic normal form of `w`.
//!
//! ```
//! use freecir_ito::{forms_equal, parse_expression, multiply_forms};
//!
//! let l = parse_expression("sigma/4*dW").unwrap();
//! let r = parse_expression("dW*sigma/4").unwrap();
//! let qv = multiply_forms(&l, &r);
//! assert!(forms_equal(&qv, &parse_expression("1/16*sigma^2*dt").unwrap()).equal);
//! ```

mod algebra;
mod error;
mod form;
mod ito;
mod parse;
mod reduce;

pub use algebra::{Algebra, Base, Letter, Mode, DEFAULT_COMMUTING, DEFAULT_SCALARS};
pub use error::ItoError;
pub use form::{Commuting, DifferentialForm, Grade, Monomial, Sum};
pub use ito::{forms_equal, ito_differential, Comparison};
pub use parse::parse_expression;
pub use reduce::{first_redex, multiply_forms, RawLetter, RawTerm, Redex};
