//! The expression language used to describe immersions and transversal fields.

mod expr;
mod parse;
mod random;
mod spec;
mod table;

pub use expr::{add, call, div, format_number, mul, neg, pow, sub, Expr, ExprDisplay, Func, TableRef};
pub use parse::{parse_expr, Location, ParseError, ParseErrorKind};
pub use random::random_expr;
pub use spec::{parse_immersion, ImmersionSpec, Interval, SpecError};
pub use table::HermiteTable;

use crate::jets::{Jet2, JetError};

/// Jet of one component at `point`; variables are seeded as coordinates.
pub fn eval_component(e: &Expr, point: &[f64]) -> Result<Jet2, JetError> {
    e.eval(point)
}
