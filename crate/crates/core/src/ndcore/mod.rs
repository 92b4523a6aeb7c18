//! Reverse-mode automatic differentiation on a scalar tape, with exact
//! Hessian-vector products obtained by replaying the reverse sweep in dual
//! numbers.

mod operator;
mod param;
mod quadratic;
mod scalar;
mod tape;

pub use operator::{LossOperator, Objective};
pub use param::ParamVector;
pub use quadratic::Quadratic;
pub use scalar::{Dual, Scalar};
pub use tape::{Tape, Var};
