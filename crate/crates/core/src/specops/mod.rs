//! Operators on truncated Fourier spaces over the circle, their symbols and
//! the positive weights used for regularization.

pub mod expr;
pub mod operator;
pub mod symbol;
pub mod trig;
pub mod weight;

pub use expr::{OperatorExpr, DEFAULT_SYMBOL_DEPTH};
pub use operator::{BandMatrix, OpMatrix, Parity, Space, SpectralOperator, SuperOperator};
pub use symbol::{ClassicalSymbol, SymbolComponent};
pub use trig::TrigPoly;
pub use weight::Weight;
