//! Emulation of reduced-precision floating-point arithmetic and
//! order-dependent reductions.
//!
//! Values of an emulated format are represented inside an `f64` working real;
//! correctness is defined by the quantization function [`round_to_format`],
//! not by native hardware types. Because `f64` carries more than `2p + 2`
//! significand bits for every supported format, rounding the `f64` result of
//! an operation on format-representable inputs is bit-identical to rounding
//! the exact result (innocuous double rounding), so the emulation is exact.

mod exact;
mod format;
mod reduce;

pub use exact::{exact_dot, exact_sum};
pub use format::{round_to_format, FloatFormat, FormatName};
pub(crate) use reduce::dot_prerounded;
pub use reduce::{
    dot_ordered, permutation_spread, sum_ordered, AccumulationOrder, OrderError, Reduction,
    ReductionPolicy, Spread,
};
