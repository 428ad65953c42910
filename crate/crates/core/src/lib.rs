// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Failures carry the last iterate and the full trace by design.
#![allow(clippy::result_large_err)]

pub mod error;
pub mod matrix;
pub mod precond;
pub mod sketch;
pub mod solvers;
pub mod ipm;
pub mod io;
pub mod bench;
