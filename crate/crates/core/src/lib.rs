//! Strategic bidding of an energy storage unit in a conic market clearing.
//!
//! The lower level clears the market as a DC or Jabr-relaxed optimal power
//! flow. The upper level maximizes the storage owner's arbitrage profit. The
//! [`reduce`] module turns the bilevel program into a single-level one using
//! one of seventeen reduction techniques, [`solver`] solves the result and
//! [`driver`] runs the sequential bidding algorithm around it.

// NaN must fail the positivity checks; dense kernels index by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod case;
pub mod conic;
pub mod data;
pub mod driver;
pub mod opf;
pub mod par;
pub mod reduce;
pub mod smoothing;
pub mod solver;
