//! Numerical laboratory for sectorial operators on finite spaces of
//! homogeneous type.

// `!(x > 0.0)` style guards reject NaN on purpose; index loops mirror the
// stencil and quadrature formulas.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod calculus;
pub mod error;
pub mod hardy;
pub mod harness;
pub mod linalg;
pub mod operator;
pub mod paraproduct;
pub mod space;
pub mod tent;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/spaces.md")]
    struct Spaces;
    #[doc = include_str!("../../../book/src/calculus.md")]
    struct Calculus;
    #[doc = include_str!("../../../book/src/tent_hardy.md")]
    struct TentHardy;
    #[doc = include_str!("../../../book/src/paraproducts.md")]
    struct Paraproducts;
    #[doc = include_str!("../../../book/src/harness.md")]
    struct Harness;
    #[doc = include_str!("../../../README.md")]
    struct Readme;
}
