//! Finite-stage constructions of complete, densely hitting holomorphic
//! embeddings of complex curves in `C^n`.
//!
//! Every map built here is an exact composition of shears, overshears and
//! affine maps ([`autword::AutWord`]), so injectivity and holomorphy hold by
//! construction. What is numerical is the quantitative bookkeeping: how far a
//! word moves a compact, how far an image stays from a labyrinth of flat
//! balls, and the resulting intrinsic-distance certificates. Those are
//! recorded as explicit margins in [`engine::StageRecord`].
//!
//! The crate is `no_std` (with `alloc`). The `std` feature enables parallel
//! per-sample evaluation.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autword;
pub mod engine;
pub mod geometry;
pub mod interpolation;
pub mod labyrinth;
pub mod linalg;
pub mod metric;
pub mod par;
pub mod point;
pub mod poly;
pub mod pushoff;

pub use num_complex::Complex64 as C64;

pub use autword::{AffineMap, AutWord, Overshear, Primitive, Shear};
pub use point::CPoint;
pub use poly::Poly;

/// Float methods for `no_std` builds; inherent methods win under `std`.
#[allow(unused_imports)]
pub(crate) mod prelude {
    pub use num_traits::Float;
}
