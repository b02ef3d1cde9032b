//! Finite-dimensional dilations of unital completely positive maps.
//!
//! A normal UCP map `T` on a multi-matrix algebra `M = ⊕ Mat(n_k)` is dilated
//! to an endomorphism in two ways: through powers of the GNS bimodule of `T`
//! ([`bhat_skeide`]) and through intertwiner spaces of iterated
//! `T`-twisted tensor products ([`muhly_solel`]). Both are materialized at a
//! finite truncation level. Every Hilbert space involved is a
//! [`wstar::WStarBimodule`]: a concrete carrier with commuting left and right
//! actions, and every identification between such spaces is checked
//! numerically through an [`wstar::IsomorphismWitness`].

pub mod algebra;
pub mod bhat_skeide;
pub mod cp_map;
pub mod equivalence;
pub mod error;
pub mod hilbert_module;
pub mod linalg;
pub mod muhly_solel;
pub mod wstar;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
