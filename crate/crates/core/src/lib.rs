//! Exact simulation of delayed-choice entanglement swapping.
//!
//! Two singlets `|Ψ⁻₁,₂⟩|Ψ⁻₃,₄⟩` are prepared; Alice and Bob record the
//! outer particles 1 and 4 at chosen angles while Eve measures the inner
//! pair (2,3) in the Bell or the product basis, before or after them. Eve's
//! report then sorts the outer data into subensembles. A classical model
//! with two independent bit-valued "singlets" shows the same relabelling
//! without any entanglement.
//!
//! - [`qcore`]: state vectors, pair bases, expansions and partial traces
//! - [`contexts`]: Eve's two contexts and the single-particle angle bases
//! - [`protocol`]: trials, orderings, exact joint distributions, post-selection
//! - [`classical`]: the bit-valued analogue and the tabulated 30-run fixture
//! - [`stats`]: correlators, CHSH and χ² uniformity

pub mod classical;
pub mod contexts;
pub mod protocol;
pub mod qcore;
pub mod stats;
