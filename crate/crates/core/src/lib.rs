//! Operational quantum work fluctuation theorem at small Hilbert-space
//! dimension.
//!
//! A thermal state `ρ_0 = e^{−βH_0}/Z_0` is purified, the purifying
//! environment is measured with a POVM, and the resulting ensemble
//! `{(p_i, ρ_i)}` is driven by a unitary `U`. The conditional work values
//! `⟨w⟩_i = tr[ρ_i(U†H_T U − H_0)]` satisfy
//! `Σ_i p_i e^{−β⟨w⟩_i} ≤ e^{−βΔF}`, which gives the bound chain
//! `W_avg ≥ ΔF̃ ≥ ΔF`. The crate builds every piece of that scenario,
//! including Gibbs-preserving damping between driving segments, the
//! stroboscopic meter that measures work, the trace inequalities behind the
//! bound, and a derivative-free search that tightens `ΔF̃`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driving;
pub mod error;
pub mod inequalities;
pub mod meter;
pub mod openthermo;
pub mod operators;
pub mod optimize;
pub mod random;
pub mod states;
pub mod suites;

pub use error::{Error, Result};
