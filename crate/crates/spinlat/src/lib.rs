//! Single-excitation transport in disordered dipolar spin networks.
//!
//! An excitation hops on a two-dimensional random network of spins with
//! couplings `J_ij = J_max / r_ij^3`. Each site dephases locally at rate
//! `Γ_j`, and an optional loss channel moves population from an extraction
//! site back to an injection site. The crate provides:
//!
//! * [`geometry`]: random disc configurations, couplings, coupling statistics;
//! * [`liouvillian`]: the vectorized Lindblad generator and its spectrum;
//! * [`dynamics`]: density-matrix trajectories and purity;
//! * [`measures`]: integrated survival/transfer times `T_ij` and trap MFPTs;
//! * [`ness`]: steady-state flux `η` and probability currents;
//! * [`reference`]: closed-form three-site results;
//! * [`ensemble`]: disorder campaigns, bootstrap medians and fits.
//!
//! Units: lengths in lattice units (0.5 nm), energies and rates in units of
//! `J_max`, times in `1/J_max`.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod liouvillian;
pub mod measures;
pub mod ness;
pub mod reference;
pub mod rng;
pub mod synth;

mod linalg;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
