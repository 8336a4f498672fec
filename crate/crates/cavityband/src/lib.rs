//! Self-consistent band structure and multistability analysis for ultracold
//! atoms dispersively coupled to a single driven cavity mode.
//!
//! The cavity light field builds an intracavity lattice whose depth depends on
//! the atomic density through the atom-light overlap `f(v, q)`, while the
//! atomic Bloch state in turn depends on the lattice depth. This crate solves
//! that self-consistency loop and analyzes its consequences:
//!
//! * [`bloch`] — plane-wave solution of the band eigenproblem at fixed depth,
//!   and the overlap function `f` with error-controlled `v`-derivatives.
//! * [`photon`] — all steady-state photon numbers at fixed quasi-momentum,
//!   lineshape sweeps with hysteresis traces, and input-output curves.
//! * [`band`] — energy band diagrams with loop structures, computed by two
//!   independent methods that are cross-validated against each other.
//! * [`bistability`] — critical pump strengths, bistability windows, and
//!   solution-count maps over the (pump, detuning) plane.
//! * [`catastrophe`] — cusp and swallowtail singularities of the state
//!   equation, the universal quasi-momentum threshold for swallowtails, a
//!   butterfly exclusion check, and a numerical transversality rank test.
//! * [`stability`] — energetic (second variation) and dynamic (linearized
//!   evolution spectrum) classification of every branch.
//! * [`cli`] — a batch front end with reproducible, manifest-stamped runs.
//!
//! All quantities are exchanged in recoil units: energies in `E_R`,
//! frequencies in `ω_R = E_R/ħ`, lengths in `1/k_c`. Quasi-momentum lives in
//! units where the first Brillouin zone is `[-1, 1]`.

pub mod band;
pub mod bistability;
pub mod bloch;
pub mod catastrophe;
pub mod cli;
pub mod diff;
pub mod error;
pub mod overlap;
pub mod params;
pub mod photon;
pub mod stability;

pub use error::{Error, Result};
pub use params::{LatticeDepth, QuasiMomentum, SystemParams};
