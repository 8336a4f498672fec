//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the solver and analysis modules.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more parameter invariants are violated.
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    /// A depth/photon-number pair with inconsistent signs was requested.
    #[error("inconsistent sign: v = {v} with u0 = {u0} implies negative photon number")]
    InconsistentSign { v: f64, u0: f64 },

    /// The band eigenproblem did not converge within the truncation cap.
    #[error("Bloch solver did not converge: |Δμ| = {delta_mu:.3e} at R = {r_max}")]
    Truncation { delta_mu: f64, r_max: usize },

    /// A finite-difference derivative could not be formed.
    #[error("derivative unavailable at v = {v}: {reason}")]
    DerivativeUnavailable { v: f64, reason: String },

    /// The self-consistency scan found no root where at least one must exist.
    #[error("internal error: no self-consistent root found for q = {q}")]
    NoRoots { q: f64 },

    /// Variational extremization failed to converge from every seed.
    #[error("extremization failure at q = {q}: no seed converged")]
    ExtremizationFailure { q: f64 },

    /// The two band-structure methods disagree on the number of branches.
    #[error(
        "cross-validation failure at q = {q}: method 1 found {m1} branches, method 2 found {m2}"
    )]
    BranchCountMismatch { q: f64, m1: usize, m2: usize },

    /// A requested critical/singular point does not exist in the search window.
    #[error("not found: {0}")]
    NotFound(String),

    /// The bistability window degenerated to a single point.
    #[error("degenerate window: single fold root at delta_c = {delta_c}")]
    DegenerateWindow { delta_c: f64 },

    /// The swallowtail onset lies outside the supplied search window.
    #[error("onset not bracketed by window ({lo}, {hi}): {}", if *.already_supercritical { "already supercritical at the lower edge" } else { "no candidate up to the upper edge" })]
    OnsetOutsideWindow {
        lo: f64,
        hi: f64,
        already_supercritical: bool,
    },

    /// Perturbation truncation must stay below the state truncation.
    #[error("perturbation truncation J = {j} must be less than state truncation R = {r}")]
    TruncationOrder { j: usize, r: usize },

    /// An eigenvalue decomposition failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A run configuration failed validation.
    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// A computation finished without a usable result (distinct from failure).
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// Filesystem or serialization problem in the batch front end.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization problem in the batch front end.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
