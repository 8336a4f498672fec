//! Atom-light overlap `f(v, q) = ⟨cos²x⟩` and its depth derivatives.
//!
//! The overlap controls the cavity resonance shift and is the sole nonlinear
//! ingredient of the self-consistency problem. Analyses that need `f` off the
//! exact Bloch path (frozen-density hooks, interpolation tables, synthetic
//! state functions) plug in through the [`OverlapModel`] trait.

use crate::bloch::{solve_bloch, BlochState, DEFAULT_R};
use crate::diff::{self, ValueWithError};
use crate::error::Result;
use crate::params::{LatticeDepth, QuasiMomentum};

/// Overlap value and its first `v`-derivatives with error estimates.
#[derive(Debug, Clone)]
pub struct OverlapDerivatives {
    /// Overlap `f ∈ [0, 1]` at the expansion point.
    pub f: f64,
    /// `d[k-1]` is the k-th derivative `∂ᵏf/∂vᵏ` with its error estimate.
    pub d: Vec<ValueWithError>,
}

impl OverlapDerivatives {
    /// k-th derivative (1-based); panics if beyond the computed order.
    pub fn dk(&self, k: usize) -> ValueWithError {
        self.d[k - 1]
    }
}

/// Source of overlap values along the depth axis at fixed quasi-momentum.
pub trait OverlapModel: Sync {
    /// Overlap at depth `v`.
    fn f(&self, v: f64) -> Result<f64>;

    /// Overlap plus derivatives up to `order ≤ 4` at depth `v`.
    ///
    /// The default computes finite differences of [`OverlapModel::f`] with
    /// Richardson refinement; models with exact derivatives override this.
    fn derivatives(&self, v: f64, order: usize) -> Result<OverlapDerivatives> {
        let f0 = self.f(v)?;
        let mut g = |x: f64| self.f(x);
        let d = diff::derivatives_up_to(&mut g, v, order)?;
        Ok(OverlapDerivatives { f: f0, d })
    }
}

/// Production overlap: the exact ground-band (or chosen-band) Bloch state.
#[derive(Debug, Clone, Copy)]
pub struct BlochOverlap {
    pub q: QuasiMomentum,
    pub band: usize,
    pub r0: usize,
}

impl BlochOverlap {
    pub fn new(q: QuasiMomentum, band: usize) -> Self {
        Self {
            q,
            band,
            r0: DEFAULT_R,
        }
    }

    /// Full Bloch state at depth `v`.
    pub fn state(&self, v: f64) -> Result<BlochState> {
        solve_bloch(self.q, LatticeDepth::new(v)?, self.band, self.r0)
    }
}

impl OverlapModel for BlochOverlap {
    fn f(&self, v: f64) -> Result<f64> {
        Ok(overlap_f(&self.state(v)?))
    }
}

/// Frozen-density overlap: `f` constant, all derivatives exactly zero.
///
/// With `ConstOverlap(0.5)` the cavity behaves linearly; used to isolate the
/// feedback nonlinearity in tests and examples.
#[derive(Debug, Clone, Copy)]
pub struct ConstOverlap(pub f64);

impl OverlapModel for ConstOverlap {
    fn f(&self, _v: f64) -> Result<f64> {
        Ok(self.0)
    }

    fn derivatives(&self, _v: f64, order: usize) -> Result<OverlapDerivatives> {
        Ok(OverlapDerivatives {
            f: self.0,
            d: vec![
                ValueWithError {
                    value: 0.0,
                    error: 0.0,
                };
                order
            ],
        })
    }
}

/// Taylor-polynomial overlap around a center point, with exact derivatives.
///
/// `f(v) = Σ_j coeffs[j]·(v − center)^j`. Lets tests plant state functions
/// with prescribed derivative towers (degenerate germs, synthetic butterfly
/// points) that the production machinery must then diagnose.
#[derive(Debug, Clone)]
pub struct PolynomialOverlap {
    pub center: f64,
    pub coeffs: Vec<f64>,
}

impl OverlapModel for PolynomialOverlap {
    fn f(&self, v: f64) -> Result<f64> {
        let t = v - self.center;
        Ok(self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c))
    }

    fn derivatives(&self, v: f64, order: usize) -> Result<OverlapDerivatives> {
        let t = v - self.center;
        let mut d = Vec::with_capacity(order);
        for k in 1..=order {
            let mut val = 0.0;
            for (j, &c) in self.coeffs.iter().enumerate().skip(k) {
                let mut w = c;
                for m in 0..k {
                    w *= (j - m) as f64;
                }
                val += w * t.powi((j - k) as i32);
            }
            d.push(ValueWithError {
                value: val,
                error: 1e-12 * val.abs().max(1.0),
            });
        }
        Ok(OverlapDerivatives { f: self.f(v)?, d })
    }
}

/// Overlap `f = ⟨cos²x⟩ = 1/2 + (1/2)·Σ_n a_n·a_{n+1}` of a Bloch state.
pub fn overlap_f(state: &BlochState) -> f64 {
    let r = state.r as i64;
    let cross: f64 = (-r..r).map(|n| state.a(n) * state.a(n + 1)).sum();
    0.5 + 0.5 * cross
}

/// Overlap derivatives along `v` at fixed `(q, band)` from the exact solver.
pub fn overlap_derivatives(
    q: QuasiMomentum,
    v: f64,
    band: usize,
    order: usize,
) -> Result<OverlapDerivatives> {
    BlochOverlap::new(q, band).derivatives(v, order)
}
