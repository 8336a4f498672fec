//! System parameters and shared domain scalars, all in recoil units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit conventions shared by every module interface.
///
/// Energies are measured in the recoil energy `E_R = ħ²k_c²/2M`, frequencies
/// in the recoil frequency `ω_R = E_R/ħ`, lengths in the inverse cavity wave
/// number `1/k_c`, and time in `ħ/E_R`. With `ħ = 1` understood, energies and
/// frequencies are numerically interchangeable. No interface accepts or
/// returns SI quantities.
pub struct UnitSystem;

impl UnitSystem {
    /// Energy unit label.
    pub const ENERGY: &'static str = "E_R";
    /// Frequency unit label.
    pub const FREQUENCY: &'static str = "omega_R";
    /// Length unit label.
    pub const LENGTH: &'static str = "1/k_c";
    /// Time unit label.
    pub const TIME: &'static str = "hbar/E_R";
}

/// Cavity and atom constants of one experimental configuration.
///
/// `kappa` is the cavity field decay rate, `n_atoms` the atom number `N`,
/// `u0` the light shift per photon (positive for blue atom-pump detuning,
/// negative for red), `eta` the pump strength, and `delta_c` the pump-cavity
/// detuning. All frequencies are in `ω_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub kappa: f64,
    pub n_atoms: f64,
    pub u0: f64,
    pub eta: f64,
    pub delta_c: f64,
}

impl SystemParams {
    /// Builds a parameter set, rejecting any invariant violation.
    pub fn new(kappa: f64, n_atoms: f64, u0: f64, eta: f64, delta_c: f64) -> Result<Self> {
        let p = Self {
            kappa,
            n_atoms,
            u0,
            eta,
            delta_c,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks every field invariant, collecting all violations.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.kappa <= 0.0 || !self.kappa.is_finite() {
            errs.push("kappa must be positive".to_string());
        }
        if self.n_atoms < 1.0 || !self.n_atoms.is_finite() {
            errs.push("n_atoms must be at least 1".to_string());
        }
        if self.u0 == 0.0 || !self.u0.is_finite() {
            errs.push("u0 must be nonzero".to_string());
        }
        if self.eta < 0.0 || !self.eta.is_finite() {
            errs.push("eta must be non-negative".to_string());
        }
        if !self.delta_c.is_finite() {
            errs.push("delta_c must be finite".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Largest steady-state photon number the cavity can hold, `η²/κ²`.
    pub fn n_max(&self) -> f64 {
        let r = self.eta / self.kappa;
        r * r
    }

    /// Collective coupling `N·U0` in `ω_R`.
    pub fn collective_coupling(&self) -> f64 {
        self.n_atoms * self.u0
    }
}

/// Bloch quasi-momentum, restricted to the first Brillouin zone `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QuasiMomentum(f64);

impl QuasiMomentum {
    /// Validates `-1 ≤ q ≤ 1`.
    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && (-1.0..=1.0).contains(&q) {
            Ok(Self(q))
        } else {
            Err(Error::InvalidParams(vec![format!(
                "quasi-momentum {q} outside [-1, 1]"
            )]))
        }
    }

    /// Raw value.
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Lattice depth `v ≡ U0·n_ph` in `E_R`; signed, with `sign(v) = sign(U0)`
/// whenever photons are present.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LatticeDepth(f64);

impl LatticeDepth {
    /// Any finite depth is admissible on its own.
    pub fn new(v: f64) -> Result<Self> {
        if v.is_finite() {
            Ok(Self(v))
        } else {
            Err(Error::InvalidParams(vec![format!(
                "lattice depth {v} is not finite"
            )]))
        }
    }

    /// Raw value in `E_R`.
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Inverts `v ≡ U0·n_ph` for the photon number.
///
/// Fails when the signs of `v` and `u0` disagree, which would imply a
/// negative photon number.
pub fn n_ph_from_depth(v: LatticeDepth, params: &SystemParams) -> Result<f64> {
    params.validate()?;
    let n = v.value() / params.u0;
    if n < 0.0 {
        return Err(Error::InconsistentSign {
            v: v.value(),
            u0: params.u0,
        });
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1a_params() -> SystemParams {
        SystemParams::new(350.0, 1.0e4, 1.0, 909.9, 1350.0).unwrap()
    }

    #[test]
    fn reference_params_validate() {
        let p = fig1a_params();
        assert!(p.validate().is_ok());
        assert!((p.n_max() - (909.9f64 / 350.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn zero_kappa_rejected() {
        let err = SystemParams::new(0.0, 1.0e4, 1.0, 909.9, 1350.0).unwrap_err();
        match err {
            Error::InvalidParams(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("kappa")));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn zero_u0_rejected() {
        let err = SystemParams::new(350.0, 1.0e4, 0.0, 909.9, 1350.0).unwrap_err();
        match err {
            Error::InvalidParams(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("u0")));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn multiple_violations_all_reported() {
        let err = SystemParams::new(-1.0, 0.0, 0.0, -2.0, f64::NAN).unwrap_err();
        match err {
            Error::InvalidParams(msgs) => assert_eq!(msgs.len(), 5),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn depth_to_photon_number_cases() {
        let mut p = fig1a_params();
        p.u0 = 1.0;
        assert_eq!(
            n_ph_from_depth(LatticeDepth::new(0.0).unwrap(), &p).unwrap(),
            0.0
        );
        assert_eq!(
            n_ph_from_depth(LatticeDepth::new(4.13).unwrap(), &p).unwrap(),
            4.13
        );
        p.u0 = -1.0;
        assert_eq!(
            n_ph_from_depth(LatticeDepth::new(-7.5).unwrap(), &p).unwrap(),
            7.5
        );
        assert!(n_ph_from_depth(LatticeDepth::new(7.5).unwrap(), &p).is_err());
    }

    #[test]
    fn quasi_momentum_bounds() {
        assert!(QuasiMomentum::new(1.0).is_ok());
        assert!(QuasiMomentum::new(-1.0).is_ok());
        assert!(QuasiMomentum::new(1.0001).is_err());
        assert!(QuasiMomentum::new(f64::NAN).is_err());
    }

    proptest! {
        // Round trip: depth built from a photon number inverts back exactly
        // (relative 1e-14) over the full physical range.
        #[test]
        fn depth_round_trip(n in 0.0..1.0e6f64, u0 in prop_oneof![0.01..10.0f64, -10.0..-0.01f64]) {
            let p = SystemParams::new(350.0, 1.0e4, u0, 909.9, 1350.0).unwrap();
            let v = LatticeDepth::new(u0 * n).unwrap();
            let back = n_ph_from_depth(v, &p).unwrap();
            prop_assert!((back - n).abs() <= 1e-14 * n.max(1.0));
        }
    }
}
