//! Second-variation stability of steady-state branches.
//!
//! Perturbing the condensate wavefunction in the plane-wave basis of the
//! underlying Bloch state, with the cavity field eliminated adiabatically,
//! turns the second variation of the grand-canonical energy per atom into a
//! finite symmetric matrix: Bloch-operator blocks on the diagonal plus a
//! rank-one coupling through the overlap, whose strength follows from the
//! curvature of the photon-number lineshape. A branch is energetically
//! stable when that matrix is positive on the physical subspace (global
//! phase and norm changes excluded) and dynamically stable when the
//! symplectic product with the matrix has an all-real spectrum.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::band::BandDiagram;
use crate::bloch::{build_hamiltonian, solve_bloch, BlochState};
use crate::error::{Error, Result};
use crate::params::{LatticeDepth, QuasiMomentum, SystemParams};

/// Default perturbation truncation for a state truncated at `r`, leaving
/// the margin that keeps truncation-edge modes out of the spectrum.
pub fn default_perturbation_truncation(r: usize) -> usize {
    r.saturating_sub(4)
}

/// The second-variation matrix of one branch.
///
/// Acts on stacked perturbation coefficients `(δψ, δψ*)`, dimension
/// `2(2J+1)`, with block structure `[[H − μ + 2ρW, 2ρW], [2ρW, H − μ + 2ρW]]`
/// where `W = w·wᵀ` couples every mode pair through the overlap
/// perturbation.
#[derive(Debug, Clone)]
pub struct StabilityMatrix {
    pub a: DMatrix<f64>,
    /// Lineshape-curvature coupling strength of the rank-one blocks.
    pub rho: f64,
    /// Perturbation truncation; modes run over `−J..=J`.
    pub j: usize,
}

impl StabilityMatrix {
    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }
}

/// Stability verdict of one branch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityReport {
    /// Index of the branch in the collection it was classified from.
    pub branch: usize,
    /// Smallest second-variation eigenvalue on the physical subspace.
    pub min_eig_a: f64,
    /// Largest imaginary part among the linearized-dynamics eigenvalues.
    pub max_abs_imag_sigma_a: f64,
    pub energetically_stable: bool,
    pub dynamically_stable: bool,
    /// Set when the verdicts disagree in the unexpected direction
    /// (energetically stable yet dynamically unstable).
    pub consistency_warning: bool,
    pub j: usize,
}

/// Assembles the second-variation matrix for a branch.
///
/// `state` must be the self-consistent Bloch state of the branch (its `v`
/// solving the steady-state condition at `params`); `j` is the perturbation
/// truncation and must stay below the state truncation to keep edge modes
/// from polluting the spectrum.
pub fn build_stability_matrix(
    state: &BlochState,
    params: &SystemParams,
    j: usize,
) -> Result<StabilityMatrix> {
    if j >= state.r {
        return Err(Error::TruncationOrder { j, r: state.r });
    }
    let q = QuasiMomentum::new(state.q)?;
    let v = LatticeDepth::new(state.v)?;
    let m = 2 * j + 1;
    let jj = j as i64;

    let mut f = 0.0;
    let rr = state.r as i64;
    for n in -rr..=rr {
        let a_n = state.a(n);
        f += a_n * a_n / 2.0 + a_n * state.a(n + 1) / 2.0;
    }
    let nu0 = params.collective_coupling();
    let d = (params.delta_c - nu0 * f) / params.kappa;
    let rho = params.eta * params.eta * params.n_atoms * params.u0 * params.u0 * d
        / (params.kappa.powi(3) * (1.0 + d * d) * (1.0 + d * d));

    let w = DVector::from_fn(m, |i, _| {
        let n = i as i64 - jj;
        state.a(n) / 2.0 + state.a(n - 1) / 4.0 + state.a(n + 1) / 4.0
    });

    let h = build_hamiltonian(q, v, j);
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    for row in 0..m {
        for col in 0..m {
            let coupling = 2.0 * rho * w[row] * w[col];
            let mut diag = h[(row, col)] + coupling;
            if row == col {
                diag -= state.mu;
            }
            a[(row, col)] = diag;
            a[(m + row, m + col)] = diag;
            a[(row, m + col)] = coupling;
            a[(m + row, col)] = coupling;
        }
    }
    Ok(StabilityMatrix { a, rho, j })
}

/// Orthonormal basis of the orthogonal complement of the given directions.
fn complement_basis(dim: usize, excluded: &[DVector<f64>]) -> DMatrix<f64> {
    let mut p = DMatrix::identity(dim, dim);
    for u in excluded {
        p -= u * u.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(p);
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut b = DMatrix::zeros(dim, keep.len());
    for (out, &i) in keep.iter().enumerate() {
        b.set_column(out, &eig.eigenvectors.column(i));
    }
    b
}

/// Classifies one branch from its Bloch state.
///
/// The energetic verdict diagonalizes the second variation on the
/// orthogonal complement of the global-phase direction `(a, −a)` and the
/// norm direction `(a, a)`, which are not physical perturbations at fixed
/// atom number. The dynamic verdict takes the spectrum of the symplectic
/// product and demands it be real. Both use the tolerance
/// `1e-8 · ‖A‖`.
pub fn classify_branch(
    branch: usize,
    state: &BlochState,
    params: &SystemParams,
    j: usize,
) -> Result<StabilityReport> {
    let sm = build_stability_matrix(state, params, j)?;
    let m = 2 * j + 1;
    let dim = 2 * m;
    let jj = j as i64;

    let eig_full = nalgebra::SymmetricEigen::new(sm.a.clone());
    let a_norm = eig_full
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let tol = 1e-8 * a_norm.max(f64::MIN_POSITIVE);

    let a_trunc = DVector::from_fn(m, |i, _| state.a(i as i64 - jj));
    let scale = (2.0 * a_trunc.norm_squared()).sqrt();
    let mut gauge = DVector::zeros(dim);
    let mut norm_dir = DVector::zeros(dim);
    for i in 0..m {
        gauge[i] = a_trunc[i] / scale;
        gauge[m + i] = -a_trunc[i] / scale;
        norm_dir[i] = a_trunc[i] / scale;
        norm_dir[m + i] = a_trunc[i] / scale;
    }
    let b = complement_basis(dim, &[gauge, norm_dir]);
    let reduced = b.transpose() * &sm.a * &b;
    let eig_reduced = nalgebra::SymmetricEigen::new(reduced);
    let min_eig_a = eig_reduced
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &l| acc.min(l));

    let mut sigma_z_a = sm.a.clone();
    for row in m..dim {
        for col in 0..dim {
            sigma_z_a[(row, col)] = -sigma_z_a[(row, col)];
        }
    }
    let spectrum = symplectic_spectrum(sigma_z_a)?;
    let max_abs_imag_sigma_a = spectrum.iter().fold(0.0f64, |acc, l| acc.max(l.im.abs()));

    let energetically_stable = min_eig_a > -tol;
    let dynamically_stable = max_abs_imag_sigma_a < tol;
    Ok(StabilityReport {
        branch,
        min_eig_a,
        max_abs_imag_sigma_a,
        energetically_stable,
        dynamically_stable,
        consistency_warning: energetically_stable && !dynamically_stable,
        j,
    })
}

/// Eigenvalues of the (non-symmetric) linearized-dynamics matrix.
pub fn symplectic_spectrum(sigma_z_a: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = sigma_z_a
        .try_schur(1e-12, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Classifies every point of a band diagram, in point order.
///
/// Each point's Bloch state is re-solved at truncation `j + 4` so the
/// perturbation basis always fits strictly inside the state basis.
pub fn classify_band(diagram: &BandDiagram, j: usize) -> Result<Vec<StabilityReport>> {
    diagram
        .points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            let state = solve_bloch(
                QuasiMomentum::new(pt.q)?,
                LatticeDepth::new(pt.v)?,
                diagram.band,
                j + 4,
            )?;
            classify_branch(i, &state, &diagram.params, j)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon::find_branches;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qm(q: f64) -> QuasiMomentum {
        QuasiMomentum::new(q).unwrap()
    }

    fn loop_regime_params() -> SystemParams {
        SystemParams::new(350.0, 1.0e4, 1.0, 2.8 * 325.0, 3140.0).unwrap()
    }

    fn branch_states(params: &SystemParams, q: f64) -> Vec<BlochState> {
        let set = find_branches(qm(q), params, 0).unwrap();
        set.branches
            .iter()
            .map(|b| solve_bloch(qm(q), LatticeDepth::new(b.v).unwrap(), 0, 16).unwrap())
            .collect()
    }

    #[test]
    fn matrix_is_symmetric_and_rejects_oversized_truncation() {
        let params = loop_regime_params();
        let states = branch_states(&params, 0.0);
        let sm = build_stability_matrix(&states[0], &params, 12).unwrap();
        assert_eq!(sm.dimension(), 2 * 25);
        let asym = (&sm.a - sm.a.transpose()).abs().max();
        assert!(asym <= 1e-12 * sm.a.abs().max());
        match build_stability_matrix(&states[0], &params, states[0].r) {
            Err(Error::TruncationOrder { j, r }) => {
                assert_eq!(j, states[0].r);
                assert_eq!(r, states[0].r);
            }
            other => panic!("expected truncation-order error, got {other:?}"),
        }
    }

    #[test]
    fn undriven_cavity_reduces_to_the_free_spectrum() {
        let params = SystemParams::new(350.0, 1.0e4, 1.0, 0.0, 1500.0).unwrap();
        let state = solve_bloch(qm(0.3), LatticeDepth::new(0.0).unwrap(), 0, 16).unwrap();
        let sm = build_stability_matrix(&state, &params, 12).unwrap();
        assert_eq!(sm.rho, 0.0);
        let eig = nalgebra::SymmetricEigen::new(sm.a.clone());
        let min_abs = eig
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &l| acc.min(l.abs()));
        assert!(min_abs < 1e-10, "gauge mode shifted: {min_abs}");
        let report = classify_branch(0, &state, &params, 12).unwrap();
        assert!(report.energetically_stable);
        assert!(report.dynamically_stable);
    }

    /// Grand-canonical energy per atom for arbitrary complex coefficients,
    /// the tail beyond the perturbation truncation held at the base state.
    fn grand_potential(
        coeffs: &[Complex<f64>],
        state: &BlochState,
        params: &SystemParams,
        j: i64,
    ) -> f64 {
        let rr = state.r as i64 + 1;
        let at = |n: i64| -> Complex<f64> {
            if n.abs() <= j {
                coeffs[(n + j) as usize]
            } else {
                Complex::new(state.a(n), 0.0)
            }
        };
        let mut kinetic = 0.0;
        let mut norm = 0.0;
        let mut f = 0.0;
        for n in -rr..=rr {
            let c = at(n);
            let mag = c.norm_sqr();
            kinetic += (state.q + 2.0 * n as f64).powi(2) * mag;
            norm += mag;
            f += mag / 2.0 + (c.conj() * at(n + 1)).re / 2.0;
        }
        let nu0 = params.collective_coupling();
        let d = (params.delta_c - nu0 * f) / params.kappa;
        kinetic
            - params.eta * params.eta / (params.n_atoms * params.kappa) * d.atan()
            - state.mu * norm
    }

    #[test]
    fn matrix_matches_the_numerical_hessian() {
        let params = loop_regime_params();
        let states = branch_states(&params, 0.0);
        let state = &states[1];
        let j = 12usize;
        let sm = build_stability_matrix(state, &params, j).unwrap();
        let m = 2 * j + 1;
        let jj = j as i64;
        let a_norm = nalgebra::SymmetricEigen::new(sm.a.clone())
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &l| acc.max(l.abs()));

        let base: Vec<Complex<f64>> = (-jj..=jj).map(|n| Complex::new(state.a(n), 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0A11);
        for _ in 0..20 {
            let u: Vec<Complex<f64>> = (0..m)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut psi = DVector::<f64>::zeros(2 * m);
            for i in 0..m {
                psi[i] = u[i].re;
                psi[m + i] = u[i].im;
            }
            // Quadratic form in the (δψ, δψ*) pairing for a complex
            // direction u: Ψ†AΨ with Ψ = (u, u*).
            let mut quad = 0.0;
            for row in 0..m {
                for col in 0..m {
                    let x = sm.a[(row, col)];
                    let y = sm.a[(row, m + col)];
                    quad += 2.0 * x * (u[row].conj() * u[col]).re + 2.0 * y * (u[row] * u[col]).re;
                }
            }
            let eps = 1e-3;
            let at_eps = |e: f64| {
                let coeffs: Vec<Complex<f64>> = base
                    .iter()
                    .zip(&u)
                    .map(|(b, du)| b + Complex::new(e, 0.0) * du)
                    .collect();
                grand_potential(&coeffs, state, &params, jj)
            };
            let fd = (-at_eps(2.0 * eps) + 16.0 * at_eps(eps) - 30.0 * at_eps(0.0)
                + 16.0 * at_eps(-eps)
                - at_eps(-2.0 * eps))
                / (12.0 * eps * eps);
            let scale = quad.abs().max(a_norm);
            assert!(
                (fd - quad).abs() <= 1e-6 * scale,
                "hessian mismatch: fd {fd} vs quadratic form {quad}"
            );
        }
    }

    #[test]
    fn loop_regime_has_one_unstable_branch_at_band_center() {
        let params = loop_regime_params();
        let states = branch_states(&params, 0.0);
        assert_eq!(states.len(), 3);
        let reports: Vec<StabilityReport> = states
            .iter()
            .enumerate()
            .map(|(i, s)| classify_branch(i, s, &params, 12).unwrap())
            .collect();
        let middle = &reports[1];
        assert!(!middle.energetically_stable);
        assert!(!middle.dynamically_stable);
        assert!(
            (middle.min_eig_a + 9.869).abs() < 0.05 * 9.869,
            "min eig {}",
            middle.min_eig_a
        );
        assert!(
            (middle.max_abs_imag_sigma_a - 6.533).abs() < 0.05 * 6.533,
            "max im {}",
            middle.max_abs_imag_sigma_a
        );
        for (report, expect) in [(&reports[0], 3.212), (&reports[2], 4.395)] {
            assert!(report.energetically_stable);
            assert!(report.dynamically_stable);
            assert!(
                (report.min_eig_a - expect).abs() < 0.05 * expect,
                "min eig {} vs {expect}",
                report.min_eig_a
            );
            assert!(!report.consistency_warning);
        }
    }

    #[test]
    fn folded_lineshape_middle_branch_is_unstable() {
        let params = SystemParams::new(350.0, 1.0e4, 1.0, 1.0, 1500.0).unwrap();
        let (lo, hi) = crate::bistability::eta_window(qm(0.0), 1500.0, &params)
            .unwrap()
            .unwrap();
        let params = SystemParams {
            eta: 0.5 * (lo + hi),
            ..params
        };
        let states = branch_states(&params, 0.0);
        assert_eq!(states.len(), 3);
        let reports: Vec<StabilityReport> = states
            .iter()
            .enumerate()
            .map(|(i, s)| classify_branch(i, s, &params, 12).unwrap())
            .collect();
        assert!(!reports[1].energetically_stable);
        assert!(reports[0].energetically_stable);
        assert!(reports[2].energetically_stable);
    }

    #[test]
    fn verdicts_survive_a_coarser_truncation() {
        let params = loop_regime_params();
        let states = branch_states(&params, 0.0);
        for (i, state) in states.iter().enumerate() {
            let fine = classify_branch(i, state, &params, 12).unwrap();
            let coarse = classify_branch(i, state, &params, 10).unwrap();
            assert_eq!(fine.energetically_stable, coarse.energetically_stable);
            assert_eq!(fine.dynamically_stable, coarse.dynamically_stable);
        }
    }

    #[test]
    fn dynamics_spectrum_pairs_up_under_negated_conjugation() {
        let params = loop_regime_params();
        let states = branch_states(&params, 0.0);
        let sm = build_stability_matrix(&states[1], &params, 12).unwrap();
        let m = 2 * 12 + 1;
        let mut sigma_z_a = sm.a.clone();
        for row in m..2 * m {
            for col in 0..2 * m {
                sigma_z_a[(row, col)] = -sigma_z_a[(row, col)];
            }
        }
        let spectrum = symplectic_spectrum(sigma_z_a).unwrap();
        let scale = spectrum.iter().fold(0.0f64, |acc, l| acc.max(l.norm()));
        for lambda in &spectrum {
            let partner = Complex::new(-lambda.re, lambda.im);
            let found = spectrum
                .iter()
                .any(|other| (other - partner).norm() <= 1e-8 * scale);
            assert!(found, "no partner for {lambda}");
        }
    }

    #[test]
    fn band_diagram_points_classify_in_order() {
        let params = loop_regime_params();
        let q_grid: Vec<f64> = (0..5).map(|i| -0.2 + 0.1 * i as f64).collect();
        let diagram = crate::band::band_sweep(&params, 0, &q_grid).unwrap();
        let reports = classify_band(&diagram, 12).unwrap();
        assert_eq!(reports.len(), diagram.points.len());
        for (i, report) in reports.iter().enumerate() {
            assert_eq!(report.branch, i);
            assert_eq!(report.j, 12);
        }
        let any_unstable = reports.iter().any(|r| !r.energetically_stable);
        assert!(any_unstable);
    }
}
