//! Plane-wave solution of the band eigenproblem at fixed lattice depth.
//!
//! The single-particle Bloch problem for the intracavity lattice `v·cos²x`
//! reduces, in the plane-wave basis `e^{i(q+2n)x}`, to a real symmetric
//! tridiagonal eigenproblem. The ground-band eigenvector also carries the
//! atom-light overlap `f(v, q) = ⟨cos²x⟩`, computed in [`crate::overlap`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::{LatticeDepth, QuasiMomentum};

/// Default plane-wave truncation: coefficients `a_n` for `n = -R..R`.
pub const DEFAULT_R: usize = 16;

/// Hard cap on truncation growth before reporting non-convergence.
pub const MAX_R: usize = 256;

/// Tail magnitude below which doubling the truncation provably moves the
/// eigenvalue by far less than 1e-10.
const TAIL_TOL: f64 = 1e-9;

/// One converged Bloch eigenstate at fixed `(q, v)`.
///
/// Coefficients are real, normalized to `Σ a_n² = 1`, indexed by plane-wave
/// order `n = -r..=r`, and sign-fixed so the largest-magnitude coefficient is
/// positive (ties broken by the lowest index).
#[derive(Debug, Clone)]
pub struct BlochState {
    pub q: f64,
    pub band: usize,
    pub v: f64,
    coeffs: Vec<f64>,
    pub mu: f64,
    pub r: usize,
}

impl BlochState {
    /// Builds a state from raw coefficients, restoring the normalization and
    /// sign conventions.
    ///
    /// # Panics
    /// If `coeffs.len() != 2r + 1` or the norm is zero.
    pub fn from_parts(q: f64, band: usize, v: f64, coeffs: Vec<f64>, mu: f64, r: usize) -> Self {
        assert_eq!(coeffs.len(), 2 * r + 1, "coefficient count must be 2r + 1");
        let norm = coeffs.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm > 0.0, "coefficients must not all vanish");
        Self {
            q,
            band,
            v,
            coeffs: normalize_and_fix_sign(coeffs),
            mu,
            r,
        }
    }

    /// Coefficient `a_n`; zero outside the truncation window.
    pub fn a(&self, n: i64) -> f64 {
        let r = self.r as i64;
        if n < -r || n > r {
            0.0
        } else {
            self.coeffs[(n + r) as usize]
        }
    }

    /// All coefficients in index order `n = -r..=r`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Kinetic energy per atom `Σ (q+2n)² a_n²` in `E_R`.
    pub fn kinetic(&self) -> f64 {
        let r = self.r as i64;
        (-r..=r)
            .map(|n| {
                let k = self.q + 2.0 * n as f64;
                k * k * self.a(n) * self.a(n)
            })
            .sum()
    }
}

/// Assembles the symmetric Bloch Hamiltonian in the plane-wave basis.
///
/// Diagonal entries are `(q+2n)² + v/2`, first off-diagonals `v/4`, from
/// `cos²x = 1/2 + (e^{2ix} + e^{-2ix})/4`. Row/column `i` corresponds to
/// `n = i - R`.
pub fn build_hamiltonian(q: QuasiMomentum, v: LatticeDepth, r: usize) -> DMatrix<f64> {
    assert!(r >= 1, "truncation must be at least 1");
    let q = q.value();
    let v = v.value();
    let dim = 2 * r + 1;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let n = i as f64 - r as f64;
        let k = q + 2.0 * n;
        h[(i, i)] = k * k + 0.5 * v;
        if i + 1 < dim {
            h[(i, i + 1)] = 0.25 * v;
            h[(i + 1, i)] = 0.25 * v;
        }
    }
    h
}

/// Solves for the `(band+1)`-th lowest eigenpair at fixed `(q, v)`.
///
/// Starts at truncation `r0` (use [`DEFAULT_R`]) and doubles it until the
/// coefficient tail is small enough that a further doubling would change
/// `μ` by less than 1e-10; fails with [`Error::Truncation`] past [`MAX_R`].
pub fn solve_bloch(
    q: QuasiMomentum,
    v: LatticeDepth,
    band: usize,
    r0: usize,
) -> Result<BlochState> {
    let mut r = r0.max(1).max(min_truncation_for_band(band));
    if v.value() == 0.0 {
        return Ok(free_particle_state(q.value(), band, r));
    }
    let mut last_mu = f64::INFINITY;
    while r <= MAX_R {
        let state = solve_at_fixed_r(q.value(), v.value(), band, r);
        let tail = state
            .a(-(r as i64))
            .abs()
            .max(state.a(r as i64).abs())
            .max(state.a(-(r as i64) + 1).abs())
            .max(state.a(r as i64 - 1).abs());
        if tail < TAIL_TOL {
            return Ok(state);
        }
        last_mu = state.mu;
        r *= 2;
    }
    let state = solve_at_fixed_r(q.value(), v.value(), band, MAX_R);
    let delta_mu = (state.mu - last_mu).abs();
    if delta_mu < 1e-10 {
        return Ok(state);
    }
    Err(Error::Truncation {
        delta_mu,
        r_max: MAX_R,
    })
}

fn min_truncation_for_band(band: usize) -> usize {
    band / 2 + 2
}

fn solve_at_fixed_r(q: f64, v: f64, band: usize, r: usize) -> BlochState {
    let h = build_hamiltonian(
        QuasiMomentum::new(q).expect("validated by caller"),
        LatticeDepth::new(v).expect("validated by caller"),
        r,
    );
    let eig = h.symmetric_eigen();
    let dim = 2 * r + 1;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let idx = order[band.min(dim - 1)];
    let mu = eig.eigenvalues[idx];
    let col = eig.eigenvectors.column(idx);
    let coeffs = normalize_and_fix_sign(col.iter().copied().collect());
    BlochState {
        q,
        band,
        v,
        coeffs,
        mu,
        r,
    }
}

/// Exact eigenstate of the free particle (`v = 0`): a single plane wave.
///
/// Bands are ranked by `(q+2n)²` with ties (band edges and zone center)
/// broken by ascending `n`, so the undriven cavity always sees a homogeneous
/// density and an overlap of exactly 1/2.
fn free_particle_state(q: f64, band: usize, r: usize) -> BlochState {
    let r_i = r as i64;
    let mut orders: Vec<i64> = (-r_i..=r_i).collect();
    orders.sort_by(|&n, &m| {
        let en = (q + 2.0 * n as f64).powi(2);
        let em = (q + 2.0 * m as f64).powi(2);
        en.total_cmp(&em).then(n.cmp(&m))
    });
    let n_sel = orders[band.min(orders.len() - 1)];
    let mut coeffs = vec![0.0; 2 * r + 1];
    coeffs[(n_sel + r_i) as usize] = 1.0;
    let k = q + 2.0 * n_sel as f64;
    BlochState {
        q,
        band,
        v: 0.0,
        coeffs,
        mu: k * k,
        r,
    }
}

fn normalize_and_fix_sign(mut coeffs: Vec<f64>) -> Vec<f64> {
    let norm: f64 = coeffs.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in &mut coeffs {
        *a /= norm;
    }
    let mut best = 0;
    for (i, a) in coeffs.iter().enumerate() {
        if a.abs() > coeffs[best].abs() + 1e-14 {
            best = i;
        }
    }
    if coeffs[best] < 0.0 {
        for a in &mut coeffs {
            *a = -*a;
        }
    }
    coeffs
}

/// Residual `‖H·a − μ·a‖` of a state against its own Hamiltonian.
pub fn eigen_residual(state: &BlochState) -> f64 {
    let h = build_hamiltonian(
        QuasiMomentum::new(state.q).expect("state q is valid"),
        LatticeDepth::new(state.v).expect("state v is valid"),
        state.r,
    );
    let a = DVector::from_column_slice(state.coeffs());
    (&h * &a - state.mu * &a).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn qm(q: f64) -> QuasiMomentum {
        QuasiMomentum::new(q).unwrap()
    }

    fn ld(v: f64) -> LatticeDepth {
        LatticeDepth::new(v).unwrap()
    }

    #[test]
    fn hamiltonian_free_particle_is_diagonal() {
        let h = build_hamiltonian(qm(0.3), ld(0.0), 4);
        for i in 0..9 {
            for j in 0..9 {
                if i == j {
                    let n = i as f64 - 4.0;
                    assert_abs_diff_eq!(h[(i, i)], (0.3 + 2.0 * n).powi(2), epsilon = 1e-15);
                } else {
                    assert_eq!(h[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_hand_expanded_3x3() {
        let h = build_hamiltonian(qm(0.0), ld(4.0), 1);
        assert_abs_diff_eq!(h[(0, 0)], 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 1)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(2, 2)], 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 2)], 1.0, epsilon = 1e-15);
        assert_eq!(h[(0, 2)], 0.0);
    }

    #[test]
    fn hamiltonian_symmetric() {
        let h = build_hamiltonian(qm(0.7), ld(3.3), 6);
        assert!((&h - h.transpose()).norm() == 0.0);
    }

    #[test]
    fn free_particle_ground_state() {
        let s = solve_bloch(qm(0.3), ld(0.0), 0, DEFAULT_R).unwrap();
        assert_abs_diff_eq!(s.mu, 0.09, epsilon = 1e-14);
        assert_abs_diff_eq!(s.a(0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn shallow_lattice_matches_second_order_perturbation() {
        // Non-degenerate perturbation theory at q = 0: μ = v/2 − v²/32 + O(v³).
        for &v in &[1e-3, 1e-2, 0.1] {
            let s = solve_bloch(qm(0.0), ld(v), 0, DEFAULT_R).unwrap();
            let expect = v / 2.0 - v * v / 32.0;
            assert!(
                (s.mu - expect).abs() < 2e-4 * v.powi(3).max(1e-12),
                "v={v}: mu={} expect={expect}",
                s.mu
            );
        }
    }

    #[test]
    fn band_edge_matches_degenerate_perturbation() {
        // Degenerate pair at q = 1 splits linearly: μ = 1 + v/2 ∓ v/4 = 1 + v/4.
        for &v in &[1e-4, 1e-3, 1e-2] {
            let s = solve_bloch(qm(1.0), ld(v), 0, DEFAULT_R).unwrap();
            let expect = 1.0 + v / 4.0;
            assert!(
                (s.mu - expect).abs() < 0.2 * v * v,
                "v={v}: mu={} expect={expect}",
                s.mu
            );
        }
    }

    #[test]
    fn eigen_residual_small() {
        for &(q, v) in &[(0.0, 5.0), (0.5, 12.0), (1.0, 2.0), (-0.3, 40.0)] {
            let s = solve_bloch(qm(q), ld(v), 0, DEFAULT_R).unwrap();
            assert!(
                eigen_residual(&s) <= 1e-10 * s.mu.abs().max(1.0),
                "(q={q}, v={v}): residual {}",
                eigen_residual(&s)
            );
        }
    }

    #[test]
    fn doubling_truncation_leaves_mu_unchanged() {
        for &(q, v) in &[(0.0, 5.0), (0.9, 25.0), (1.0, 0.5)] {
            let s = solve_bloch(qm(q), ld(v), 0, DEFAULT_R).unwrap();
            let s2 = solve_at_fixed_r(q, v, 0, 2 * s.r);
            assert!(
                (s.mu - s2.mu).abs() < 1e-10,
                "(q={q}, v={v}): Δμ = {}",
                (s.mu - s2.mu).abs()
            );
        }
    }

    #[test]
    fn bands_are_orthogonal() {
        let s0 = solve_bloch(qm(0.4), ld(8.0), 0, DEFAULT_R).unwrap();
        let s1 = solve_bloch(qm(0.4), ld(8.0), 1, DEFAULT_R).unwrap();
        let dot: f64 = s0
            .coeffs()
            .iter()
            .zip(s1.coeffs())
            .map(|(a, b)| a * b)
            .sum();
        assert!(dot.abs() < 1e-12, "overlap {dot}");
    }

    #[test]
    fn negative_depth_ground_state_localizes_at_cosine_wells() {
        // v < 0 turns cos²x maxima into potential wells; the ground state then
        // has a symmetric (cosine-like) coefficient pattern with all-equal signs.
        let s = solve_bloch(qm(0.0), ld(-8.0), 0, DEFAULT_R).unwrap();
        assert!(s.a(0) > 0.5);
        assert!(s.a(1) * s.a(-1) > 0.0);
        assert!(s.a(1) > 0.0);
    }

    proptest! {
        // Normalization and residual invariants over a broad random regime.
        #[test]
        fn solve_invariants(q in -1.0..1.0f64, v in -40.0..40.0f64, band in 0usize..2) {
            let s = solve_bloch(qm(q), ld(v), band, DEFAULT_R).unwrap();
            let norm: f64 = s.coeffs().iter().map(|a| a * a).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            prop_assert!(eigen_residual(&s) <= 1e-10 * s.mu.abs().max(1.0));
            // Parity in q.
            let sm = solve_bloch(qm(-q), ld(v), band, DEFAULT_R).unwrap();
            prop_assert!((s.mu - sm.mu).abs() < 1e-10 * s.mu.abs().max(1.0));
        }
    }
}
