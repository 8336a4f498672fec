//! Cusp and swallowtail singularities of the steady-state equation.
//!
//! In the shallow-lattice limit the state equation reduces to a cubic whose
//! degenerate roots trace the cusp of the fold curves. At quasi-momenta above
//! a universal threshold the full state function additionally develops
//! swallowtail points where four derivative conditions hold at once; this
//! module scans for them in scaled variables, locates the threshold, checks
//! that the singularity ladder stops there (no butterfly), and verifies the
//! transversality of the two control directions against the quartic germ.

use rayon::prelude::*;
use serde::Serialize;

use crate::diff::{derivative, ValueWithError};
use crate::error::{Error, Result};
use crate::overlap::{BlochOverlap, OverlapModel};
use crate::params::{QuasiMomentum, SystemParams};

/// Number of points in the logarithmic depth grid of [`swallowtail_scan`].
const SWALLOWTAIL_GRID: usize = 2000;

/// Depth range of the swallowtail scan.
const SWALLOWTAIL_SPAN: (f64, f64) = (1e-3, 50.0);

/// Shallow-limit cubic reduction of the state equation at band center.
///
/// The state equation with a linearized overlap is a cubic in the depth,
/// `v³ + b1·v² + b2·v + b3 = 0`; removing the quadratic term with the shift
/// `t = v − s` puts it into the canonical form `t³ + c2·t + c1 = 0` whose
/// degeneracies classify the fold structure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CuspCoordinates {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    /// Canonical constant control (the depressed cubic's constant term).
    pub c1: f64,
    /// Canonical linear control (the depressed cubic's linear coefficient).
    pub c2: f64,
    /// Origin of the shifted state variable, `s = −b1/3`; the triple-root
    /// depth when `c1 = c2 = 0`.
    pub s: f64,
}

/// Reduces the state equation to cusp form at band center.
///
/// Uses the weak-lattice overlap slope `−1/16`, so the result is meaningful
/// only in the shallow regime; the caller is responsible for staying there.
/// All frequencies are taken in recoil units and the depth in recoil
/// energies.
pub fn cusp_reduce_shallow(params: &SystemParams) -> CuspCoordinates {
    let nu0 = params.collective_coupling();
    let delta = params.delta_c - nu0 / 2.0;
    let b1 = 32.0 * delta / nu0;
    let b2 = 256.0 * (params.kappa * params.kappa + delta * delta) / (nu0 * nu0);
    let b3 = -256.0 * params.eta * params.eta * params.u0 / (nu0 * nu0);
    let c2 = b2 - b1 * b1 / 3.0;
    let c1 = b3 - b1 * b2 / 3.0 + 2.0 * b1 * b1 * b1 / 27.0;
    CuspCoordinates {
        b1,
        b2,
        b3,
        c1,
        c2,
        s: -b1 / 3.0,
    }
}

impl CuspCoordinates {
    /// Real roots of the cubic, ascending.
    pub fn cubic_roots(&self) -> Vec<f64> {
        let (p, q) = (self.c2, self.c1);
        let shift = self.s;
        let disc = q * q / 4.0 + p * p * p / 27.0;
        let mut roots = if disc > 0.0 {
            let sq = disc.sqrt();
            let u = (-q / 2.0 + sq).cbrt();
            let w = (-q / 2.0 - sq).cbrt();
            vec![u + w + shift]
        } else if p == 0.0 {
            vec![shift]
        } else {
            let r = (-p / 3.0).sqrt();
            let phi = (3.0 * q / (2.0 * p * r)).clamp(-1.0, 1.0).acos();
            (0..3)
                .map(|k| {
                    2.0 * r * (phi / 3.0 - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos()
                        + shift
                })
                .collect()
        };
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * a.abs().max(1.0));
        roots
    }

    /// Whether the canonical controls put the cubic in its three-real-root
    /// region, `c1² < −4·c2³/27`.
    pub fn has_three_real_roots(&self) -> bool {
        self.c1 * self.c1 < -4.0 * self.c2 * self.c2 * self.c2 / 27.0
    }
}

/// A point where the state equation and its first three depth derivatives
/// vanish simultaneously, in scaled control variables.
///
/// The scaled controls are `delta_over_nu0 = Δc/(N·U0)` and
/// `inv_nu0_sq = κ²/(N·U0)²`; they fix the singularity independently of the
/// atom number and loss rate. The pump `eta` is stored in units of `κ` for
/// the atom number the scan was run with, and `f` is the overlap at the
/// point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SwallowtailPoint {
    pub q: f64,
    pub v: f64,
    pub delta_over_nu0: f64,
    pub inv_nu0_sq: f64,
    pub eta: f64,
    pub f: f64,
    /// The combined third-derivative condition at the point; consistent
    /// with zero at a genuine swallowtail.
    pub residual3: ValueWithError,
    /// Mismatch between the fourth-derivative degeneracy condition and the
    /// second; a value beyond its error excludes a butterfly point.
    pub residual4: ValueWithError,
    /// Set when the derivative errors are too large to resolve the
    /// degeneracy conditions at this point.
    pub inconclusive: bool,
}

impl SwallowtailPoint {
    /// Physical parameters realizing the point for a given loss rate and
    /// atom number. Returns the parameter set and the lattice depth.
    pub fn realize(&self, kappa: f64, n_atoms: f64) -> Result<(SystemParams, f64)> {
        let nu0 = kappa / self.inv_nu0_sq.sqrt();
        let u0 = nu0 / n_atoms;
        let d = nu0 * (self.delta_over_nu0 - self.f);
        let eta = (self.v * (kappa * kappa + d * d) / u0).sqrt();
        let params = SystemParams::new(kappa, n_atoms, u0, eta, self.delta_over_nu0 * nu0)?;
        Ok((params, self.v))
    }
}

/// Detuning ratios `u = Δc/(N·U0)` demanded by the second, third, and
/// fourth depth-derivative conditions, each as `u − f` (the overlap offset
/// cancels in their differences), plus the scan combination and the
/// butterfly mismatch.
struct DegeneracyConditions {
    f: f64,
    g2: ValueWithError,
    g3: ValueWithError,
    lhs: ValueWithError,
    residual4: ValueWithError,
}

/// First-order error propagation through `g` by perturbing each derivative
/// by its error bound.
fn propagate(base: &[f64; 5], errors: &[f64; 4], g: impl Fn(&[f64; 5]) -> f64) -> ValueWithError {
    let value = g(base);
    let mut error = 0.0;
    for (k, err) in errors.iter().enumerate() {
        let mut shifted = *base;
        shifted[k + 1] += err;
        error += (g(&shifted) - value).abs();
    }
    ValueWithError { value, error }
}

fn degeneracy_conditions(model: &dyn OverlapModel, v: f64) -> Result<DegeneracyConditions> {
    let der = model.derivatives(v, 4)?;
    let base = [
        der.f,
        der.dk(1).value,
        der.dk(2).value,
        der.dk(3).value,
        der.dk(4).value,
    ];
    let errors = [
        der.dk(1).error,
        der.dk(2).error,
        der.dk(3).error,
        der.dk(4).error,
    ];
    let g2 = |x: &[f64; 5]| v * x[1] * x[1] / (2.0 * x[1] + v * x[2]);
    let g3 = |x: &[f64; 5]| 3.0 * x[1] * (x[1] + v * x[2]) / (3.0 * x[2] + v * x[3]);
    let g4 = |x: &[f64; 5]| {
        (12.0 * x[1] * x[2] + 4.0 * v * x[1] * x[3] + 3.0 * v * x[2] * x[2])
            / (4.0 * x[3] + v * x[4])
    };
    Ok(DegeneracyConditions {
        f: der.f,
        g2: propagate(&base, &errors, g2),
        g3: propagate(&base, &errors, g3),
        lhs: propagate(&base, &errors, |x| g2(x) - g3(x)),
        residual4: propagate(&base, &errors, |x| g4(x) - g2(x)),
    })
}

/// All swallowtail points of the state equation at fixed quasi-momentum.
///
/// Scans the combined degeneracy condition over a logarithmic depth grid,
/// bisects its sign changes with the propagated derivative error as the
/// zero tolerance, and keeps the roots whose scaled loss `inv_nu0_sq` is
/// positive (the rest are unphysical). The atom number only sets the
/// reported pump scale; the scaled outputs are independent of it.
pub fn swallowtail_scan(q: QuasiMomentum, n_atoms: f64) -> Result<Vec<SwallowtailPoint>> {
    if !(q.value() > 0.0 && q.value() < 1.0) {
        return Err(Error::InvalidParams(vec![format!(
            "swallowtail scan needs 0 < q < 1, got {}",
            q.value()
        )]));
    }
    if n_atoms.is_nan() || n_atoms <= 0.0 {
        return Err(Error::InvalidParams(
            vec!["n_atoms must be positive".into()],
        ));
    }
    let model = BlochOverlap::new(q, 0);
    let (lo, hi) = SWALLOWTAIL_SPAN;
    let ratio = (hi / lo).powf(1.0 / (SWALLOWTAIL_GRID - 1) as f64);
    let grid: Vec<f64> = (0..SWALLOWTAIL_GRID)
        .map(|i| lo * ratio.powi(i as i32))
        .collect();
    let lhs: Vec<ValueWithError> = grid
        .par_iter()
        .map(|&v| Ok(degeneracy_conditions(&model, v)?.lhs))
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    for i in 1..grid.len() {
        if lhs[i - 1].value * lhs[i].value >= 0.0 {
            continue;
        }
        let (mut a, mut b) = (grid[i - 1], grid[i]);
        let mut ra = lhs[i - 1].value;
        let mut at_mid = degeneracy_conditions(&model, 0.5 * (a + b))?;
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            at_mid = degeneracy_conditions(&model, mid)?;
            if at_mid.lhs.value.abs() <= at_mid.lhs.error || (b - a) <= 1e-12 * b {
                break;
            }
            if ra * at_mid.lhs.value < 0.0 {
                b = mid;
            } else {
                a = mid;
                ra = at_mid.lhs.value;
            }
        }
        // A sign change that cannot be driven inside its own error bound is
        // a pole of the conditions, not a degeneracy.
        if at_mid.lhs.value.abs() > 3.0 * at_mid.lhs.error {
            continue;
        }
        let v = 0.5 * (a + b);
        let g = at_mid.g2.value;
        let f1 = model.derivatives(v, 1)?.dk(1).value;
        let s = g * (2.0 * v * f1 - g);
        if s <= 0.0 {
            continue;
        }
        let u = at_mid.f + g;
        let scale = at_mid.g2.value.abs() + at_mid.g3.value.abs();
        let nu0 = 1.0 / s.sqrt();
        let u0 = nu0 / n_atoms;
        let d = nu0 * g;
        let eta = (v * (1.0 + d * d) / u0).sqrt();
        points.push(SwallowtailPoint {
            q: q.value(),
            v,
            delta_over_nu0: u,
            inv_nu0_sq: s,
            eta,
            f: at_mid.f,
            residual3: at_mid.lhs,
            residual4: at_mid.residual4,
            inconclusive: at_mid.lhs.error > 0.1 * scale,
        });
    }
    points.dedup_by(|p, r| (p.v - r.v).abs() < 1e-6 * r.v);
    Ok(points)
}

/// Quasi-momentum threshold above which swallowtail points exist.
///
/// Bisects the given window on the predicate "the scan finds a physical,
/// well-resolved point", to a tolerance of `1e-3` in `q`. The threshold is
/// a property of the scaled equations; the atom number is only forwarded to
/// the scan.
pub fn find_q_sw(window: (f64, f64), n_atoms: f64) -> Result<f64> {
    let (lo, hi) = window;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidParams(vec![format!(
            "q window ({lo}, {hi}) must lie inside (0, 1)"
        )]));
    }
    let found = |q: f64| -> Result<bool> {
        Ok(swallowtail_scan(QuasiMomentum::new(q)?, n_atoms)?
            .iter()
            .any(|p| !p.inconclusive))
    };
    if found(lo)? {
        return Err(Error::OnsetOutsideWindow {
            lo,
            hi,
            already_supercritical: true,
        });
    }
    if !found(hi)? {
        return Err(Error::OnsetOutsideWindow {
            lo,
            hi,
            already_supercritical: false,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-3 {
        let mid = 0.5 * (a + b);
        if found(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Verdict of the butterfly exclusion test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ButterflyVerdict {
    /// The fourth-derivative condition misses by more than three times its
    /// error bound: the singularity ladder stops at the swallowtail.
    NoButterfly,
    /// The mismatch is within its error bound; a butterfly cannot be
    /// excluded at this point.
    Inconclusive,
}

/// Butterfly exclusion result.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ButterflyReport {
    pub residual4: ValueWithError,
    pub verdict: ButterflyVerdict,
}

/// Re-evaluates the fourth-derivative mismatch at a swallowtail point and
/// classifies it against its propagated error.
pub fn butterfly_check(point: &SwallowtailPoint) -> Result<ButterflyReport> {
    let model = BlochOverlap::new(QuasiMomentum::new(point.q)?, 0);
    butterfly_check_with_model(point.v, &model)
}

/// [`butterfly_check`] against an arbitrary overlap model at depth `v`.
pub fn butterfly_check_with_model(v: f64, model: &dyn OverlapModel) -> Result<ButterflyReport> {
    let conditions = degeneracy_conditions(model, v)?;
    let residual4 = conditions.residual4;
    let verdict = if residual4.value.abs() > 3.0 * residual4.error {
        ButterflyVerdict::NoButterfly
    } else {
        ButterflyVerdict::Inconclusive
    };
    Ok(ButterflyReport { residual4, verdict })
}

/// Outcome of the transversality verification at a swallowtail point.
#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    /// Rank of the matrix spanned by the Jacobian-ideal basis and the two
    /// control unfolding directions; 4 at a generic swallowtail.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Whether every Taylor coefficient of both unfolding directions is
    /// nonzero.
    pub z_nonzero: bool,
    /// Fourth depth derivative of the state function at the degenerate
    /// depth (the leading germ coefficient up to `1/4!`).
    pub g4: f64,
    /// Fifth depth derivative at the degenerate depth.
    pub g5: f64,
}

/// Rank of a small matrix by singular values above `1e-6` of the largest.
pub fn rank_of_matrix(rows: &[Vec<f64>]) -> usize {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return 0;
    }
    let m = nalgebra::DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    let svd = m.svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-6 * max)
        .count()
}

/// Taylor data of the state function and its control derivatives around a
/// degenerate depth.
struct UnfoldingData {
    params: SystemParams,
    v0: f64,
    /// Overlap and its depth derivatives at `v0`.
    f: [f64; 5],
    /// Effective detuning and its depth derivatives at `v0`.
    d: [f64; 5],
    /// Taylor coefficients (orders 1..4) of `∂F/∂Δc`.
    z_dc: [f64; 4],
    /// Taylor coefficients (orders 1..4) of `∂F/∂U0`.
    z_u0: [f64; 4],
    /// Fourth and fifth depth derivatives of the state function.
    g4: f64,
    g5: f64,
}

fn unfolding_data(point: &SwallowtailPoint, kappa: f64, n_atoms: f64) -> Result<UnfoldingData> {
    let (params, v0) = point.realize(kappa, n_atoms)?;
    let model = BlochOverlap::new(QuasiMomentum::new(point.q)?, 0);
    let nu0 = params.collective_coupling();
    let state = |v: f64| -> Result<f64> {
        let f = model.f(v)?;
        let d = params.delta_c - nu0 * f;
        Ok(v * (kappa * kappa + d * d))
    };
    let g4 = derivative(&mut |v| state(v), v0, 4)?.value;
    let g5 = derivative(&mut |v| state(v), v0, 5)?.value;
    if g4 == 0.0 {
        return Err(Error::Inconclusive(
            "quartic germ coefficient vanished; not a swallowtail".into(),
        ));
    }

    let der = model.derivatives(v0, 4)?;
    let f = [
        der.f,
        der.dk(1).value,
        der.dk(2).value,
        der.dk(3).value,
        der.dk(4).value,
    ];
    let d = [
        params.delta_c - nu0 * f[0],
        -nu0 * f[1],
        -nu0 * f[2],
        -nu0 * f[3],
        -nu0 * f[4],
    ];

    // Detuning direction: ∂F/∂Δc = 2vD, expanded by the product rule.
    let p = [
        2.0 * d[0] + 2.0 * v0 * d[1],
        4.0 * d[1] + 2.0 * v0 * d[2],
        6.0 * d[2] + 2.0 * v0 * d[3],
        8.0 * d[3] + 2.0 * v0 * d[4],
    ];
    let z_dc = [p[0], p[1] / 2.0, p[2] / 6.0, p[3] / 24.0];

    // Coupling direction: ∂F/∂U0 = −2N·v·D·f − η², expanded with the
    // Leibniz rule on the triple product (the constant −η² drops out of
    // the order ≥ 1 coefficients).
    let binom = [
        [1.0; 5],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    let mut df = [0.0; 5];
    for (k, slot) in df.iter_mut().enumerate() {
        *slot = (0..=k).map(|i| binom[k][i] * d[i] * f[k - i]).sum();
    }
    let mut t = [0.0; 5];
    for k in 1..=4 {
        t[k] = v0 * df[k] + k as f64 * df[k - 1];
    }
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
    let mut z_u0 = [0.0; 4];
    for k in 1..=4 {
        z_u0[k - 1] = -2.0 * n_atoms * t[k] / fact[k];
    }

    Ok(UnfoldingData {
        params,
        v0,
        f,
        d,
        z_dc,
        z_u0,
        g4,
        g5,
    })
}

/// Numerical transversality check of the swallowtail unfolding.
///
/// Realizes the point for `(kappa, n_atoms)`, Taylor-expands the state
/// function around the degenerate depth (the quartic germ), and assembles
/// four vectors in the basis `{v, v², v³, v⁴}`: the Jacobian-ideal
/// directions `v⁴` and `v³ + (g5/4g4)·v⁴`, and the Taylor coefficients of
/// the detuning and coupling derivatives of the state function. Full rank
/// certifies that the two physical controls unfold the singularity.
pub fn transversality_rank_check(
    point: &SwallowtailPoint,
    kappa: f64,
    n_atoms: f64,
) -> Result<TransversalityReport> {
    let data = unfolding_data(point, kappa, n_atoms)?;
    let rows = vec![
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, data.g5 / (4.0 * data.g4)],
        data.z_dc.to_vec(),
        data.z_u0.to_vec(),
    ];
    let m = nalgebra::DMatrix::from_fn(4, 4, |i, j| rows[i][j]);
    let svd = m.svd(false, false);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().cloned().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let rank = rank_of_matrix(&rows);
    let z_nonzero = data.z_dc.iter().chain(data.z_u0.iter()).all(|&z| z != 0.0);
    Ok(TransversalityReport {
        rank,
        singular_values,
        z_nonzero,
        g4: data.g4,
        g5: data.g5,
    })
}

/// Steady-state solution counts on a transversal path through a
/// swallowtail point.
///
/// The two controls that unfold the quartic germ are combined so that the
/// depth-linear Taylor coefficient cancels and the quadratic one is pushed
/// to `∓(g4/24)·t²`; the pump then sweeps the constant coefficient through
/// the pocket where the germ gains four real roots. Returns the largest
/// branch count found inside the pocket and the smallest found at the
/// mirrored control offset, where the pocket is absent: `(5, 1)` at a
/// generic swallowtail.
pub fn solution_counts_across(
    point: &SwallowtailPoint,
    kappa: f64,
    n_atoms: f64,
    t: f64,
) -> Result<(usize, usize)> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidParams(vec![
            "path scale t must be positive".into()
        ]));
    }
    let data = unfolding_data(point, kappa, n_atoms)?;
    let q = QuasiMomentum::new(point.q)?;
    let params = &data.params;
    let (v0, eta, u0) = (data.v0, params.eta, params.u0);
    let quartic = data.g4 / 24.0;
    // Constant-coefficient responses of the state function to each control.
    let c_dc = 2.0 * v0 * data.d[0];
    let c_u0 = -2.0 * n_atoms * v0 * data.d[0] * data.f[0] - eta * eta;
    let c_eta = -2.0 * eta * u0;
    let det = data.z_dc[0] * data.z_u0[1] - data.z_dc[1] * data.z_u0[0];
    if det.abs() < 1e-12 * (data.z_dc[0] * data.z_u0[1]).abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Inconclusive(
            "control directions are degenerate at linear order".into(),
        ));
    }

    let counts_at = |a_target: f64, c_target: f64| -> Result<usize> {
        let d_dc = -data.z_u0[0] * a_target / det;
        let d_u0 = data.z_dc[0] * a_target / det;
        let d_eta = (c_target - c_dc * d_dc - c_u0 * d_u0) / c_eta;
        let perturbed = SystemParams::new(
            kappa,
            n_atoms,
            u0 + d_u0,
            eta + d_eta,
            params.delta_c + d_dc,
        )?;
        Ok(crate::photon::find_branches(q, &perturbed, 0)?.count())
    };

    let a_mag = quartic.abs() * t * t;
    let a_pocket = -a_mag * quartic.signum();
    let mut inside = 0;
    let mut best_c = 0.125 * quartic * t.powi(4);
    for k in 0..=20 {
        let c_target = (-0.2 + 0.65 * k as f64 / 20.0) * quartic * t.powi(4);
        let count = counts_at(a_pocket, c_target)?;
        if count > inside {
            inside = count;
            best_c = c_target;
        }
    }
    let outside = counts_at(-a_pocket, best_c)?;
    Ok((inside, outside))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::PolynomialOverlap;

    fn qm(q: f64) -> QuasiMomentum {
        QuasiMomentum::new(q).unwrap()
    }

    fn kerr_constants(params: &SystemParams) -> (f64, f64) {
        let nu0 = params.collective_coupling();
        let delta_0 = nu0 / 2.0 - 3.0f64.sqrt() * params.kappa;
        let eta_0 = (128.0 * params.kappa.powi(3)
            / (3.0 * 3.0f64.sqrt() * params.n_atoms * params.u0 * params.u0))
            .sqrt();
        (delta_0, eta_0)
    }

    #[test]
    fn controls_vanish_at_the_analytic_cusp() {
        let base = SystemParams::new(350.0, 1.0e4, 1.0, 1.0, 0.0).unwrap();
        let (delta_0, eta_0) = kerr_constants(&base);
        let p = SystemParams {
            delta_c: delta_0,
            eta: eta_0,
            ..base
        };
        let cusp = cusp_reduce_shallow(&p);
        let scale = cusp.b1.abs().max(1.0);
        assert!(cusp.c2.abs() < 1e-6 * scale * scale, "c2 = {}", cusp.c2);
        assert!(
            cusp.c1.abs() < 1e-6 * scale * scale * scale,
            "c1 = {}",
            cusp.c1
        );
        let roots = cusp.cubic_roots();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - cusp.s).abs() < 1e-4 * cusp.s);
    }

    #[test]
    fn zero_pump_keeps_the_empty_cavity_root() {
        let p = SystemParams::new(350.0, 1.0e4, 1.0, 0.0, 4000.0).unwrap();
        let cusp = cusp_reduce_shallow(&p);
        assert_eq!(cusp.b3, 0.0);
        assert!(cusp.cubic_roots().iter().any(|r| r.abs() < 1e-12));
    }

    fn shallow_state_roots(p: &SystemParams) -> Vec<f64> {
        let nu0 = p.collective_coupling();
        let delta = p.delta_c - nu0 / 2.0;
        let g = |v: f64| {
            let d = delta + nu0 * v / 16.0;
            v * (p.kappa * p.kappa + d * d) - p.eta * p.eta * p.u0
        };
        let mut roots = Vec::new();
        let mut prev = g(0.0);
        for i in 1..40000 {
            let v = i as f64 * 1e-4;
            let cur = g(v);
            if prev * cur < 0.0 {
                let (mut a, mut b, mut ga) = (v - 1e-4, v, prev);
                for _ in 0..200 {
                    if (b - a) < 1e-15 * b.abs().max(1e-3) {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    let gm = g(mid);
                    if ga * gm < 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        ga = gm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = cur;
        }
        roots
    }

    #[test]
    fn cubic_roots_match_the_shallow_state_equation() {
        for (u0, eta, delta_c) in [
            (1.0, 400.0, 4000.0),
            (0.7, 500.0, 3000.0),
            (1.3, 260.0, 4800.0),
            (1.0, 900.0, 1500.0),
        ] {
            let p = SystemParams::new(350.0, 1.0e4, u0, eta, delta_c).unwrap();
            let cubic = cusp_reduce_shallow(&p).cubic_roots();
            let scan: Vec<f64> = shallow_state_roots(&p)
                .into_iter()
                .filter(|&v| v < 4.0)
                .collect();
            let cubic: Vec<f64> = cubic
                .into_iter()
                .filter(|&v| (0.0..4.0).contains(&v))
                .collect();
            assert_eq!(cubic.len(), scan.len(), "u0={u0} eta={eta} dc={delta_c}");
            for (a, b) in cubic.iter().zip(&scan) {
                assert!(
                    (a - b).abs() < 1e-10 * b.abs().max(1e-3),
                    "cubic {a} vs scan {b}"
                );
            }
        }
    }

    #[test]
    fn three_root_region_matches_the_discriminant() {
        let base = SystemParams::new(350.0, 1.0e4, 1.0, 1.0, 4300.0).unwrap();
        let mut saw_three = false;
        let mut saw_one = false;
        for i in 0..60 {
            let eta = 330.0 + 2.0 * i as f64;
            let p = SystemParams { eta, ..base };
            let cusp = cusp_reduce_shallow(&p);
            let roots = cusp.cubic_roots();
            assert_eq!(
                roots.len() == 3,
                cusp.has_three_real_roots(),
                "eta={eta}: {} roots vs discriminant",
                roots.len()
            );
            if roots.len() == 3 {
                saw_three = true;
                // The looser bound quoted for the fold lines holds as well.
                assert!(cusp.c1 * cusp.c1 < -16.0 * cusp.c2.powi(3) / 27.0);
            } else {
                saw_one = true;
            }
        }
        assert!(saw_three && saw_one);
    }

    #[test]
    fn subthreshold_scan_is_empty() {
        assert!(swallowtail_scan(qm(0.5), 100.0).unwrap().is_empty());
    }

    #[test]
    fn appendix_point_location_and_residuals() {
        let points = swallowtail_scan(qm(0.69), 100.0).unwrap();
        assert_eq!(points.len(), 2, "points: {points:?}");
        let point = points.iter().max_by(|a, b| a.v.total_cmp(&b.v)).unwrap();
        let (params, v) = point.realize(1.0, 100.0).unwrap();
        assert!((v - 7.75).abs() < 0.05 * 7.75, "v = {v}");
        assert!(
            (params.delta_c - 0.90).abs() < 0.05 * 0.90,
            "dc = {}",
            params.delta_c
        );
        assert!(
            (params.eta - 14.5).abs() < 0.05 * 14.5,
            "eta = {}",
            params.eta
        );
        assert!((params.u0 - 0.15).abs() < 0.05 * 0.15, "u0 = {}", params.u0);
        assert!(((v / params.u0) - 50.3).abs() < 0.05 * 50.3);
        assert!(point.residual3.consistent_with_zero(3.0));
        assert!(!point.inconclusive);
        assert!(point.residual4.value.abs() > 3.0 * point.residual4.error);

        let g = crate::photon::state_function_g(v, qm(0.69), &params, 0).unwrap();
        let scale = params.eta * params.eta * params.u0;
        assert!(g.abs() < 1e-8 * scale, "state equation residual {g}");
    }

    #[test]
    fn scaled_outputs_are_atom_number_independent() {
        let small = swallowtail_scan(qm(0.69), 100.0).unwrap();
        let large = swallowtail_scan(qm(0.69), 1.0e4).unwrap();
        assert_eq!(small.len(), large.len());
        for (a, b) in small.iter().zip(&large) {
            assert!((a.v - b.v).abs() < 1e-6 * b.v);
            assert!((a.delta_over_nu0 - b.delta_over_nu0).abs() < 1e-6 * b.delta_over_nu0.abs());
            assert!((a.inv_nu0_sq - b.inv_nu0_sq).abs() < 1e-6 * b.inv_nu0_sq);
        }
    }

    #[test]
    fn threshold_in_the_default_window() {
        let q_sw = find_q_sw((0.4, 0.7), 100.0).unwrap();
        assert!((q_sw - 0.545).abs() < 0.01, "q_sw = {q_sw}");
        match find_q_sw((0.8, 0.9), 100.0) {
            Err(Error::OnsetOutsideWindow {
                already_supercritical,
                ..
            }) => assert!(already_supercritical),
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn butterfly_excluded_at_the_appendix_point() {
        let points = swallowtail_scan(qm(0.69), 100.0).unwrap();
        for point in &points {
            let report = butterfly_check(point).unwrap();
            assert_eq!(report.verdict, ButterflyVerdict::NoButterfly);
        }
    }

    #[test]
    fn planted_butterfly_is_not_excluded() {
        // A quartic overlap tuned so the second, third, and fourth
        // derivative conditions agree at v = 2: the state function then has
        // a quintic-order degeneracy there.
        let v = 2.0;
        let (c1, c2) = (-0.05, 0.004);
        let g = v * c1 * c1 / (2.0 * c1 + 2.0 * v * c2);
        let c3 = (3.0 * c1 * (c1 + 2.0 * v * c2) / g - 6.0 * c2) / (6.0 * v);
        let c4 = ((24.0 * c1 * c2 + 24.0 * v * c1 * c3 + 12.0 * v * c2 * c2) / g - 24.0 * c3)
            / (24.0 * v);
        let model = PolynomialOverlap {
            center: v,
            coeffs: vec![0.45, c1, c2, c3, c4],
        };
        let report = butterfly_check_with_model(v, &model).unwrap();
        assert_eq!(report.verdict, ButterflyVerdict::Inconclusive);
        assert!(report.residual4.consistent_with_zero(3.0));
    }

    #[test]
    fn unfolding_is_transversal_at_the_appendix_point() {
        let points = swallowtail_scan(qm(0.69), 100.0).unwrap();
        let point = points.iter().max_by(|a, b| a.v.total_cmp(&b.v)).unwrap();
        let report = transversality_rank_check(point, 1.0, 100.0).unwrap();
        assert_eq!(report.rank, 4);
        assert!(report.z_nonzero);
        assert!(
            (report.g4 - 8.861e-3).abs() < 0.02 * 8.861e-3,
            "g4 = {}",
            report.g4
        );
        assert!(
            (report.g5 + 8.123e-3).abs() < 0.02 * 8.123e-3,
            "g5 = {}",
            report.g5
        );
        let expect = [6.0646, 1.1211, 0.892, 0.213];
        for (s, e) in report.singular_values.iter().zip(&expect) {
            assert!(
                (s - e).abs() < 0.02 * e,
                "singular values {:?}",
                report.singular_values
            );
        }
    }

    #[test]
    fn duplicate_unfolding_direction_drops_the_rank() {
        let points = swallowtail_scan(qm(0.69), 100.0).unwrap();
        let point = points.iter().max_by(|a, b| a.v.total_cmp(&b.v)).unwrap();
        let report = transversality_rank_check(point, 1.0, 100.0).unwrap();
        let g_ratio = report.g5 / (4.0 * report.g4);
        let r2 = vec![0.0, 0.0, 1.0, g_ratio];
        let rows = vec![
            vec![0.0, 0.0, 0.0, 1.0],
            r2.clone(),
            r2.clone(),
            vec![1.0, 0.5, 0.25, 0.125],
        ];
        assert_eq!(rank_of_matrix(&rows), 3);
    }

    #[test]
    fn five_solutions_collapse_to_one_across_the_point() {
        let points = swallowtail_scan(qm(0.69), 100.0).unwrap();
        let point = points.iter().max_by(|a, b| a.v.total_cmp(&b.v)).unwrap();
        let (inside, outside) = solution_counts_across(point, 1.0, 100.0, 0.6).unwrap();
        assert_eq!(inside, 5);
        assert_eq!(outside, 1);
    }
}
