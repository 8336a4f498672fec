//! Steady-state photon numbers of the driven cavity at fixed quasi-momentum.
//!
//! The pump balance fixes `n_ph = η²/(κ² + (Δc − N·U0·f)²)` while `f` itself
//! depends on the lattice depth `v = U0·n_ph`. Roots of the equivalent state
//! function `G(v) = v·κ² + v·(Δc − N·U0·f(v))² − η²·U0` are the steady
//! states; depending on parameters there are one, three, or five of them.

use rayon::prelude::*;
use serde::Serialize;

use crate::bloch::BlochState;
use crate::error::{Error, Result};
use crate::overlap::{overlap_f, BlochOverlap, OverlapModel};
use crate::params::{QuasiMomentum, SystemParams};

/// Scan density of the primary root bracketing grid.
const SCAN_GRID: usize = 4000;

/// Extra subdivision applied around closely spaced sign changes.
const REFINE_FACTOR: usize = 100;

/// Relative dedup tolerance between root depths.
const DEDUP_REL: f64 = 1e-6;

/// One self-consistent steady state.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhotonBranch {
    /// Steady-state photon number.
    pub n_ph: f64,
    /// Lattice depth `U0·n_ph` in `E_R`.
    pub v: f64,
    /// Atom-light overlap at this depth.
    pub f: f64,
    /// Chemical potential (band eigenvalue) in `E_R`.
    pub mu: f64,
    /// Total energy of the coupled system in `E_R`.
    pub energy_total: f64,
    /// Phase shift of the steady-state light field, `arctan[(Δc − N·U0·f)/κ]`.
    pub phase: f64,
}

/// All steady states at one `(q, params)` point, sorted by photon number.
#[derive(Debug, Clone, Serialize)]
pub struct BranchSet {
    pub q: f64,
    pub params: SystemParams,
    pub branches: Vec<PhotonBranch>,
}

impl BranchSet {
    /// Number of coexisting steady states.
    pub fn count(&self) -> usize {
        self.branches.len()
    }
}

/// State function `G(v) = v·κ² + v·(Δc − N·U0·f(v))² − η²·U0` in `ω_R` units.
///
/// Its zeros are exactly the self-consistent lattice depths.
pub fn state_function_g(
    v: f64,
    q: QuasiMomentum,
    params: &SystemParams,
    band: usize,
) -> Result<f64> {
    state_function_g_with_model(v, params, &BlochOverlap::new(q, band))
}

/// [`state_function_g`] against an arbitrary overlap model.
pub fn state_function_g_with_model(
    v: f64,
    params: &SystemParams,
    model: &dyn OverlapModel,
) -> Result<f64> {
    let f = model.f(v)?;
    let d = params.delta_c - params.collective_coupling() * f;
    Ok(v * params.kappa * params.kappa + v * d * d - params.eta * params.eta * params.u0)
}

/// Self-consistent lattice depths from a bracketing scan of `G`.
///
/// Scans `[0, U0·n_max]` (reversed for `U0 < 0`) on a 4000-point grid, adds a
/// local 100× refinement pass around closely spaced sign changes, refines
/// every bracket by bisection to relative 1e-12, and deduplicates.
pub fn scan_depth_roots(params: &SystemParams, model: &dyn OverlapModel) -> Result<Vec<f64>> {
    params.validate()?;
    if params.eta == 0.0 {
        return Ok(vec![0.0]);
    }
    let v_cap = params.u0 * params.n_max();
    let (lo, hi) = if v_cap >= 0.0 {
        (0.0, v_cap)
    } else {
        (v_cap, 0.0)
    };

    let g = |v: f64| state_function_g_with_model(v, params, model);
    let mut brackets = bracket_sign_changes(&g, lo, hi, SCAN_GRID)?;

    // Closely spaced brackets hint at near-tangent roots; re-scan their
    // neighborhood on a much finer grid so none are missed.
    let cell = (hi - lo) / SCAN_GRID as f64;
    let mut refined = Vec::new();
    let mut i = 0;
    while i < brackets.len() {
        let mut j = i;
        while j + 1 < brackets.len() && brackets[j + 1].0 - brackets[j].1 < 2.0 * cell {
            j += 1;
        }
        if j > i {
            let span_lo = brackets[i].0 - cell;
            let span_hi = brackets[j].1 + cell;
            let n = (j - i + 1) * REFINE_FACTOR;
            refined.extend(bracket_sign_changes(
                &g,
                span_lo.max(lo),
                span_hi.min(hi),
                n,
            )?);
        } else {
            refined.push(brackets[i]);
        }
        i = j + 1;
    }
    brackets = refined;

    let mut roots: Vec<f64> = brackets
        .into_iter()
        .map(|(a, b)| bisect(&g, a, b))
        .collect::<Result<_>>()?;
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|b, a| (*b - *a).abs() <= DEDUP_REL * b.abs().max(a.abs()));
    if roots.is_empty() {
        return Err(Error::NoRoots { q: f64::NAN });
    }
    Ok(roots)
}

fn bracket_sign_changes(
    g: &dyn Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut prev_x = lo;
    let mut prev_g = g(lo)?;
    for i in 1..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let gx = g(x)?;
        if prev_g == 0.0 {
            out.push((prev_x, prev_x));
        } else if prev_g * gx < 0.0 {
            out.push((prev_x, x));
        }
        prev_x = x;
        prev_g = gx;
    }
    if prev_g == 0.0 {
        out.push((prev_x, prev_x));
    }
    Ok(out)
}

fn bisect(g: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<f64> {
    if a == b {
        return Ok(a);
    }
    let mut ga = g(a)?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-12) {
            return Ok(mid);
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if ga * gm < 0.0 {
            b = mid;
        } else {
            a = mid;
            ga = gm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Builds the fully populated branch at a self-consistent depth.
fn make_branch(
    v: f64,
    q: QuasiMomentum,
    params: &SystemParams,
    band: usize,
) -> Result<(PhotonBranch, BlochState)> {
    let model = BlochOverlap::new(q, band);
    let state = model.state(v)?;
    let f = overlap_f(&state);
    let d = params.delta_c - params.collective_coupling() * f;
    let n_ph = v / params.u0;
    let kinetic = state.kinetic();
    let energy_total = params.n_atoms * kinetic
        - params.eta * params.eta / params.kappa * (d / params.kappa).atan();
    Ok((
        PhotonBranch {
            n_ph,
            v,
            f,
            mu: state.mu,
            energy_total,
            phase: (d / params.kappa).atan(),
        },
        state,
    ))
}

/// All steady states at `(q, params)` using the exact Bloch overlap.
pub fn find_branches(q: QuasiMomentum, params: &SystemParams, band: usize) -> Result<BranchSet> {
    let model = BlochOverlap::new(q, band);
    let roots = scan_depth_roots(params, &model).map_err(|e| match e {
        Error::NoRoots { .. } => Error::NoRoots { q: q.value() },
        other => other,
    })?;
    branch_set_from_roots(&roots, q, params, band)
}

/// Steady states located with an interpolating or synthetic overlap model,
/// then polished on the exact one.
///
/// Each approximate root is re-bisected in a shrunken bracket with the exact
/// Bloch overlap, so the returned branches satisfy the pump-balance residual
/// at full accuracy while the expensive scan runs on the cheap model.
pub fn find_branches_polished(
    q: QuasiMomentum,
    params: &SystemParams,
    band: usize,
    scan_model: &dyn OverlapModel,
) -> Result<BranchSet> {
    let approx = scan_depth_roots(params, scan_model).map_err(|e| match e {
        Error::NoRoots { .. } => Error::NoRoots { q: q.value() },
        other => other,
    })?;
    let exact = BlochOverlap::new(q, band);
    let g = |v: f64| state_function_g_with_model(v, params, &exact);
    let span = params.u0.abs() * params.n_max();
    let mut roots = Vec::with_capacity(approx.len());
    for v0 in approx {
        let h = (1e-4 * span).max(1e-9 * v0.abs());
        let (mut a, mut b) = (v0 - h, v0 + h);
        // Widen until the exact state function changes sign across the bracket.
        let mut ok = false;
        for _ in 0..20 {
            let (ga, gb) = (g(a)?, g(b)?);
            if ga == 0.0 || gb == 0.0 || ga * gb < 0.0 {
                ok = true;
                break;
            }
            let w = b - a;
            a -= w;
            b += w;
        }
        if ok {
            roots.push(bisect(&g, a, b)?);
        } else {
            roots.push(v0);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|b, a| (*b - *a).abs() <= DEDUP_REL * b.abs().max(a.abs()));
    branch_set_from_roots(&roots, q, params, band)
}

fn branch_set_from_roots(
    roots: &[f64],
    q: QuasiMomentum,
    params: &SystemParams,
    band: usize,
) -> Result<BranchSet> {
    let mut branches = Vec::with_capacity(roots.len());
    for &v in roots {
        branches.push(make_branch(v, q, params, band)?.0);
    }
    branches.sort_by(|a, b| a.n_ph.total_cmp(&b.n_ph));
    Ok(BranchSet {
        q: q.value(),
        params: *params,
        branches,
    })
}

/// Steady states for a red-detuned lattice (`U0 < 0`) through the
/// translation identity `f(−v, q) = 1 − f(v, q)`.
///
/// Solves the equivalent blue-detuned problem with `U0 → −U0`,
/// `Δc → Δc − N·U0` and maps the solutions back. Agrees with the direct
/// negative-depth scan of [`find_branches`] to high accuracy, which is a
/// tested invariant rather than an assumption.
pub fn find_branches_red_detuned(
    q: QuasiMomentum,
    params: &SystemParams,
    band: usize,
) -> Result<BranchSet> {
    params.validate()?;
    if params.u0 >= 0.0 {
        return Err(Error::InvalidParams(vec![
            "red-detuned path requires u0 < 0".to_string(),
        ]));
    }
    let blue = SystemParams {
        u0: -params.u0,
        delta_c: params.delta_c - params.n_atoms * params.u0,
        ..*params
    };
    let blue_set = find_branches(q, &blue, band)?;
    let branches = blue_set
        .branches
        .iter()
        .map(|b| PhotonBranch {
            n_ph: b.n_ph,
            v: -b.v,
            f: 1.0 - b.f,
            mu: b.mu - b.v,
            energy_total: b.energy_total,
            phase: b.phase,
        })
        .collect();
    Ok(BranchSet {
        q: q.value(),
        params: *params,
        branches,
    })
}

/// One point of a hysteresis trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    pub delta_c: f64,
    pub n_ph: f64,
}

/// A detuning sweep: the full branch set per `Δc` plus the two swept traces.
#[derive(Debug, Clone, Serialize)]
pub struct Lineshape {
    pub sets: Vec<BranchSet>,
    /// Branch followed while sweeping `Δc` upward, jumping on disappearance.
    pub up_trace: Vec<TracePoint>,
    /// Branch followed while sweeping `Δc` downward.
    pub down_trace: Vec<TracePoint>,
}

/// Full branch sets over a sorted `Δc` grid with hysteresis traces.
///
/// The overlap is interpolated from a dense precomputed table (the overlap
/// does not depend on `Δc`), and every returned root is polished on the exact
/// solver. On a branch disappearance the traces jump to the nearest surviving
/// branch in photon number, the swept-intensity protocol of a slow detuning
/// ramp.
pub fn lineshape_sweep(
    params: &SystemParams,
    q: QuasiMomentum,
    band: usize,
    delta_grid: &[f64],
) -> Result<Lineshape> {
    params.validate()?;
    if delta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParams(vec![
            "delta grid must be sorted ascending".to_string(),
        ]));
    }
    let v_cap = params.u0 * params.n_max();
    let table = FTable::build(q, band, v_cap)?;
    let sets: Vec<BranchSet> = delta_grid
        .par_iter()
        .map(|&dc| {
            let p = SystemParams {
                delta_c: dc,
                ..*params
            };
            find_branches_polished(q, &p, band, &table)
        })
        .collect::<Result<_>>()?;

    let follow = |order: Box<dyn Iterator<Item = usize>>, start_highest: bool| -> Vec<TracePoint> {
        let mut trace = Vec::with_capacity(sets.len());
        let mut current: Option<f64> = None;
        for i in order {
            let set = &sets[i];
            let n = match current {
                None => {
                    if start_highest {
                        set.branches.last().map(|b| b.n_ph).unwrap_or(0.0)
                    } else {
                        set.branches.first().map(|b| b.n_ph).unwrap_or(0.0)
                    }
                }
                Some(prev) => set
                    .branches
                    .iter()
                    .map(|b| b.n_ph)
                    .min_by(|a, b| (a - prev).abs().total_cmp(&(b - prev).abs()))
                    .unwrap_or(prev),
            };
            current = Some(n);
            trace.push(TracePoint {
                delta_c: delta_grid[i],
                n_ph: n,
            });
        }
        trace
    };

    let up_trace = follow(Box::new(0..sets.len()), false);
    let mut down_trace = follow(Box::new((0..sets.len()).rev()), true);
    down_trace.reverse();
    Ok(Lineshape {
        sets,
        up_trace,
        down_trace,
    })
}

/// One point of the parametric input-output characteristic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IoPoint {
    /// Steady-state (output) photon number.
    pub n_ph: f64,
    /// Incident capacity `n_max = η²/κ²` required to sustain it.
    pub n_max: f64,
}

/// Input-output characteristic `n_max(n_ph) = n_ph·[1 + ((Δc − N·U0·f)/κ)²]`.
///
/// Purely parametric in `n_ph`; no root finding. The `eta` field of `params`
/// is ignored. An s-shaped (non-monotone) curve signals bistability; crossing
/// counts of a horizontal line reproduce the branch multiplicities.
pub fn input_output_curve(
    params: &SystemParams,
    q: QuasiMomentum,
    band: usize,
    n_ph_grid: &[f64],
) -> Result<Vec<IoPoint>> {
    input_output_curve_with_model(params, n_ph_grid, &BlochOverlap::new(q, band))
}

/// [`input_output_curve`] against an arbitrary overlap model.
pub fn input_output_curve_with_model(
    params: &SystemParams,
    n_ph_grid: &[f64],
    model: &dyn OverlapModel,
) -> Result<Vec<IoPoint>> {
    n_ph_grid
        .iter()
        .map(|&n| {
            let f = model.f(params.u0 * n)?;
            let d = (params.delta_c - params.collective_coupling() * f) / params.kappa;
            Ok(IoPoint {
                n_ph: n,
                n_max: n * (1.0 + d * d),
            })
        })
        .collect()
}

/// Dense cubic-spline table of the overlap along `v` at fixed `(q, band)`.
///
/// Grid scans evaluate `f` millions of times at depths that never depend on
/// the pump or detuning; this table trades one dense sweep of exact solves
/// for microsecond lookups with interpolation error far below the root
/// tolerances (the returned branches are polished on the exact solver
/// anyway).
#[derive(Debug, Clone)]
pub struct FTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    second: Vec<f64>,
}

/// Number of exact solves used to build an [`FTable`].
const FTABLE_POINTS: usize = 8001;

impl FTable {
    /// Tabulates `f` on `[min(0, v_cap)·(1+ε), max(0, v_cap)·(1+ε)]`.
    pub fn build(q: QuasiMomentum, band: usize, v_cap: f64) -> Result<Self> {
        let pad = 1.02 * v_cap.abs().max(1e-6);
        let (lo, hi) = if v_cap >= 0.0 {
            (-1e-3, pad)
        } else {
            (-pad, 1e-3)
        };
        let model = BlochOverlap::new(q, band);
        let n = FTABLE_POINTS;
        let step = (hi - lo) / (n - 1) as f64;
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| model.f(lo + step * i as f64))
            .collect::<Result<_>>()?;
        let second = natural_spline_second_derivatives(&values, step);
        Ok(Self {
            lo,
            step,
            values,
            second,
        })
    }
}

impl OverlapModel for FTable {
    fn f(&self, v: f64) -> Result<f64> {
        let n = self.values.len();
        let t = (v - self.lo) / self.step;
        let i = (t.floor() as isize).clamp(0, n as isize - 2) as usize;
        let x = t - i as f64;
        let (ya, yb) = (self.values[i], self.values[i + 1]);
        let (ma, mb) = (self.second[i], self.second[i + 1]);
        let a = 1.0 - x;
        let h2 = self.step * self.step / 6.0;
        Ok(a * ya + x * yb + h2 * ((a * a * a - a) * ma + (x * x * x - x) * mb))
    }
}

fn natural_spline_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the (1 4 1) system for interior nodes.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let rhs = 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1]) / (h * h);
        let denom = 4.0 - c[i - 1];
        c[i] = 1.0 / denom;
        d[i] = (rhs - d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}
