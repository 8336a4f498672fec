//! Optical bistability analysis: fold condition, critical pump, η-windows,
//! and solution-count maps over the pump/detuning plane.
//!
//! Folds of the input-output characteristic satisfy
//! `κ² + D² − 2·v·N·U0·D·f′(v) = 0` with `D = Δc − N·U0·f(v)`. Bistability
//! first appears where this condition becomes doubly degenerate in `v`, the
//! cusp of the fold curve in the `(Δc, η)` plane.

use rayon::prelude::*;
use serde::Serialize;

use crate::diff::ValueWithError;
use crate::error::{Error, Result};
use crate::overlap::{BlochOverlap, OverlapModel};
use crate::params::{QuasiMomentum, SystemParams};
use crate::photon::{scan_depth_roots, FTable};

/// Lower end of the logarithmic depth grid used to bracket fold roots.
const V_SCAN_LO: f64 = 1e-3;

/// Upper end of the logarithmic depth grid.
const V_SCAN_HI: f64 = 50.0;

/// Grid density of the fold-root bracketing scan.
const V_SCAN_POINTS: usize = 600;

/// Parameters of the onset of bistability at fixed quasi-momentum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    pub q: f64,
    /// Detuning below which bistability exists, in `ω_R`.
    pub delta_0: f64,
    /// Pump strength at the onset, in `ω_R`.
    pub eta_cr: f64,
    /// Photon number at the onset.
    pub n_0: f64,
}

/// Solution-count map over a `(Δc, η)` grid at fixed quasi-momentum.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationMap {
    pub q: f64,
    pub eta_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// `counts[i][j]` is the number of steady states at
    /// `(eta_grid[i], delta_grid[j])`.
    pub counts: Vec<Vec<u32>>,
    /// Fold curves as `(Δc, η)` polylines traced along count changes.
    pub boundaries: Vec<Vec<(f64, f64)>>,
    /// `(Δc, η)` markers where fold curves meet or reverse.
    pub cusps: Vec<(f64, f64)>,
}

/// Fold condition `κ² + D² − 2·v·N·U0·D·f′(v)` with `D = Δc − N·U0·f(v)`.
///
/// Zero exactly at the turning points of the input-output curve. The error
/// field propagates the overlap-derivative uncertainty,
/// `2·v·N·U0·|D|·err(f′)`. The detuning is taken from the `delta_c`
/// argument; the one inside `params` is ignored.
pub fn bistability_residual(
    v: f64,
    delta_c: f64,
    params: &SystemParams,
    q: QuasiMomentum,
) -> Result<ValueWithError> {
    bistability_residual_with_model(v, delta_c, params, &BlochOverlap::new(q, 0))
}

/// [`bistability_residual`] against an arbitrary overlap model.
pub fn bistability_residual_with_model(
    v: f64,
    delta_c: f64,
    params: &SystemParams,
    model: &dyn OverlapModel,
) -> Result<ValueWithError> {
    let der = model.derivatives(v, 1)?;
    let nu0 = params.collective_coupling();
    let d = delta_c - nu0 * der.f;
    let d1 = der.dk(1);
    let value = params.kappa * params.kappa + d * d - 2.0 * v * nu0 * d * d1.value;
    Ok(ValueWithError {
        value,
        error: (2.0 * v * nu0 * d).abs() * d1.error,
    })
}

/// Lattice depths at which the fold condition vanishes at fixed detuning.
fn fold_depths(delta_c: f64, params: &SystemParams, model: &dyn OverlapModel) -> Result<Vec<f64>> {
    let res = |v: f64| -> Result<f64> {
        Ok(bistability_residual_with_model(v, delta_c, params, model)?.value)
    };
    let mut roots = Vec::new();
    let ratio = (V_SCAN_HI / V_SCAN_LO).powf(1.0 / (V_SCAN_POINTS - 1) as f64);
    let mut prev_v = V_SCAN_LO;
    let mut prev_r = res(prev_v)?;
    for i in 1..V_SCAN_POINTS {
        let v = V_SCAN_LO * ratio.powi(i as i32);
        let r = res(v)?;
        if prev_r == 0.0 {
            roots.push(prev_v);
        } else if prev_r * r < 0.0 {
            let (mut a, mut b, mut ra) = (prev_v, v, prev_r);
            for _ in 0..100 {
                if (b - a) <= 1e-10 * b {
                    break;
                }
                let m = 0.5 * (a + b);
                let rm = res(m)?;
                if rm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if ra * rm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    ra = rm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_v = v;
        prev_r = r;
    }
    Ok(roots)
}

/// Pump strength that sustains depth `v` at detuning `delta_c`.
fn eta_at(v: f64, delta_c: f64, params: &SystemParams, model: &dyn OverlapModel) -> Result<f64> {
    let d = delta_c - params.collective_coupling() * model.f(v)?;
    let n_ph = v / params.u0;
    Ok((n_ph * (params.kappa * params.kappa + d * d)).sqrt())
}

/// Onset of bistability by direct solution of the degeneracy system.
///
/// Solves `{residual = 0, ∂residual/∂v = 0}` for `(v, Δc)` with a damped
/// Newton iteration seeded from a bisection on the detuning window: the
/// fold condition has roots below the onset and none above it. The pump
/// field of `params` is ignored; the critical pump is an output.
pub fn critical_point_numeric(
    q: QuasiMomentum,
    params: &SystemParams,
    window: (f64, f64),
) -> Result<CriticalPoint> {
    params.validate()?;
    let (lo, hi) = window;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidParams(vec![format!(
            "detuning window ({lo}, {hi}) is not an interval"
        )]));
    }
    let model = BlochOverlap::new(q, 0);

    let has_roots = |dc: f64| -> Result<Option<(f64, f64)>> {
        let roots = fold_depths(dc, params, &model)?;
        Ok(match roots.as_slice() {
            [] => None,
            [only] => Some((*only, *only)),
            [first, .., last] => Some((*first, *last)),
        })
    };
    let at_lo = has_roots(lo)?;
    let at_hi = has_roots(hi)?;
    if at_lo.is_none() {
        return Err(Error::OnsetOutsideWindow {
            lo,
            hi,
            already_supercritical: true,
        });
    }
    if at_hi.is_some() {
        return Err(Error::OnsetOutsideWindow {
            lo,
            hi,
            already_supercritical: false,
        });
    }

    let (mut sub, mut sup) = (lo, hi);
    let mut pair = at_lo.unwrap();
    for _ in 0..24 {
        if (sup - sub) <= 1e-6 * sup.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (sub + sup);
        match has_roots(mid)? {
            Some(p) => {
                pair = p;
                sub = mid;
            }
            None => sup = mid,
        }
    }

    let mut v = 0.5 * (pair.0 + pair.1);
    let mut dc = sub;
    let nu0 = params.collective_coupling();
    let kappa_sq = params.kappa * params.kappa;

    // residual R = κ² + D² − 2·v·NU0·D·d1 and S = ∂R/∂v = −2·NU0·T with
    // T = 2·D·d1 + v·D·d2 − v·NU0·d1²; the Jacobian follows by one more
    // differentiation through D′ = −NU0·d1.
    let system = |v: f64, dc: f64| -> Result<([f64; 2], [[f64; 2]; 2])> {
        let der = model.derivatives(v, 3)?;
        let (d1, d2, d3) = (der.dk(1).value, der.dk(2).value, der.dk(3).value);
        let d = dc - nu0 * der.f;
        let r = kappa_sq + d * d - 2.0 * v * nu0 * d * d1;
        let t = 2.0 * d * d1 + v * d * d2 - v * nu0 * d1 * d1;
        let s = -2.0 * nu0 * t;
        let dr_dv = s;
        let dr_ddc = 2.0 * d - 2.0 * v * nu0 * d1;
        let dt_dv = 3.0 * (d * d2 - nu0 * d1 * d1) + v * (d * d3 - 3.0 * nu0 * d1 * d2);
        let ds_dv = -2.0 * nu0 * dt_dv;
        let ds_ddc = -2.0 * nu0 * (2.0 * d1 + v * d2);
        Ok(([r, s], [[dr_dv, dr_ddc], [ds_dv, ds_ddc]]))
    };

    let norm = |f: &[f64; 2]| (f[0] / kappa_sq).hypot(f[1] / (nu0 * params.kappa));
    let (mut f_cur, mut jac) = system(v, dc)?;
    let mut converged = false;
    for _ in 0..80 {
        if norm(&f_cur) < 1e-10 {
            converged = true;
            break;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 {
            break;
        }
        let dv = (-f_cur[0] * jac[1][1] + f_cur[1] * jac[0][1]) / det;
        let ddc = (-f_cur[1] * jac[0][0] + f_cur[0] * jac[1][0]) / det;
        let mut alpha = 1.0;
        let mut stepped = false;
        for _ in 0..40 {
            let v_try = v + alpha * dv;
            let dc_try = dc + alpha * ddc;
            if v_try > 0.0 {
                if let Ok((f_try, j_try)) = system(v_try, dc_try) {
                    if norm(&f_try) <= (1.0 - 1e-4 * alpha) * norm(&f_cur) {
                        v = v_try;
                        dc = dc_try;
                        f_cur = f_try;
                        jac = j_try;
                        stepped = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !stepped {
            break;
        }
    }
    if !converged && norm(&f_cur) >= 1e-8 {
        return Err(Error::NotFound(format!(
            "degeneracy iteration stalled at residual {:.3e} near (v={v}, delta_c={dc})",
            norm(&f_cur)
        )));
    }

    Ok(CriticalPoint {
        q: q.value(),
        delta_0: dc,
        eta_cr: eta_at(v, dc, params, &model)?,
        n_0: v / params.u0,
    })
}

/// The pump window `(η1, η2)` in which the cavity is bistable at fixed
/// detuning, or `None` when the fold condition has no roots there.
///
/// The window ends are the fold depths mapped through the steady-state
/// relation; with more than two folds the outermost pair is reported. The
/// pump field of `params` is ignored.
pub fn eta_window(
    q: QuasiMomentum,
    delta_c: f64,
    params: &SystemParams,
) -> Result<Option<(f64, f64)>> {
    params.validate()?;
    let model = BlochOverlap::new(q, 0);
    let roots = fold_depths(delta_c, params, &model)?;
    if roots.is_empty() {
        return Ok(None);
    }
    if roots.len() == 1 {
        return Err(Error::DegenerateWindow { delta_c });
    }
    let etas: Vec<f64> = roots
        .iter()
        .map(|&v| eta_at(v, delta_c, params, &model))
        .collect::<Result<_>>()?;
    let lo = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Some((lo, hi)))
}

/// Constant in the shallow-lattice closed form of the critical pump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AnalyticConstant {
    /// `√128`, consistent with the cubic's discriminant and the reference
    /// numeric value of the critical pump.
    Sqrt128,
    /// `√8`, an alternative normalization kept for comparison; it
    /// underestimates the critical pump by a factor of 4.
    Sqrt8,
}

/// Shallow-lattice closed form
/// `η_cr(q) = C·√(κ³(1−q²)/(3√3·N·U0²))` with the default `C = √128`.
pub fn eta_cr_analytic_shallow(q: QuasiMomentum, params: &SystemParams) -> f64 {
    eta_cr_analytic_shallow_with(q, params, AnalyticConstant::Sqrt128)
}

/// [`eta_cr_analytic_shallow`] with an explicit constant choice.
pub fn eta_cr_analytic_shallow_with(
    q: QuasiMomentum,
    params: &SystemParams,
    constant: AnalyticConstant,
) -> f64 {
    let c = match constant {
        AnalyticConstant::Sqrt128 => 128.0f64.sqrt(),
        AnalyticConstant::Sqrt8 => 8.0f64.sqrt(),
    };
    let kappa_cubed = params.kappa.powi(3);
    let denom = 3.0 * 3.0f64.sqrt() * params.n_atoms * params.u0 * params.u0;
    c * (kappa_cubed * (1.0 - q.value() * q.value()) / denom).sqrt()
}

/// Solution counts over a `(Δc, η)` grid, with fold polylines and cusp
/// markers.
///
/// Counts come from the bracketing scan of the state function against a
/// dense overlap table (the map needs counts, not polished roots). Fold
/// polylines are traced along grid edges whose endpoint counts differ, with
/// one level of midpoint refinement per edge; cusp markers are placed where
/// the traced curves reverse direction or end away from the map boundary.
/// The pump and detuning fields of `params` are ignored.
pub fn bifurcation_map(
    q: QuasiMomentum,
    params: &SystemParams,
    eta_grid: &[f64],
    delta_grid: &[f64],
) -> Result<BifurcationMap> {
    params.validate()?;
    if eta_grid.len() < 2 || delta_grid.len() < 2 {
        return Err(Error::InvalidParams(vec![
            "bifurcation map needs at least a 2x2 grid".into(),
        ]));
    }
    for (name, grid) in [("eta", eta_grid), ("delta_c", delta_grid)] {
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(vec![format!(
                "{name} grid must be strictly ascending"
            )]));
        }
        if grid[0] < 0.0 && name == "eta" {
            return Err(Error::InvalidParams(vec![
                "eta grid must be nonnegative".into()
            ]));
        }
    }

    let eta_max = *eta_grid.last().unwrap();
    let v_cap = params.u0 * eta_max * eta_max / (params.kappa * params.kappa);
    let table = FTable::build(q, 0, v_cap)?;

    let count_at = |eta: f64, dc: f64| -> Result<u32> {
        let p = SystemParams {
            eta,
            delta_c: dc,
            ..*params
        };
        Ok(scan_depth_roots(&p, &table)?.len() as u32)
    };

    let nodes: Vec<(usize, usize)> = (0..eta_grid.len())
        .flat_map(|i| (0..delta_grid.len()).map(move |j| (i, j)))
        .collect();
    let flat: Vec<u32> = nodes
        .par_iter()
        .map(|&(i, j)| count_at(eta_grid[i], delta_grid[j]))
        .collect::<Result<_>>()?;
    let counts: Vec<Vec<u32>> = (0..eta_grid.len())
        .map(|i| flat[i * delta_grid.len()..(i + 1) * delta_grid.len()].to_vec())
        .collect();

    // One refined crossing point per grid edge whose endpoint counts differ.
    // Key: (eta index, delta index, horizontal?) of the edge's lower node.
    let mut edge_points: std::collections::HashMap<(usize, usize, bool), (f64, f64)> =
        std::collections::HashMap::new();
    for i in 0..eta_grid.len() {
        for j in 0..delta_grid.len() {
            if j + 1 < delta_grid.len() && counts[i][j] != counts[i][j + 1] {
                let mid = 0.5 * (delta_grid[j] + delta_grid[j + 1]);
                let cm = count_at(eta_grid[i], mid)?;
                let frac = if cm == counts[i][j] {
                    0.75
                } else if cm == counts[i][j + 1] {
                    0.25
                } else {
                    0.5
                };
                let dc = delta_grid[j] + frac * (delta_grid[j + 1] - delta_grid[j]);
                edge_points.insert((i, j, true), (dc, eta_grid[i]));
            }
            if i + 1 < eta_grid.len() && counts[i][j] != counts[i + 1][j] {
                let mid = 0.5 * (eta_grid[i] + eta_grid[i + 1]);
                let cm = count_at(mid, delta_grid[j])?;
                let frac = if cm == counts[i][j] {
                    0.75
                } else if cm == counts[i + 1][j] {
                    0.25
                } else {
                    0.5
                };
                let eta = eta_grid[i] + frac * (eta_grid[i + 1] - eta_grid[i]);
                edge_points.insert((i, j, false), (delta_grid[j], eta));
            }
        }
    }

    // Join crossing points within each cell into segments, then chain the
    // segments into polylines.
    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for i in 0..eta_grid.len() - 1 {
        for j in 0..delta_grid.len() - 1 {
            let crossed: Vec<(f64, f64)> = [
                edge_points.get(&(i, j, true)),
                edge_points.get(&(i + 1, j, true)),
                edge_points.get(&(i, j, false)),
                edge_points.get(&(i, j + 1, false)),
            ]
            .into_iter()
            .flatten()
            .copied()
            .collect();
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                3 | 4 => {
                    let cx = crossed.iter().map(|p| p.0).sum::<f64>() / crossed.len() as f64;
                    let cy = crossed.iter().map(|p| p.1).sum::<f64>() / crossed.len() as f64;
                    for p in crossed {
                        segments.push((p, (cx, cy)));
                    }
                }
                _ => {}
            }
        }
    }
    let boundaries = chain_segments(&segments);

    let cell = (
        (delta_grid[delta_grid.len() - 1] - delta_grid[0]) / (delta_grid.len() - 1) as f64,
        (eta_grid[eta_grid.len() - 1] - eta_grid[0]) / (eta_grid.len() - 1) as f64,
    );
    let cusps = detect_cusps(&boundaries, &counts, eta_grid, delta_grid, cell, &count_at)?;

    Ok(BifurcationMap {
        q: q.value(),
        eta_grid: eta_grid.to_vec(),
        delta_grid: delta_grid.to_vec(),
        counts,
        boundaries,
        cusps,
    })
}

type Segment = ((f64, f64), (f64, f64));

fn chain_segments(segments: &[Segment]) -> Vec<Vec<(f64, f64)>> {
    let quant =
        |p: (f64, f64)| -> (i64, i64) { ((p.0 * 1e7).round() as i64, (p.1 * 1e7).round() as i64) };
    let mut adjacency: std::collections::HashMap<(i64, i64), Vec<usize>> =
        std::collections::HashMap::new();
    for (idx, seg) in segments.iter().enumerate() {
        adjacency.entry(quant(seg.0)).or_default().push(idx);
        adjacency.entry(quant(seg.1)).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();

    // Open chains first (from degree-1 endpoints), then remaining cycles.
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&i| {
            adjacency[&quant(segments[i].0)].len() == 1
                || adjacency[&quant(segments[i].1)].len() == 1
        })
        .collect();
    starts.extend(0..segments.len());
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut line = vec![a, b];
        loop {
            let tail = quant(*line.last().unwrap());
            let next = adjacency[&tail].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (p, r) = segments[s];
            line.push(if quant(p) == tail { r } else { p });
        }
        loop {
            let head = quant(line[0]);
            let next = adjacency[&head].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (p, r) = segments[s];
            line.insert(0, if quant(p) == head { r } else { p });
        }
        polylines.push(line);
    }
    polylines
}

/// Merge points within `radius` cells of each other into their running
/// average, in deterministic order.
fn merge_points(points: Vec<(f64, f64)>, cell: (f64, f64), radius: f64) -> Vec<(f64, f64)> {
    let mut merged: Vec<(f64, f64, usize)> = Vec::new();
    for c in points {
        let near = merged
            .iter_mut()
            .find(|(x, y, _)| ((c.0 - *x) / cell.0).hypot((c.1 - *y) / cell.1) < radius);
        match near {
            Some((x, y, n)) => {
                *x = (*x * *n as f64 + c.0) / (*n as f64 + 1.0);
                *y = (*y * *n as f64 + c.1) / (*n as f64 + 1.0);
                *n += 1;
            }
            None => merged.push((c.0, c.1, 1)),
        }
    }
    merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    merged.into_iter().map(|(x, y, _)| (x, y)).collect()
}

fn detect_cusps(
    boundaries: &[Vec<(f64, f64)>],
    counts: &[Vec<u32>],
    eta_grid: &[f64],
    delta_grid: &[f64],
    cell: (f64, f64),
    count_at: &dyn Fn(f64, f64) -> Result<u32>,
) -> Result<Vec<(f64, f64)>> {
    let delta_span = (delta_grid[0], *delta_grid.last().unwrap());
    let eta_span = (eta_grid[0], *eta_grid.last().unwrap());
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let interior = |p: (f64, f64)| -> bool {
        p.0 > delta_span.0 + 1.5 * cell.0
            && p.0 < delta_span.1 - 1.5 * cell.0
            && p.1 > eta_span.0 + 1.5 * cell.1
            && p.1 < eta_span.1 - 1.5 * cell.1
    };
    for line in boundaries {
        if line.len() >= 2 && line[0] != *line.last().unwrap() {
            for end in [line[0], *line.last().unwrap()] {
                if interior(end) {
                    candidates.push(end);
                }
            }
        }
        // Direction reversals, measured over a two-vertex stride to smooth
        // the staircase of edge-quantized positions.
        for k in 2..line.len().saturating_sub(2) {
            let unit = |a: (f64, f64), b: (f64, f64)| -> (f64, f64) {
                let (dx, dy) = ((b.0 - a.0) / cell.0, (b.1 - a.1) / cell.1);
                let n = dx.hypot(dy);
                if n == 0.0 {
                    (0.0, 0.0)
                } else {
                    (dx / n, dy / n)
                }
            };
            let incoming = unit(line[k - 2], line[k]);
            let outgoing = unit(line[k], line[k + 2]);
            let cosine = incoming.0 * outgoing.0 + incoming.1 * outgoing.1;
            if cosine < -0.17 && interior(line[k]) {
                candidates.push(line[k]);
            }
        }
    }

    let candidates = merge_points(candidates, cell, 2.0);
    let mut markers = Vec::new();
    for c in candidates {
        markers.push(refine_cusp(
            c, counts, eta_grid, delta_grid, cell, count_at,
        )?);
    }
    Ok(merge_points(markers, cell, 2.0))
}

/// Transverse widths of the multi-solution sliver near one candidate, taken
/// per grid column (`transpose == false`, widths along `η`) or per grid row
/// (`transpose == true`, widths along `Δc`). Each sample is
/// `(axis position, width, width midpoint)`, with the width ends located by
/// count bisection between adjacent grid lines.
fn sliver_widths(
    candidate: (f64, f64),
    counts: &[Vec<u32>],
    eta_grid: &[f64],
    delta_grid: &[f64],
    cell: (f64, f64),
    count_at: &dyn Fn(f64, f64) -> Result<u32>,
    transpose: bool,
) -> Result<Vec<(f64, f64, f64)>> {
    let (axis_grid, cross_grid): (&[f64], &[f64]) = if transpose {
        (eta_grid, delta_grid)
    } else {
        (delta_grid, eta_grid)
    };
    let (axis_pos, cross_pos) = if transpose {
        (candidate.1, candidate.0)
    } else {
        (candidate.0, candidate.1)
    };
    let (axis_cell, cross_cell) = if transpose {
        (cell.1, cell.0)
    } else {
        (cell.0, cell.1)
    };
    let count = |a: usize, c: usize| -> u32 {
        if transpose {
            counts[a][c]
        } else {
            counts[c][a]
        }
    };
    let count_xy = |axis: f64, cross: f64| -> Result<u32> {
        if transpose {
            count_at(axis, cross)
        } else {
            count_at(cross, axis)
        }
    };

    let cross_idx = cross_grid
        .iter()
        .position(|&y| y >= cross_pos)
        .unwrap_or(cross_grid.len() - 1);
    let mut samples = Vec::new();
    for (a, &x) in axis_grid.iter().enumerate() {
        if (x - axis_pos).abs() > 6.0 * axis_cell {
            continue;
        }
        // Maximal equal-count run strictly above both flanking counts,
        // nearest to the candidate.
        let lo = cross_idx.saturating_sub(8);
        let hi = (cross_idx + 8).min(cross_grid.len() - 1);
        let mut best: Option<(usize, usize)> = None;
        let mut i = lo;
        while i <= hi {
            let run_count = count(a, i);
            let mut j = i;
            while j < hi && count(a, j + 1) == run_count {
                j += 1;
            }
            let flanked = i > 0
                && j + 1 < cross_grid.len()
                && count(a, i - 1) < run_count
                && count(a, j + 1) < run_count;
            if flanked {
                let run_dist = |ri: usize, rj: usize| -> f64 {
                    if cross_pos >= cross_grid[ri] && cross_pos <= cross_grid[rj] {
                        0.0
                    } else {
                        (cross_grid[ri] - cross_pos)
                            .abs()
                            .min((cross_grid[rj] - cross_pos).abs())
                    }
                };
                let better = match best {
                    None => true,
                    Some((bi, bj)) => run_dist(i, j) < run_dist(bi, bj),
                };
                if better {
                    best = Some((i, j));
                }
            }
            i = j + 1;
        }
        let Some((ri, rj)) = best else { continue };
        if (cross_grid[ri] - cross_pos).abs() > 6.0 * cross_cell
            && (cross_grid[rj] - cross_pos).abs() > 6.0 * cross_cell
        {
            continue;
        }
        let run_count = count(a, ri);
        let bisect = |inside: f64, outside: f64| -> Result<f64> {
            let (mut i_pos, mut o_pos) = (inside, outside);
            for _ in 0..30 {
                let mid = 0.5 * (i_pos + o_pos);
                if count_xy(x, mid)? == run_count {
                    i_pos = mid;
                } else {
                    o_pos = mid;
                }
            }
            Ok(0.5 * (i_pos + o_pos))
        };
        let lo_edge = bisect(cross_grid[ri], cross_grid[ri - 1])?;
        let hi_edge = bisect(cross_grid[rj], cross_grid[rj + 1])?;
        samples.push((x, hi_edge - lo_edge, 0.5 * (lo_edge + hi_edge)));
    }
    Ok(samples)
}

/// Least-squares line `y = a + b·x`; `None` when degenerate.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det == 0.0 {
        return None;
    }
    Some(((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det))
}

/// Sharpen a cusp candidate by extrapolating the sliver's vanishing width.
///
/// Near a cusp the two folds bound a sliver whose transverse width shrinks
/// with a 3/2-power law along the cusp axis, so `width^(2/3)` is linear in
/// the axis coordinate and its zero locates the tip beyond the last grid
/// point that still resolves the sliver. Falls back to the candidate when
/// fewer than three width samples exist on either axis.
fn refine_cusp(
    candidate: (f64, f64),
    counts: &[Vec<u32>],
    eta_grid: &[f64],
    delta_grid: &[f64],
    cell: (f64, f64),
    count_at: &dyn Fn(f64, f64) -> Result<u32>,
) -> Result<(f64, f64)> {
    let per_column = sliver_widths(
        candidate, counts, eta_grid, delta_grid, cell, count_at, false,
    )?;
    let per_row = sliver_widths(
        candidate, counts, eta_grid, delta_grid, cell, count_at, true,
    )?;
    let (samples, transpose) = if per_column.len() >= per_row.len() {
        (per_column, false)
    } else {
        (per_row, true)
    };
    if samples.len() < 3 {
        return Ok(candidate);
    }
    let (axis_cell, cross_cell) = if transpose {
        (cell.1, cell.0)
    } else {
        (cell.0, cell.1)
    };
    let width_pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(x, g, _)| (x, g.max(0.0).powf(2.0 / 3.0)))
        .collect();
    let center_pts: Vec<(f64, f64)> = samples.iter().map(|&(x, _, m)| (x, m)).collect();
    let (Some((a_w, b_w)), Some((a_m, b_m))) = (fit_line(&width_pts), fit_line(&center_pts)) else {
        return Ok(candidate);
    };
    if b_w == 0.0 {
        return Ok(candidate);
    }
    let axis_pos = if transpose { candidate.1 } else { candidate.0 };
    let mut tip_axis = -a_w / b_w;
    if (tip_axis - axis_pos).abs() > 6.0 * axis_cell {
        tip_axis = axis_pos + 6.0 * axis_cell * (tip_axis - axis_pos).signum();
    }
    let mut tip_cross = a_m + b_m * tip_axis;
    let cross_pos = if transpose { candidate.0 } else { candidate.1 };
    if (tip_cross - cross_pos).abs() > 6.0 * cross_cell {
        tip_cross = cross_pos + 6.0 * cross_cell * (tip_cross - cross_pos).signum();
    }
    Ok(if transpose {
        (tip_cross, tip_axis)
    } else {
        (tip_axis, tip_cross)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::ConstOverlap;
    use crate::photon::{find_branches, input_output_curve};

    fn qm(q: f64) -> QuasiMomentum {
        QuasiMomentum::new(q).unwrap()
    }

    fn reference() -> SystemParams {
        SystemParams::new(350.0, 1.0e4, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn frozen_overlap_never_folds() {
        let p = reference();
        let r = bistability_residual_with_model(2.0, 1500.0, &p, &ConstOverlap(0.5)).unwrap();
        let d = 1500.0 - p.collective_coupling() * 0.5;
        assert_eq!(r.value, p.kappa * p.kappa + d * d);
        assert_eq!(r.error, 0.0);
        assert!(r.value > 0.0);
        assert!(fold_depths(1500.0, &p, &ConstOverlap(0.5))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn fold_roots_match_turning_points_of_the_io_curve() {
        let p = SystemParams {
            delta_c: 1500.0,
            ..reference()
        };
        let roots = fold_depths(1500.0, &p, &BlochOverlap::new(qm(0.0), 0)).unwrap();
        assert_eq!(roots.len(), 2, "roots: {roots:?}");

        let grid: Vec<f64> = (1..7000).map(|i| i as f64 * 0.002).collect();
        let curve = input_output_curve(&p, qm(0.0), 0, &grid).unwrap();
        let mut turns = Vec::new();
        for w in curve.windows(3) {
            let left = w[1].n_max - w[0].n_max;
            let right = w[2].n_max - w[1].n_max;
            if left * right < 0.0 {
                turns.push(w[1].n_ph);
            }
        }
        assert_eq!(turns.len(), 2, "turning points: {turns:?}");
        for (root, turn) in roots.iter().zip(&turns) {
            assert!(
                (root / p.u0 - turn).abs() < 0.01 * turn,
                "fold at n_ph={} vs turning point {}",
                root / p.u0,
                turn
            );
        }
    }

    fn shallow_quadratic_depths(delta_c: f64, p: &SystemParams) -> (f64, f64) {
        let nu0 = p.collective_coupling();
        let delta = delta_c - nu0 / 2.0;
        let disc = (delta * delta - 3.0 * p.kappa * p.kappa).sqrt();
        (
            16.0 * (-2.0 * delta - disc) / (3.0 * nu0),
            16.0 * (-2.0 * delta + disc) / (3.0 * nu0),
        )
    }

    #[test]
    fn fold_roots_solve_the_quadratic_for_a_linear_overlap() {
        let p = reference();
        let linear = crate::overlap::PolynomialOverlap {
            center: 0.0,
            coeffs: vec![0.5, -1.0 / 16.0],
        };
        for delta_c in [4350.0, 4200.0, 4000.0] {
            let roots = fold_depths(delta_c, &p, &linear).unwrap();
            assert_eq!(roots.len(), 2);
            let (lo, hi) = shallow_quadratic_depths(delta_c, &p);
            assert!((roots[0] - lo).abs() < 1e-6 * lo, "{} vs {lo}", roots[0]);
            assert!((roots[1] - hi).abs() < 1e-6 * hi, "{} vs {hi}", roots[1]);
        }
    }

    #[test]
    fn shallow_fold_roots_track_the_quadratic() {
        // With the full overlap the quadratic stays a few percent off even
        // at its best: the overlap curvature shifts the lower root by just
        // over 1% throughout the shallow regime.
        let p = reference();
        let delta_c = 4300.0;
        let roots = fold_depths(delta_c, &p, &BlochOverlap::new(qm(0.0), 0)).unwrap();
        assert_eq!(roots.len(), 2);
        let (lo, hi) = shallow_quadratic_depths(delta_c, &p);
        assert!(
            (roots[0] - lo).abs() < 0.02 * lo,
            "lower root {} vs quadratic {lo}",
            roots[0]
        );
        assert!(
            (roots[1] - hi).abs() < 0.01 * hi,
            "upper root {} vs quadratic {hi}",
            roots[1]
        );
    }

    #[test]
    fn critical_point_reference_values() {
        let cp = critical_point_numeric(qm(0.0), &reference(), (4000.0, 4800.0)).unwrap();
        assert!(
            (cp.eta_cr - 325.0).abs() < 0.02 * 325.0,
            "eta_cr = {}",
            cp.eta_cr
        );
        assert!(
            (cp.delta_0 - 4393.8).abs() < 0.01 * 4393.8,
            "delta_0 = {}",
            cp.delta_0
        );
        assert!((cp.n_0 - 0.647).abs() < 0.02 * 0.647, "n_0 = {}", cp.n_0);
    }

    #[test]
    fn critical_point_degeneracy_residuals_vanish() {
        let p = reference();
        let cp = critical_point_numeric(qm(0.0), &p, (4000.0, 4800.0)).unwrap();
        let v0 = cp.n_0 * p.u0;
        let scale = p.kappa * p.kappa;
        let r = bistability_residual(v0, cp.delta_0, &p, qm(0.0)).unwrap();
        assert!(r.value.abs() / scale < 1e-8, "residual {}", r.value / scale);
        let h = 1e-5;
        let r_plus = bistability_residual(v0 + h, cp.delta_0, &p, qm(0.0)).unwrap();
        let r_minus = bistability_residual(v0 - h, cp.delta_0, &p, qm(0.0)).unwrap();
        let slope = (r_plus.value - r_minus.value) / (2.0 * h);
        let curvature = (r_plus.value + r_minus.value - 2.0 * r.value) / (h * h);
        assert!(
            slope.abs() < 1e-3 * curvature.abs().max(scale),
            "slope {slope} vs curvature {curvature}"
        );
    }

    #[test]
    fn onset_window_errors_report_the_side() {
        let p = reference();
        match critical_point_numeric(qm(0.0), &p, (4500.0, 4800.0)) {
            Err(Error::OnsetOutsideWindow {
                already_supercritical,
                ..
            }) => assert!(already_supercritical),
            other => panic!("expected window error, got {other:?}"),
        }
        match critical_point_numeric(qm(0.0), &p, (3000.0, 3500.0)) {
            Err(Error::OnsetOutsideWindow {
                already_supercritical,
                ..
            }) => assert!(!already_supercritical),
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn no_window_above_the_onset() {
        assert!(eta_window(qm(0.0), 4500.0, &reference()).unwrap().is_none());
    }

    #[test]
    fn window_brackets_the_fold_range() {
        let p = reference();
        let (eta_1, eta_2) = eta_window(qm(0.0), 1500.0, &p).unwrap().unwrap();
        assert!(eta_1 < eta_2);
        // At the window ends the pump sustains the fold photon numbers of
        // the s-shaped input-output curve.
        let inside = SystemParams {
            eta: 0.5 * (eta_1 + eta_2),
            delta_c: 1500.0,
            ..p
        };
        assert_eq!(find_branches(qm(0.0), &inside, 0).unwrap().count(), 3);
        let below = SystemParams {
            eta: eta_1 * 0.95,
            ..inside
        };
        assert_eq!(find_branches(qm(0.0), &below, 0).unwrap().count(), 1);
        let above = SystemParams {
            eta: eta_2 * 1.05,
            ..inside
        };
        assert_eq!(find_branches(qm(0.0), &above, 0).unwrap().count(), 1);
    }

    #[test]
    fn analytic_critical_pump_matches_numeric_at_band_center() {
        let p = reference();
        let analytic = eta_cr_analytic_shallow(qm(0.0), &p);
        assert!((analytic - 325.0).abs() < 0.1, "analytic = {analytic}");
        let numeric = critical_point_numeric(qm(0.0), &p, (4000.0, 4800.0))
            .unwrap()
            .eta_cr;
        assert!(
            (analytic - numeric).abs() < 0.05 * numeric,
            "analytic {analytic} vs numeric {numeric}"
        );
        let printed = eta_cr_analytic_shallow_with(qm(0.0), &p, AnalyticConstant::Sqrt8);
        assert!((printed * 4.0 - analytic).abs() < 1e-9 * analytic);
    }

    #[test]
    fn analytic_profile_and_edge_value() {
        let p = reference();
        let at0 = eta_cr_analytic_shallow(qm(0.0), &p);
        for q in [0.25f64, 0.5, 0.75] {
            let expect = at0 * (1.0 - q * q).sqrt();
            let got = eta_cr_analytic_shallow(qm(q), &p);
            assert!((got - expect).abs() < 1e-12 * at0);
        }
        assert_eq!(eta_cr_analytic_shallow(qm(1.0), &p), 0.0);
        assert_eq!(eta_cr_analytic_shallow(qm(-1.0), &p), 0.0);
    }

    #[test]
    fn numeric_critical_pump_follows_the_shallow_law() {
        let p = reference();
        let at0 = critical_point_numeric(qm(0.0), &p, (4000.0, 4800.0)).unwrap();
        let mut prev = at0.eta_cr;
        for q in [0.25, 0.5] {
            let cp = critical_point_numeric(qm(q), &p, (4000.0, 4800.0)).unwrap();
            assert!(cp.eta_cr < prev, "eta_cr not decreasing at q={q}");
            let ratio = cp.eta_cr / at0.eta_cr;
            let law = (1.0f64 - q * q).sqrt();
            assert!(
                (ratio - law).abs() < 0.05 * law,
                "q={q}: ratio {ratio} vs {law}"
            );
            prev = cp.eta_cr;
        }
    }

    fn crescent_map() -> (SystemParams, Vec<f64>, Vec<f64>, BifurcationMap) {
        let p = reference();
        let eta_grid: Vec<f64> = (0..14).map(|i| 315.0 + 15.0 * i as f64).collect();
        let delta_grid: Vec<f64> = (0..41).map(|j| 4080.0 + 8.0 * j as f64).collect();
        let map = bifurcation_map(qm(0.0), &p, &eta_grid, &delta_grid).unwrap();
        (p, eta_grid, delta_grid, map)
    }

    #[test]
    fn band_center_map_has_a_crescent_with_the_cusp_at_the_onset() {
        let (p, _, _, map) = crescent_map();

        let mut seen = std::collections::BTreeSet::new();
        for row in &map.counts {
            seen.extend(row.iter().copied());
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![1, 3]);
        assert!(!map.boundaries.is_empty());

        let cp = critical_point_numeric(qm(0.0), &p, (4000.0, 4800.0)).unwrap();
        let nearest = map
            .cusps
            .iter()
            .map(|&(dc, eta)| ((dc - cp.delta_0) / 8.0).hypot((eta - cp.eta_cr) / 15.0))
            .fold(f64::INFINITY, f64::min);
        assert!(
            nearest < 2.0,
            "no cusp within 2 cells of ({}, {}); markers: {:?}",
            cp.delta_0,
            cp.eta_cr,
            map.cusps
        );
    }

    #[test]
    fn count_changes_by_two_across_a_fold() {
        let (_, _, _, map) = crescent_map();
        let mut checked = 0;
        for i in 0..map.counts.len() {
            for j in 0..map.counts[i].len() - 1 {
                if map.counts[i][j] != map.counts[i][j + 1] {
                    assert_eq!(
                        map.counts[i][j].abs_diff(map.counts[i][j + 1]),
                        2,
                        "at eta={}, delta={}..{}",
                        map.eta_grid[i],
                        map.delta_grid[j],
                        map.delta_grid[j + 1]
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn map_boundaries_agree_with_exact_branch_counts() {
        let (p, eta_grid, delta_grid, map) = crescent_map();
        let mut sampled = 0;
        'rows: for i in [5usize, 7, 9] {
            for j in 0..delta_grid.len() - 1 {
                if map.counts[i][j] != map.counts[i][j + 1] {
                    let count_exact = |dc: f64| {
                        let pp = SystemParams {
                            eta: eta_grid[i],
                            delta_c: dc,
                            ..p
                        };
                        find_branches(qm(0.0), &pp, 0).unwrap().count()
                    };
                    assert_eq!(count_exact(delta_grid[j]), map.counts[i][j] as usize);
                    assert_eq!(
                        count_exact(delta_grid[j + 1]),
                        map.counts[i][j + 1] as usize
                    );
                    sampled += 1;
                    continue 'rows;
                }
            }
        }
        assert!(sampled >= 2);
    }

    #[test]
    fn low_pump_map_is_monostable() {
        let p = reference();
        let eta_grid: Vec<f64> = vec![10.0, 50.0, 100.0];
        let delta_grid: Vec<f64> = (0..11).map(|j| 4000.0 + 50.0 * j as f64).collect();
        let map = bifurcation_map(qm(0.0), &p, &eta_grid, &delta_grid).unwrap();
        for row in &map.counts {
            assert!(row.iter().all(|&c| c == 1));
        }
        assert!(map.boundaries.is_empty());
    }

    #[test]
    fn band_edge_map_has_a_five_count_region() {
        let p = reference();
        let eta_grid: Vec<f64> = (0..26).map(|i| 800.0 + 16.0 * i as f64).collect();
        let delta_grid: Vec<f64> = (0..26).map(|j| 1300.0 + 20.0 * j as f64).collect();
        let map = bifurcation_map(qm(0.95), &p, &eta_grid, &delta_grid).unwrap();
        let has_five = map.counts.iter().any(|row| row.contains(&5));
        assert!(has_five, "no five-solution region found");
    }
}
