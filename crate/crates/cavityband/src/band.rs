//! Energy-versus-quasi-momentum diagrams with loop structures.
//!
//! Two independent routes produce the same diagram: direct variational
//! extremization of the coupled energy functional over the Bloch coefficients
//! (Method 1) and self-consistent root finding on the photon number
//! (Method 2, [`crate::photon`]). [`cross_validate`] checks their agreement.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bloch::{build_hamiltonian, eigen_residual, BlochState, DEFAULT_R};
use crate::error::{Error, Result};
use crate::overlap::overlap_f;
use crate::params::{LatticeDepth, QuasiMomentum, SystemParams};
use crate::photon::{find_branches, state_function_g, PhotonBranch};

/// Projected-gradient convergence threshold, per atom.
const GRAD_TOL: f64 = 1e-9;

/// Seed of the deterministic multistart generator.
const MULTISTART_SEED: u64 = 0x5EED_CAB5;

/// Position of a band point within its column of coexisting solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    /// Lowest energy at this quasi-momentum.
    Lower,
    /// Between the extremes.
    Middle,
    /// Highest energy at this quasi-momentum.
    Upper,
    /// Part of a connectivity component that never reaches the swept edges.
    Detached,
}

impl BranchLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchLabel::Lower => "lower",
            BranchLabel::Middle => "middle",
            BranchLabel::Upper => "upper",
            BranchLabel::Detached => "detached",
        }
    }
}

/// One self-consistent solution at one quasi-momentum of a band sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandPoint {
    pub q: f64,
    pub label: BranchLabel,
    /// Energy of the whole coupled system in `E_R`.
    pub energy_total: f64,
    /// `energy_total / N`, the scale on which diagrams are plotted.
    pub energy_per_atom: f64,
    pub n_ph: f64,
    pub v: f64,
    pub mu: f64,
    pub f: f64,
}

/// A connected set of band points under adjacent-column linking.
#[derive(Debug, Clone, Serialize)]
pub struct Component {
    /// Indices into [`BandDiagram::points`].
    pub point_ids: Vec<usize>,
    /// Whether the component reaches the first or last quasi-momentum of the
    /// swept grid.
    pub touches_edge: bool,
}

/// A full band diagram over a quasi-momentum grid.
#[derive(Debug, Clone, Serialize)]
pub struct BandDiagram {
    pub params: SystemParams,
    pub band: usize,
    pub q_grid: Vec<f64>,
    pub points: Vec<BandPoint>,
    /// Nearest-continuation links between points in adjacent columns.
    pub links: Vec<(usize, usize)>,
    pub components: Vec<Component>,
}

impl BandDiagram {
    /// Indices of the points at the grid's `i`-th quasi-momentum.
    pub fn column(&self, i: usize) -> Vec<usize> {
        let q = self.q_grid[i];
        (0..self.points.len())
            .filter(|&j| self.points[j].q == q)
            .collect()
    }
}

/// Total energy and chemical potential of a steady state.
///
/// `E = N·Σ_n (q+2n)²·a_n² − (η²/κ)·arctan[(Δc − N·U0·f)/κ]`, with
/// `μ = Σ_n (q+2n)²·a_n² + v·f` the band eigenvalue of the same state.
pub fn energy_of_branch(
    branch: &PhotonBranch,
    state: &BlochState,
    params: &SystemParams,
) -> (f64, f64) {
    let kin = state.kinetic();
    let f = overlap_f(state);
    let d = params.delta_c - params.collective_coupling() * f;
    let energy =
        params.n_atoms * kin - params.eta * params.eta / params.kappa * (d / params.kappa).atan();
    (energy, kin + branch.v * f)
}

/// One converged extremum of the coupled energy functional.
#[derive(Debug, Clone)]
pub struct Extremum {
    pub energy: f64,
    pub state: BlochState,
}

/// Direct variational extremization of the coupled energy over normalized
/// Bloch coefficients (Method 1).
///
/// Runs a damped Newton iteration on the Lagrange system of the energy
/// functional restricted to the unit sphere, re-projecting the norm each
/// step. Saddles converge as readily as minima, which the interior branches
/// of a loop require. Seeds are the self-consistent solutions of Method 2,
/// `multistart` noisy copies of each, and 8 reproducible random unit
/// vectors. Converged first-band extrema with projected gradient per atom
/// below 1e-9 are deduplicated and returned sorted by photon number.
pub fn method1_extremize(
    q: QuasiMomentum,
    params: &SystemParams,
    r: usize,
    multistart: usize,
) -> Result<Vec<Extremum>> {
    params.validate()?;
    if r < 4 {
        return Err(Error::InvalidParams(vec![format!(
            "truncation order {r} too small for extremization, need at least 4"
        )]));
    }
    let dim = 2 * r + 1;
    let mut seeds: Vec<DVector<f64>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(MULTISTART_SEED);

    let method2 = find_branches(q, params, 0)?;
    for b in &method2.branches {
        let ground = ground_vector(q, b.v, r);
        seeds.push(ground.clone());
        for _ in 0..multistart {
            let mut s = ground.clone();
            for x in s.iter_mut() {
                *x += 0.05 * standard_normal(&mut rng);
            }
            s.normalize_mut();
            seeds.push(s);
        }
    }
    for _ in 0..8 {
        let mut s = DVector::from_fn(dim, |_, _| standard_normal(&mut rng));
        s.normalize_mut();
        seeds.push(s);
    }

    let mut found: Vec<Extremum> = Vec::new();
    for seed in seeds {
        let Some(ext) = newton_extremize(seed, q, params, r) else {
            continue;
        };
        let duplicate = found.iter().any(|e| {
            (e.state.v - ext.state.v).abs()
                <= 1e-6 * e.state.v.abs().max(ext.state.v.abs()).max(1e-9)
        });
        if !duplicate {
            found.push(ext);
        }
    }
    if found.is_empty() {
        return Err(Error::ExtremizationFailure { q: q.value() });
    }
    found.sort_by(|a, b| a.state.v.total_cmp(&b.state.v));
    Ok(found)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniform draws.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn ground_vector(q: QuasiMomentum, v: f64, r: usize) -> DVector<f64> {
    let h = build_hamiltonian(q, LatticeDepth::new(v).unwrap(), r);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vec =
        DVector::from_iterator(2 * r + 1, eig.eigenvectors.column(order[0]).iter().copied());
    fix_sign(&mut vec);
    vec
}

fn fix_sign(a: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..a.len() {
        if a[i].abs() > a[best].abs() + 1e-14 {
            best = i;
        }
    }
    if a[best] < 0.0 {
        *a *= -1.0;
    }
}

/// Overlap gradient `w = M·a` with `w_j = a_j/2 + (a_{j−1} + a_{j+1})/4`.
fn overlap_vector(a: &DVector<f64>) -> DVector<f64> {
    let n = a.len();
    DVector::from_fn(n, |j, _| {
        let left = if j > 0 { a[j - 1] } else { 0.0 };
        let right = if j + 1 < n { a[j + 1] } else { 0.0 };
        0.5 * a[j] + 0.25 * (left + right)
    })
}

struct EnergyGeometry {
    kin_diag: Vec<f64>,
    n: f64,
    eta_sq: f64,
    kappa: f64,
    nu0: f64,
    delta_c: f64,
}

impl EnergyGeometry {
    fn new(q: QuasiMomentum, params: &SystemParams, r: usize) -> Self {
        let ri = r as i64;
        Self {
            kin_diag: (-ri..=ri)
                .map(|n| (q.value() + 2.0 * n as f64).powi(2))
                .collect(),
            n: params.n_atoms,
            eta_sq: params.eta * params.eta,
            kappa: params.kappa,
            nu0: params.collective_coupling(),
            delta_c: params.delta_c,
        }
    }

    fn f_of(&self, a: &DVector<f64>) -> f64 {
        a.dot(&overlap_vector(a))
    }

    fn detuning(&self, f: f64) -> f64 {
        self.delta_c - self.nu0 * f
    }

    fn energy(&self, a: &DVector<f64>) -> f64 {
        let kin: f64 = a.iter().zip(&self.kin_diag).map(|(x, k)| k * x * x).sum();
        let d = self.detuning(self.f_of(a));
        self.n * kin - self.eta_sq / self.kappa * (d / self.kappa).atan()
    }

    fn gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        let w = overlap_vector(a);
        let d = self.detuning(a.dot(&w));
        let c = self.eta_sq * self.nu0 / (self.kappa * self.kappa + d * d);
        DVector::from_fn(a.len(), |j, _| {
            2.0 * self.n * self.kin_diag[j] * a[j] + 2.0 * c * w[j]
        })
    }

    fn hessian(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let w = overlap_vector(a);
        let f = a.dot(&w);
        let d = self.detuning(f);
        let denom = self.kappa * self.kappa + d * d;
        let u0 = self.nu0 / self.n;
        let c = self.eta_sq * self.n * u0 / denom;
        let rho_n = self.eta_sq * self.n * self.n * u0 * u0 * d / (denom * denom);
        let dim = a.len();
        let mut h = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            h[(j, j)] = 2.0 * self.n * self.kin_diag[j] + c;
            if j + 1 < dim {
                h[(j, j + 1)] = 0.5 * c;
                h[(j + 1, j)] = 0.5 * c;
            }
        }
        h + 8.0 * rho_n * &w * w.transpose()
    }
}

fn newton_extremize(
    mut a: DVector<f64>,
    q: QuasiMomentum,
    params: &SystemParams,
    r: usize,
) -> Option<Extremum> {
    let geo = EnergyGeometry::new(q, params, r);
    let dim = a.len();
    let mut g = geo.gradient(&a);
    let mut lambda = 0.5 * a.dot(&g);

    let resid_norm = |g: &DVector<f64>, a: &DVector<f64>, lambda: f64| -> f64 {
        let mut s = 0.0;
        for j in 0..g.len() {
            let res = g[j] - 2.0 * lambda * a[j];
            s += res * res;
        }
        s.sqrt()
    };

    for _ in 0..120 {
        let projected: f64 = {
            let ga = g.dot(&a);
            let mut s = 0.0;
            for j in 0..dim {
                let p = (g[j] - ga * a[j]) / params.n_atoms;
                s += p * p;
            }
            s.sqrt()
        };
        if projected < GRAD_TOL {
            return finish_extremum(a, lambda, &geo, q, params, r);
        }

        let h = geo.hessian(&a);
        let mut jac = DMatrix::zeros(dim + 1, dim + 1);
        for i in 0..dim {
            for j in 0..dim {
                jac[(i, j)] = h[(i, j)];
            }
            jac[(i, i)] -= 2.0 * lambda;
            jac[(i, dim)] = -2.0 * a[i];
            jac[(dim, i)] = -2.0 * a[i];
        }
        let mut rhs = DVector::zeros(dim + 1);
        for j in 0..dim {
            rhs[j] = -(g[j] - 2.0 * lambda * a[j]);
        }
        rhs[dim] = a.dot(&a) - 1.0;
        let delta = jac.lu().solve(&rhs)?;

        let base = resid_norm(&g, &a, lambda);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut a_try = a.clone();
            for j in 0..dim {
                a_try[j] += alpha * delta[j];
            }
            a_try.normalize_mut();
            let l_try = lambda + alpha * delta[dim];
            let g_try = geo.gradient(&a_try);
            if resid_norm(&g_try, &a_try, l_try) <= (1.0 - 1e-4 * alpha) * base {
                a = a_try;
                lambda = l_try;
                g = g_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Flat residual landscape; take the full step once and continue.
            for j in 0..dim {
                a[j] += delta[j];
            }
            a.normalize_mut();
            lambda += delta[dim];
            g = geo.gradient(&a);
        }
    }
    None
}

fn finish_extremum(
    mut a: DVector<f64>,
    lambda: f64,
    geo: &EnergyGeometry,
    q: QuasiMomentum,
    params: &SystemParams,
    r: usize,
) -> Option<Extremum> {
    fix_sign(&mut a);
    let f = geo.f_of(&a);
    let d = geo.detuning(f);
    let v_eff = params.u0 * geo.eta_sq / (geo.kappa * geo.kappa + d * d);
    let mu = lambda / params.n_atoms;

    // Band-character filter: keep only states whose eigenvalue is the
    // lowest of the self-consistent lattice.
    let h = build_hamiltonian(q, LatticeDepth::new(v_eff).ok()?, r);
    let eigs = h.symmetric_eigen().eigenvalues;
    let below = eigs
        .iter()
        .filter(|&&e| e < mu - 1e-9 * mu.abs().max(1.0))
        .count();
    if below != 0 {
        return None;
    }

    let state = BlochState::from_parts(q.value(), 0, v_eff, a.iter().copied().collect(), mu, r);
    if eigen_residual(&state) > 1e-6 {
        return None;
    }
    Some(Extremum {
        energy: geo.energy(&a),
        state,
    })
}

/// Full band diagram over `q_grid` from the self-consistent solver, with
/// branch linking, connectivity components, and labels.
///
/// Columns are computed in parallel; linking and labeling run as a
/// deterministic single-threaded pass. Branches in adjacent columns are
/// linked greedily by nearest distance in the `(E/N, ln(1+n_ph))` plane.
/// Components that never reach the swept grid's end columns are labeled
/// [`BranchLabel::Detached`]; the rest are ranked by energy per column.
pub fn band_sweep(params: &SystemParams, band: usize, q_grid: &[f64]) -> Result<BandDiagram> {
    params.validate()?;
    if q_grid.is_empty() {
        return Err(Error::InvalidParams(vec![
            "empty quasi-momentum grid".into()
        ]));
    }
    if q_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams(vec![
            "quasi-momentum grid must be strictly ascending".into(),
        ]));
    }
    let columns: Vec<Vec<BandPoint>> = q_grid
        .par_iter()
        .map(|&qv| {
            let q = QuasiMomentum::new(qv)?;
            let set = find_branches(q, params, band)?;
            set.branches
                .iter()
                .map(|b| {
                    Ok(BandPoint {
                        q: qv,
                        label: BranchLabel::Lower,
                        energy_total: b.energy_total,
                        energy_per_atom: b.energy_total / params.n_atoms,
                        n_ph: b.n_ph,
                        v: b.v,
                        mu: b.mu,
                        f: b.f,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut points: Vec<BandPoint> = Vec::new();
    let mut column_ids: Vec<Vec<usize>> = Vec::with_capacity(columns.len());
    for col in columns {
        let start = points.len();
        column_ids.push((start..start + col.len()).collect());
        points.extend(col);
    }

    let mut links = Vec::new();
    for w in column_ids.windows(2) {
        let pair = link_columns(&points, &w[0], &w[1]);
        // Where the branch count changes between columns, the leftover
        // branches coalesce pairwise at a fold between the two columns, so
        // close the curve by linking them to each other.
        for side in [&w[0], &w[1]] {
            let mut unmatched: Vec<usize> = side
                .iter()
                .copied()
                .filter(|&id| pair.iter().all(|&(a, b)| a != id && b != id))
                .collect();
            unmatched.sort_by(|&a, &b| points[a].n_ph.total_cmp(&points[b].n_ph));
            for fold_pair in unmatched.chunks(2) {
                if let [a, b] = *fold_pair {
                    links.push((a, b));
                }
            }
        }
        links.extend(pair);
    }

    let mut uf = UnionFind::new(points.len());
    for &(a, b) in &links {
        uf.union(a, b);
    }
    let mut components: Vec<Component> = Vec::new();
    let mut root_slot = vec![usize::MAX; points.len()];
    for id in 0..points.len() {
        let root = uf.find(id);
        if root_slot[root] == usize::MAX {
            root_slot[root] = components.len();
            components.push(Component {
                point_ids: Vec::new(),
                touches_edge: false,
            });
        }
        components[root_slot[root]].point_ids.push(id);
    }
    let first = column_ids.first().unwrap();
    let last = column_ids.last().unwrap();
    for comp in &mut components {
        comp.touches_edge = comp
            .point_ids
            .iter()
            .any(|id| first.contains(id) || last.contains(id));
    }

    for ids in &column_ids {
        let mut order: Vec<usize> = ids.clone();
        order.sort_by(|&a, &b| {
            points[a]
                .energy_per_atom
                .total_cmp(&points[b].energy_per_atom)
        });
        let m = order.len();
        for (rank, &id) in order.iter().enumerate() {
            points[id].label = if rank == 0 {
                BranchLabel::Lower
            } else if rank == m - 1 {
                BranchLabel::Upper
            } else {
                BranchLabel::Middle
            };
        }
    }
    for comp in &components {
        if !comp.touches_edge {
            for &id in &comp.point_ids {
                points[id].label = BranchLabel::Detached;
            }
        }
    }

    Ok(BandDiagram {
        params: *params,
        band,
        q_grid: q_grid.to_vec(),
        points,
        links,
        components,
    })
}

fn link_columns(points: &[BandPoint], left: &[usize], right: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(left.len() * right.len());
    for &i in left {
        for &j in right {
            let de = points[i].energy_per_atom - points[j].energy_per_atom;
            let dn = (1.0 + points[i].n_ph).ln() - (1.0 + points[j].n_ph).ln();
            pairs.push((de.hypot(dn), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let budget = left.len().min(right.len());
    let mut used_l = vec![false; points.len()];
    let mut used_r = vec![false; points.len()];
    let mut out = Vec::with_capacity(budget);
    for (_, i, j) in pairs {
        if out.len() == budget {
            break;
        }
        if !used_l[i] && !used_r[j] {
            used_l[i] = true;
            used_r[j] = true;
            out.push((i, j));
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// A refined mid-zone point where two branches coalesce.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LoopEndpoint {
    pub q: f64,
    /// Photon number of the merging pair at the endpoint.
    pub n_ph: f64,
    /// Residual separation of the pair at the final bracket.
    pub gap: f64,
}

/// Locates a loop tip by bisection on the quasi-momentum between a point
/// with more branches and one with fewer.
///
/// The merging pair encloses a lobe of the state function whose extremum
/// crosses zero exactly at the fold, so each bisection step classifies the
/// midpoint by a ternary search on that extremum rather than by re-scanning.
/// This resolves the tip to machine precision in `q` even after the pair
/// becomes too close for grid detection. Stops once the pair's
/// photon-number gap drops below 1e-8 or the `q` bracket is exhausted.
pub fn refine_loop_endpoint(
    params: &SystemParams,
    band: usize,
    q_multi: f64,
    q_single: f64,
) -> Result<LoopEndpoint> {
    let roots_at = |qv: f64| -> Result<Vec<f64>> {
        let set = find_branches(QuasiMomentum::new(qv)?, params, band)?;
        Ok(set.branches.iter().map(|b| b.v).collect())
    };
    let g_at = |qv: f64, v: f64| -> Result<f64> {
        state_function_g(v, QuasiMomentum::new(qv)?, params, band)
    };
    let multi = roots_at(q_multi)?;
    let single = roots_at(q_single)?;
    if multi.len() <= single.len() {
        return Err(Error::NotFound(format!(
            "no branch-count drop between q={q_multi} ({} branches) and q={q_single} ({})",
            multi.len(),
            single.len()
        )));
    }

    // The merging pair is the closest adjacent root pair on the multi side.
    let mut pair = 0;
    for i in 1..multi.len() - 1 {
        if multi[i + 1] - multi[i] < multi[pair + 1] - multi[pair] {
            pair = i;
        }
    }
    let (mut v1, mut v2) = (multi[pair], multi[pair + 1]);
    let sign = g_at(q_multi, 0.5 * (v1 + v2))?.signum();

    // Window endpoints strictly outside the lobe, clear of the neighbors.
    let below = if pair > 0 { multi[pair - 1] } else { 0.0 };
    let above = if pair + 2 < multi.len() {
        multi[pair + 2]
    } else {
        v2 + 4.0 * (v2 - v1).max(0.25 * v2)
    };
    let mut w_lo = 0.5 * (below + v1);
    for _ in 0..60 {
        if sign * g_at(q_multi, w_lo)? < 0.0 {
            break;
        }
        w_lo = 0.5 * (w_lo + v1);
    }
    let mut w_hi = 0.5 * (v2 + above);
    for _ in 0..60 {
        if sign * g_at(q_multi, w_hi)? < 0.0 {
            break;
        }
        w_hi = 0.5 * (w_hi + v2);
    }

    let lobe = |qv: f64| -> Result<Option<(f64, f64)>> {
        let (mut a, mut b) = (w_lo, w_hi);
        for _ in 0..200 {
            if (b - a).abs() <= 1e-13 * b.abs().max(a.abs()) {
                break;
            }
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if sign * g_at(qv, m1)? < sign * g_at(qv, m2)? {
                a = m1;
            } else {
                b = m2;
            }
        }
        let peak = 0.5 * (a + b);
        if sign * g_at(qv, peak)? <= 0.0 {
            return Ok(None);
        }
        let half = |mut lo: f64, mut hi: f64| -> Result<f64> {
            // sign*g < 0 at lo, > 0 at hi (or reversed); plain bisection.
            let mut g_lo = sign * g_at(qv, lo)?;
            for _ in 0..200 {
                if (hi - lo).abs() <= 1e-14 * hi.abs().max(lo.abs()).max(1e-14) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let gm = sign * g_at(qv, mid)?;
                if gm == 0.0 {
                    return Ok(mid);
                }
                if g_lo * gm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    g_lo = gm;
                }
            }
            Ok(0.5 * (lo + hi))
        };
        Ok(Some((half(w_lo, peak)?, half(w_hi, peak)?)))
    };

    let mut inside = q_multi;
    let mut outside = q_single;
    let mut gap = (v2 - v1).abs() / params.u0.abs();
    while (inside - outside).abs() > 8.0 * f64::EPSILON * inside.abs().max(1.0) && gap > 1e-8 {
        let mid = 0.5 * (inside + outside);
        match lobe(mid)? {
            Some((a, b)) => {
                v1 = a.min(b);
                v2 = a.max(b);
                gap = (v2 - v1) / params.u0.abs();
                inside = mid;
            }
            None => outside = mid,
        }
    }
    Ok(LoopEndpoint {
        q: 0.5 * (inside + outside),
        n_ph: 0.5 * (v1 + v2) / params.u0,
        gap,
    })
}

/// Maximum relative energy discrepancy between the two methods over a grid.
///
/// Runs both methods at every quasi-momentum of the first band; branch
/// counts must match exactly, and the returned figure is
/// `max |E₁ − E₂| / max(1, |E₂|)`.
pub fn cross_validate(q_grid: &[f64], params: &SystemParams) -> Result<f64> {
    let worst = q_grid
        .par_iter()
        .map(|&qv| {
            let q = QuasiMomentum::new(qv)?;
            let m2 = find_branches(q, params, 0)?;
            let m1 = method1_extremize(q, params, DEFAULT_R, 4)?;
            if m1.len() != m2.count() {
                return Err(Error::BranchCountMismatch {
                    q: qv,
                    m1: m1.len(),
                    m2: m2.count(),
                });
            }
            let mut e1: Vec<f64> = m1.iter().map(|e| e.energy).collect();
            let mut e2: Vec<f64> = m2.branches.iter().map(|b| b.energy_total).collect();
            e1.sort_by(f64::total_cmp);
            e2.sort_by(f64::total_cmp);
            Ok(e1
                .iter()
                .zip(&e2)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                .fold(0.0, f64::max))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(worst)
}

/// Central-difference energy slopes per atom across a band edge, one per
/// branch present at the edge.
///
/// The point beyond the zone is folded back by the reciprocal-lattice
/// periodicity `E(q+2) = E(q)`, so the difference probes the smoothness of
/// the periodic continuation rather than returning a one-sided kink.
pub fn edge_slopes(params: &SystemParams, band: usize, q_edge: f64, h: f64) -> Result<Vec<f64>> {
    if q_edge != 1.0 && q_edge != -1.0 {
        return Err(Error::InvalidParams(vec![format!(
            "edge slope is defined at q = ±1, got {q_edge}"
        )]));
    }
    let fold = |qv: f64| -> f64 {
        if qv > 1.0 {
            qv - 2.0
        } else if qv < -1.0 {
            qv + 2.0
        } else {
            qv
        }
    };
    let at = |qv: f64| find_branches(QuasiMomentum::new(fold(qv))?, params, band);
    let edge = at(q_edge)?;
    let inner = at(q_edge - h)?;
    let outer = at(q_edge + h)?;
    let nearest = |set: &crate::photon::BranchSet, n: f64| -> f64 {
        set.branches
            .iter()
            .min_by(|a, b| (a.n_ph - n).abs().total_cmp(&(b.n_ph - n).abs()))
            .map(|b| b.energy_total / params.n_atoms)
            .unwrap()
    };
    Ok(edge
        .branches
        .iter()
        .map(|b| (nearest(&outer, b.n_ph) - nearest(&inner, b.n_ph)) / (2.0 * h))
        .collect())
}
