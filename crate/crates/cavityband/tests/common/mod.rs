//! Checks shared between integration test targets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cavityband::overlap::{BlochOverlap, OverlapModel};
use cavityband::photon::find_branches;
use cavityband::{QuasiMomentum, SystemParams};

/// Compares [`find_branches`] against a dense scan of the state function on
/// reproducible random parameter draws.
///
/// For each draw the overlap is tabulated on a fresh node grid, the state
/// function is evaluated on a million-point depth grid with linear
/// interpolation between nodes, and every sign change is bracketed. Branch
/// counts must agree exactly and every depth must match within
/// `1e-4 · n_max · U0`.
pub fn dense_scan_branch_check(seed: u64, draw_count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64, f64, f64, f64, f64)> = (0..draw_count)
        .map(|_| {
            (
                rng.gen_range(250.0..450.0),
                rng.gen_range(5.0e3..2.0e4),
                rng.gen_range(0.6..1.4),
                rng.gen_range(200.0..1000.0),
                rng.gen_range(-1000.0..5500.0),
                rng.gen_range(-0.98..0.98),
            )
        })
        .collect();

    draws
        .par_iter()
        .for_each(|&(kappa, n_atoms, u0, eta, delta_c, qv)| {
            let params = SystemParams::new(kappa, n_atoms, u0, eta, delta_c).unwrap();
            let q = QuasiMomentum::new(qv).unwrap();
            let model = BlochOverlap::new(q, 0);
            let v_cap = u0 * params.n_max();
            let nodes = 2400usize;
            let f_nodes: Vec<f64> = (0..=nodes)
                .map(|i| model.f(v_cap * i as f64 / nodes as f64).unwrap())
                .collect();
            let f_at = |v: f64| -> f64 {
                let t = (v / v_cap * nodes as f64).clamp(0.0, nodes as f64);
                let i = (t as usize).min(nodes - 1);
                let w = t - i as f64;
                f_nodes[i] * (1.0 - w) + f_nodes[i + 1] * w
            };
            let g_at = |v: f64| -> f64 {
                let d = delta_c - n_atoms * u0 * f_at(v);
                v * (kappa * kappa + d * d) - eta * eta * u0
            };

            let scan = 1_000_000usize;
            let mut oracle = Vec::new();
            let mut prev_v = 0.0;
            let mut prev_g = g_at(0.0);
            for i in 1..=scan {
                let v = v_cap * i as f64 / scan as f64;
                let g = g_at(v);
                if prev_g == 0.0 || prev_g * g < 0.0 {
                    oracle.push(prev_v - prev_g * (v - prev_v) / (g - prev_g));
                }
                prev_v = v;
                prev_g = g;
            }

            let set = find_branches(q, &params, 0).unwrap();
            let mut found: Vec<f64> = set.branches.iter().map(|b| b.v).collect();
            found.sort_by(f64::total_cmp);

            let tol = 1e-4 * params.n_max() * u0;
            assert_eq!(
                found.len(),
                oracle.len(),
                "branch count mismatch at kappa={kappa} n={n_atoms} u0={u0} eta={eta} \
                 delta={delta_c} q={qv}: {found:?} vs {oracle:?}"
            );
            for (a, b) in found.iter().zip(&oracle) {
                assert!(
                    (a - b).abs() <= tol,
                    "root {a} vs dense scan {b} (tol {tol})"
                );
            }
        });
}
