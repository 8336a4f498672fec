//! Sweeps the lowest band across the Brillouin zone in a regime where the
//! cavity feedback folds it into a loop, then pins down the loop tip.

use cavityband::band::{band_sweep, refine_loop_endpoint};
use cavityband::{QuasiMomentum, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SystemParams::new(350.0, 1.0e4, 1.0, 909.9, 3140.0)?;
    let grid: Vec<f64> = (0..41).map(|i| -1.0 + i as f64 / 20.0).collect();
    let diagram = band_sweep(&params, 0, &grid)?;

    println!(
        "{} solutions over {} quasi-momenta",
        diagram.points.len(),
        grid.len()
    );
    for (i, comp) in diagram.components.iter().enumerate() {
        let kind = if comp.touches_edge { "band" } else { "loop" };
        let qs: Vec<f64> = comp
            .point_ids
            .iter()
            .map(|&id| diagram.points[id].q)
            .collect();
        let lo = qs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "component {i}: {kind} with {} points on q in [{lo:.3}, {hi:.3}]",
            comp.point_ids.len()
        );
    }

    for &id in &diagram.column(20) {
        let p = &diagram.points[id];
        println!(
            "q=0 {:<8} E/N = {:.6} E_R, n_ph = {:.4}",
            p.label.as_str(),
            p.energy_per_atom,
            p.n_ph
        );
    }

    let tip = refine_loop_endpoint(&params, 0, 0.70, 0.73)?;
    println!(
        "loop tip at q = {:.6} with n_ph = {:.4} (pair gap {:.1e})",
        tip.q, tip.n_ph, tip.gap
    );

    let set = cavityband::photon::find_branches(QuasiMomentum::new(tip.q + 0.01)?, &params, 0)?;
    println!("just beyond the tip: {} solution(s)", set.count());
    Ok(())
}
