//! Locates the degenerate points where three steady states coalesce at
//! once, realizes one as a physical parameter set, and verifies that the
//! singularity ladder stops there.

use cavityband::catastrophe::{
    butterfly_check, find_q_sw, solution_counts_across, swallowtail_scan, transversality_rank_check,
};
use cavityband::QuasiMomentum;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_atoms = 100.0;
    let q_sw = find_q_sw((0.50, 0.60), n_atoms)?;
    println!("swallowtail points first appear at q = {q_sw:.4}");

    let q = QuasiMomentum::new(0.69)?;
    let points = swallowtail_scan(q, n_atoms)?;
    println!("{} point(s) at q = 0.69:", points.len());
    for p in &points {
        println!(
            "  v = {:.4}, delta_c/(N U0) = {:.4}, f = {:.5}, third-derivative residual {:.1e} +- {:.1e}",
            p.v, p.delta_over_nu0, p.f, p.residual3.value, p.residual3.error
        );
    }

    let point = points
        .iter()
        .max_by(|a, b| a.v.total_cmp(&b.v))
        .expect("scan found points");
    let (realized, v0) = point.realize(1.0, n_atoms)?;
    println!(
        "realized with kappa = 1: delta_c = {:.4}, eta = {:.4}, U0 = {:.5}, depth {v0:.4}",
        realized.delta_c, realized.eta, realized.u0
    );

    let butterfly = butterfly_check(point)?;
    println!(
        "fourth-derivative mismatch {:.3} +- {:.1e}: {:?}",
        butterfly.residual4.value, butterfly.residual4.error, butterfly.verdict
    );

    let transversality = transversality_rank_check(point, 1.0, n_atoms)?;
    println!(
        "unfolding rank {} (singular values {:?})",
        transversality.rank,
        transversality
            .singular_values
            .iter()
            .map(|s| format!("{s:.2e}"))
            .collect::<Vec<_>>()
    );

    let (inside, mirrored) = solution_counts_across(point, 1.0, n_atoms, 0.6)?;
    println!("crossing the point: {inside} states inside the pocket, {mirrored} on the far side");
    Ok(())
}
