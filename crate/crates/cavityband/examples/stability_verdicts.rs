//! Classifies every coexisting steady state at the zone center by the sign
//! of the second energy variation and by the linearized dynamics.

use cavityband::bloch::solve_bloch;
use cavityband::photon::find_branches;
use cavityband::stability::classify_branch;
use cavityband::{LatticeDepth, QuasiMomentum, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SystemParams::new(350.0, 1.0e4, 1.0, 2.8 * 325.0, 3140.0)?;
    let q = QuasiMomentum::new(0.0)?;
    let set = find_branches(q, &params, 0)?;
    println!("{} coexisting steady states at q = 0:", set.count());

    for (i, branch) in set.branches.iter().enumerate() {
        let state = solve_bloch(q, LatticeDepth::new(branch.v)?, 0, 16)?;
        let report = classify_branch(i, &state, &params, 12)?;
        let verdict = match (report.energetically_stable, report.dynamically_stable) {
            (true, true) => "stable",
            (false, false) => "unstable in both senses",
            (true, false) => "dynamically unstable only",
            (false, true) => "energetically unstable only",
        };
        println!(
            "branch {i}: n_ph = {:.4}, E = {:.2} E_R, min eigenvalue {:+.4}, \
             largest growth rate {:.4} -> {verdict}",
            branch.n_ph, branch.energy_total, report.min_eig_a, report.max_abs_imag_sigma_a
        );
    }

    println!("(growth rates are imaginary parts of the linearized spectrum, in recoil units)");
    Ok(())
}
