//! Finds the onset of multistability at several quasi-momenta and compares
//! the numeric critical pump with the shallow-lattice closed form.

use cavityband::bistability::{critical_point_numeric, eta_cr_analytic_shallow};
use cavityband::{QuasiMomentum, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SystemParams::new(350.0, 1.0e4, 1.0, 900.0, 4000.0)?;
    let nu0 = params.collective_coupling();
    let window = (
        nu0 / 2.0 - 12.0 * params.kappa,
        nu0 / 2.0 + 2.0 * params.kappa,
    );

    println!("q       eta_cr      analytic    delta_0      n_0");
    let mut base = None;
    for qv in [0.0, 0.25, 0.5, 0.7] {
        let q = QuasiMomentum::new(qv)?;
        let cp = critical_point_numeric(q, &params, window)?;
        let analytic = eta_cr_analytic_shallow(q, &params);
        println!(
            "{qv:<7} {:<11.4} {:<11.4} {:<12.4} {:.6}",
            cp.eta_cr, analytic, cp.delta_0, cp.n_0
        );
        if qv == 0.0 {
            base = Some(cp.eta_cr);
        } else if let Some(b) = base {
            let law = (1.0 - qv * qv).sqrt();
            println!(
                "        falls to {:.4} of the zone-center value, sqrt(1-q^2) = {law:.4}",
                cp.eta_cr / b
            );
        }
    }
    Ok(())
}
