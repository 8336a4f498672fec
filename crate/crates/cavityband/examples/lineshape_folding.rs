//! Sweeps the cavity detuning through the collective resonance and follows
//! the steady state both ways, exposing the folded lineshape and its
//! hysteresis jumps.

use cavityband::photon::lineshape_sweep;
use cavityband::{QuasiMomentum, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SystemParams::new(350.0, 1.0e4, 1.0, 909.9, 0.0)?;
    let grid: Vec<f64> = (0..=120).map(|i| 1000.0 + 30.0 * i as f64).collect();
    let shape = lineshape_sweep(&params, QuasiMomentum::new(0.0)?, 0, &grid)?;

    let multi: Vec<&cavityband::photon::BranchSet> =
        shape.sets.iter().filter(|s| s.count() > 1).collect();
    println!(
        "{} of {} detunings carry multiple steady states",
        multi.len(),
        grid.len()
    );
    if let (Some(first), Some(last)) = (multi.first(), multi.last()) {
        println!(
            "multistable window: delta_c in [{:.0}, {:.0}]",
            first.params.delta_c, last.params.delta_c
        );
    }

    let mut jumps = 0;
    for w in shape.up_trace.windows(2) {
        if (w[1].n_ph - w[0].n_ph).abs() > 0.5 {
            println!(
                "upward sweep jumps at delta_c = {:.0}: n_ph {:.3} -> {:.3}",
                w[1].delta_c, w[0].n_ph, w[1].n_ph
            );
            jumps += 1;
        }
    }
    for w in shape.down_trace.windows(2) {
        if (w[1].n_ph - w[0].n_ph).abs() > 0.5 {
            println!(
                "downward sweep jumps at delta_c = {:.0}: n_ph {:.3} -> {:.3}",
                w[1].delta_c, w[0].n_ph, w[1].n_ph
            );
            jumps += 1;
        }
    }
    println!("{jumps} hysteresis jumps between the two sweep directions");
    Ok(())
}
