//! Traces the parametric input-output characteristic at fixed detuning.
//! A non-monotone curve means several output powers share one drive
//! strength; the turning points bound the multistable window.

use cavityband::photon::input_output_curve;
use cavityband::{QuasiMomentum, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SystemParams::new(350.0, 1.0e4, 1.0, 900.0, 1630.0)?;
    let q = QuasiMomentum::new(0.95)?;
    let grid: Vec<f64> = (1..=6000).map(|i| 10.0 * i as f64 / 6000.0).collect();
    let curve = input_output_curve(&params, q, 0, &grid)?;

    let mut turns = Vec::new();
    for w in curve.windows(3) {
        let left = w[1].n_max - w[0].n_max;
        let right = w[2].n_max - w[1].n_max;
        if left * right < 0.0 {
            turns.push(w[1]);
        }
    }
    println!("{} turning points on the characteristic:", turns.len());
    for t in &turns {
        println!(
            "  n_ph = {:.4} sustained at capacity n_max = {:.4}",
            t.n_ph, t.n_max
        );
    }

    for level in [6.0, 7.4, 8.0, 8.6, 9.5] {
        let crossings = curve
            .windows(2)
            .filter(|w| (w[0].n_max - level) * (w[1].n_max - level) < 0.0)
            .count();
        let eta = 350.0 * level.sqrt();
        println!("capacity {level:.1} (pump {eta:.0}): {crossings} coexisting states");
    }
    Ok(())
}
