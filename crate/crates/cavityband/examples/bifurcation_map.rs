//! Maps how many steady states coexist over the detuning-pump plane and
//! renders the count regions as a small text chart with the fold crescent
//! and its cusp.

use cavityband::bistability::{bifurcation_map, critical_point_numeric};
use cavityband::{QuasiMomentum, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SystemParams::new(350.0, 1.0e4, 1.0, 900.0, 4000.0)?;
    let q = QuasiMomentum::new(0.0)?;
    let eta_grid: Vec<f64> = (0..33).map(|i| 300.0 + 60.0 * i as f64 / 32.0).collect();
    let delta_grid: Vec<f64> = (0..49).map(|i| 4100.0 + 500.0 * i as f64 / 48.0).collect();
    let map = bifurcation_map(q, &params, &eta_grid, &delta_grid)?;

    for (i, row) in map.counts.iter().enumerate().rev() {
        let line: String = row
            .iter()
            .map(|&n| match n {
                1 => '.',
                3 => '#',
                5 => '@',
                _ => '?',
            })
            .collect();
        println!("eta {:>6.1} |{line}|", map.eta_grid[i]);
    }
    println!(
        "            delta_c from {:.0} to {:.0} ('.': one state, '#': three)",
        delta_grid[0],
        delta_grid.last().unwrap()
    );

    println!("{} fold polyline(s) traced", map.boundaries.len());
    for &(d, e) in &map.cusps {
        println!("cusp marker at delta_c = {d:.1}, eta = {e:.2}");
    }

    let window = (
        params.collective_coupling() / 2.0 - 12.0 * params.kappa,
        params.collective_coupling() / 2.0 + 2.0 * params.kappa,
    );
    let cp = critical_point_numeric(q, &params, window)?;
    println!(
        "independent onset search: delta_0 = {:.1}, eta_cr = {:.2}",
        cp.delta_0, cp.eta_cr
    );
    Ok(())
}
