//! Bathtub maximizer of a linear objective and the annulus competitors.

use std::f64::consts::PI;

use parabolic_iso::controls::{annulus_constant, annulus_radii, bathtub_maximizer, AdmissibleSpec, Control};
use parabolic_iso::geometry::{dot_w, RadialGrid, Sampled};

fn main() -> parabolic_iso::Result<()> {
    let grid = RadialGrid::new(1.0, 256, 2, 0.5)?;
    let spec = AdmissibleSpec::new(PI / 4.0, &grid)?;
    // a profile peaked away from the origin: the maximizer is a shell
    let psi: Vec<f64> = grid.nodes().iter().map(|&r| (-(r - 0.6).powi(2) / 0.02).exp()).collect();
    let b = bathtub_maximizer(&grid, Sampled::Radial(&psi), &spec)?;
    if let Control::Radial(f) = &b.control {
        let support: Vec<f64> = grid.nodes().iter().zip(f.values()).filter(|(_, v)| **v > 0.5).map(|(r, _)| *r).collect();
        println!(
            "threshold {:.6}, filled shell [{:.4}, {:.4}], mass {:.12}, degenerate {}",
            b.threshold,
            support.first().unwrap_or(&f64::NAN),
            support.last().unwrap_or(&f64::NAN),
            grid.angular_measure() * dot_w(&grid, f.values(), &vec![1.0; grid.len()]),
            b.degenerate
        );
    }
    println!("{:>10} {:>12} {:>12} {:>12}", "delta/V0", "r-/delta", "r+/delta", "r*");
    for frac in [1e-1, 1e-2, 1e-3, 1e-4] {
        let delta = frac * spec.v0;
        let a = annulus_radii(delta, &spec, &grid)?;
        println!("{frac:>10.0e} {:>12.8} {:>12.8} {:>12.6}", a.r_minus / delta, a.r_plus / delta, a.r_star);
    }
    println!("limit {:.8}", annulus_constant(&spec, 2));
    Ok(())
}
