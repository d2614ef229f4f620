//! Decay of the first Dirichlet eigenfunction `J0(j r)` on the unit disk,
//! refining space and time together.

use parabolic_iso::geometry::{dot_w, RadialField, RadialGrid, TimeGrid};
use parabolic_iso::radial_pde::{solve_forward, ModalProblem};

const J01: f64 = 2.404_825_557_695_773;

fn j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let (mut term, mut sum) = (1.0, 1.0);
    for m in 1..40 {
        term *= q / (m * m) as f64;
        sum += term;
    }
    sum
}

fn main() -> parabolic_iso::Result<()> {
    let horizon = 0.25;
    let mut previous: Option<f64> = None;
    println!("{:>6} {:>14} {:>8}", "M=N", "L2 error", "order");
    for m in [16usize, 32, 64, 128, 256] {
        let grid = RadialGrid::new(1.0, m, 2, 0.5)?;
        let time = TimeGrid::new(horizon, m, 0.5)?;
        let data = RadialField::from_fn(&grid, |r| j0(J01 * r));
        let u = solve_forward(&grid, &time, &ModalProblem { k: 0, data: Some(data.values()), ..Default::default() })?;
        let decay = (-J01 * J01 * horizon).exp();
        let err: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(u.row(time.len() - 1))
            .map(|(&r, v)| v - decay * j0(J01 * r))
            .collect();
        let e = (grid.angular_measure() * dot_w(&grid, &err, &err)).sqrt();
        let order = previous.map(|p| (p / e).log2());
        println!("{m:>6} {e:>14.6e} {:>8}", order.map_or("-".into(), |o| format!("{o:.3}")));
        previous = Some(e);
    }
    Ok(())
}
