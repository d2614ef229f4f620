//! Schwarz rearrangement of an off-center bump, Hardy-Littlewood and the
//! Talenti comparison for the heat flow it drives.

use parabolic_iso::controls::shifted_ball_control;
use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams};
use parabolic_iso::geometry::{polar_integral, PolarField, Sampled};
use parabolic_iso::rearrange::{check_hardy_littlewood, decreasing_rearrangement, precedes};

fn main() -> parabolic_iso::Result<()> {
    let problem = Problem::new(ProblemSetup::new(SetupParams { cells: 128, steps: 128, ..Default::default() })?);
    let grid = problem.grid();
    let angular = 256;
    let mut bump = PolarField::zeros(grid, angular);
    for l in 0..angular {
        let (s, c) = bump.angle(l).sin_cos();
        for (j, &r) in grid.nodes().iter().enumerate() {
            let (x, y) = (r * c - 0.3, r * s);
            bump.ray_mut(l)[j] = (-(x * x + y * y) / 0.05).exp();
        }
    }
    let sharp = decreasing_rearrangement(grid, Sampled::Polar(&bump))?;
    println!("mass: {:.12} before, {:.12} after", polar_integral(grid, &bump)?, sharp.integral());
    for tau in [0.1, 0.5, 0.9] {
        println!("|{{f > {tau}}}| = {:.6}", sharp.measure_above(tau));
    }
    let mut tilt = bump.clone();
    for l in 0..angular {
        let c = tilt.angle(l).cos();
        tilt.ray_mut(l).iter_mut().for_each(|v| *v *= 1.0 + 0.5 * c);
    }
    let hl = check_hardy_littlewood(grid, Sampled::Polar(&bump), Sampled::Polar(&tilt))?;
    println!("Hardy-Littlewood gain: {hl:.6e}");

    let spec = *problem.setup().spec();
    let shifted = shifted_ball_control([0.2, 0.0], &spec, grid)?;
    let nodes = [problem.time().len() / 2, problem.time().len() - 1];
    let u = problem.state_slices(&shifted, &nodes)?;
    let sym = problem.state_slices(&problem.star_control(), &nodes)?;
    for ((n, a), b) in nodes.iter().zip(&u).zip(&sym) {
        let p = precedes(grid, a.sampled(), b.sampled())?;
        println!("t = {:.3}: u is dominated by u* ({}), margin {:.3e}", problem.time().time(*n), p.holds, p.worst_margin);
    }
    Ok(())
}
