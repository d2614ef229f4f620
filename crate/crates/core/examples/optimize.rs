//! Conditional-gradient ascent from a random bang-bang start.

use parabolic_iso::controls::{sample_random_admissible, RandomKind};
use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams};
use parabolic_iso::verifier::optimize_fixed_point;

fn main() -> parabolic_iso::Result<()> {
    let problem = Problem::new(ProblemSetup::new(SetupParams { eps: 0.0, ..Default::default() })?);
    let start = sample_random_admissible(3, RandomKind::BangBangRadial, problem.setup().spec(), problem.disc())?;
    let run = optimize_fixed_point(&problem, &start, 100, 1e-6)?;
    println!("{:>4} {:>16} {:>12} {:>8} {:>12}", "it", "J", "|f-f*|/Vol", "step", "gap");
    for it in &run.iterates {
        println!(
            "{:>4} {:>16.10e} {:>12.4e} {:>8.4} {:>12.4e}",
            it.iteration, it.objective, it.distance, it.step, it.gap
        );
    }
    println!("converged {}, monotone {}", run.converged, run.monotone());
    println!("J(f*) = {:.10e}", problem.evaluate_jt(&problem.star_control())?);
    Ok(())
}
