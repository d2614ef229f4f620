//! The shape Hessian spectrum at the optimal ball.

use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams};
use parabolic_iso::shape_hessian::{compute_spectrum, lagrange_multiplier};

fn main() -> parabolic_iso::Result<()> {
    let problem = Problem::new(ProblemSetup::new(SetupParams { eps: 0.0, ..Default::default() })?);
    let s = compute_spectrum(&problem, 16)?;
    println!("r* = {}, multiplier = {:.6e}, dPsi/dr(r*) = {:.6e}", s.r_star, lagrange_multiplier(&problem)?, s.dpsi);
    for (k, w) in s.omegas.iter().enumerate() {
        println!("omega_{:<2} = {w:.8e}", k + 1);
    }
    println!("omega_1 < 0: {}, strictly decreasing: {}", s.omega1_negative, s.monotone_ok);
    Ok(())
}
