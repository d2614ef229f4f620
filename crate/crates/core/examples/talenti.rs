//! Talenti comparison on random admissible controls, and the weight `a_ε`
//! for a few penalizations.

use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams};
use parabolic_iso::verifier::{check_normal_weight, check_radial_monotonicity, run_talenti_battery};

fn main() -> parabolic_iso::Result<()> {
    let problem = Problem::new(ProblemSetup::new(SetupParams { cells: 128, steps: 256, ..Default::default() })?);
    println!("{}", run_talenti_battery(&problem, 20, 4, 11)?.summary_line());
    let p0 = problem.with_eps(0.0)?;
    println!("{}", check_radial_monotonicity(&p0)?.summary_line());
    for eps in [1e-3, 1e-2, 0.1, 1.0] {
        println!("{}", check_normal_weight(&p0.with_eps(eps)?)?.summary_line());
    }
    Ok(())
}
