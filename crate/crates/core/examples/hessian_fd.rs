//! Second differences of the Lagrangian along deformed balls against the
//! spectral quadratic form.

use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams};
use parabolic_iso::shape_hessian::{compute_spectrum, fd_hessian_check, DeformationCoeffs};

fn main() -> parabolic_iso::Result<()> {
    let problem = Problem::new(ProblemSetup::new(SetupParams { eps: 0.0, ..Default::default() })?);
    let spectrum = compute_spectrum(&problem, 4)?;
    let taus = [8e-3, 4e-3, 2e-3, 1e-3];
    let mixed = DeformationCoeffs::new(vec![(1, 0.6, 0.0), (2, 0.0, -0.5), (3, 0.3, 0.4)]);
    let cases = [
        ("cos 1", DeformationCoeffs::cos(1)),
        ("sin 2", DeformationCoeffs::sin(2)),
        ("cos 4", DeformationCoeffs::cos(4)),
        ("mixed", mixed),
    ];
    for (name, coeffs) in cases {
        let fd = fd_hessian_check(&coeffs, &taus, &problem, &spectrum)?;
        println!("{name}: model {:.8e}", fd.model);
        for ((t, q), e) in fd.taus.iter().zip(&fd.quotients).zip(&fd.rel_errors) {
            println!("  tau {t:.0e}: quotient {q:.8e}, relative error {e:.2e}");
        }
    }
    Ok(())
}
