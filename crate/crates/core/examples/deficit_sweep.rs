//! Deficit ratios for annulus and shifted-ball competitors, printed as CSV.

use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams, DEFICIT_CSV_HEADER};
use parabolic_iso::verifier::{log_space, sweep_deficit, SweepKind, SweepPlan};

fn main() -> parabolic_iso::Result<()> {
    let problem = Problem::new(ProblemSetup::new(SetupParams { eps: 0.0, ..Default::default() })?);
    let plan = SweepPlan {
        kind: SweepKind::Ti,
        families: vec!["annulus".into(), "shifted-ball".into()],
        deltas: log_space(1e-3, 1e-1, 8),
        samples: 1,
        seed: 7,
    };
    let sweep = sweep_deficit(&problem, &plan)?;
    println!("{DEFICIT_CSV_HEADER}");
    for r in &sweep.reports {
        println!("{}", r.csv_row());
    }
    for (family, lo, hi) in &sweep.spreads {
        println!("# {family}: ratio in [{lo:.4e}, {hi:.4e}], spread {:.3}", hi / lo);
    }
    println!("# {}", sweep.check.summary_line());
    Ok(())
}
