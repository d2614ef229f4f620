//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use parabolic_iso::functionals::{Problem, ProblemSetup, SetupParams};

/// First zero of `J0`.
pub const J0_ZERO: f64 = 2.404_825_557_695_773;

/// `J0(x)` from its power series; accurate to roundoff for `|x| ≤ 4`.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let (mut term, mut sum) = (1.0, 1.0);
    for m in 1..60 {
        term *= q / (m * m) as f64;
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

/// Least-squares slope of `log e` against `log h`.
pub fn observed_order(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn problem(cells: usize, steps: usize, eps: f64) -> Problem {
    Problem::new(
        ProblemSetup::new(SetupParams {
            cells,
            steps,
            eps,
            k_max: 4,
            angular: 128,
            ..Default::default()
        })
        .expect("valid setup"),
    )
}
