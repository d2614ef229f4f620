//! Second-order shape calculus at the optimal ball (n = 2, ε = 0).
//!
//! For each mode `k ≥ 1`, `y_k` solves the forward system with a unit flux
//! jump at `r*` and `z_k` the transposed system driven by `y_k`. The
//! Hessian of the volume-constrained Lagrangian at `B*` in the direction
//! `Φ·ν = Σ α_k cos kθ + β_k sin kθ` is `π r* Σ ω_k (α_k² + β_k²)` with
//! `ω_k = ∫ z_k(t, r*) dt + ∂_r Ψ*(r*)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{Control, DeformedBall, Shape};
use crate::error::{invalid, Error, Result};
use crate::functionals::{fmt_f64, Problem};
use crate::radial_pde::{ModalProblem, Propagator, SpaceTimeField, Source};

/// Largest admissible `k Δr / r*`.
pub const MAX_MODE_RESOLUTION: f64 = 0.5;

/// Normal trace coefficients `(k, α_k, β_k)`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeformationCoeffs {
    pub modes: Vec<(usize, f64, f64)>,
}

impl DeformationCoeffs {
    pub fn new(modes: Vec<(usize, f64, f64)>) -> Self {
        Self { modes }
    }

    pub fn cos(k: usize) -> Self {
        Self::new(vec![(k, 1.0, 0.0)])
    }

    pub fn sin(k: usize) -> Self {
        Self::new(vec![(k, 0.0, 1.0)])
    }

    pub fn max_mode(&self) -> usize {
        self.modes.iter().map(|m| m.0).max().unwrap_or(0)
    }

    fn check(&self) -> Result<()> {
        if self.modes.iter().any(|m| m.0 == 0) {
            return Err(invalid("coeffs", "mode 0 changes the volume at first order"));
        }
        Ok(())
    }

    /// `‖Φ·ν‖²_{L²(∂B*)} = π r* Σ (α_k² + β_k²)`.
    pub fn trace_norm_sq(&self, r_star: f64) -> f64 {
        PI * r_star * self.modes.iter().map(|(_, a, b)| a * a + b * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub r_star: f64,
    /// `ω_1, …, ω_K`.
    pub omegas: Vec<f64>,
    /// `∫ z_k(t, r*) dt`.
    pub z_integrals: Vec<f64>,
    /// `∂_r Ψ*(r*)` by centered difference.
    pub dpsi: f64,
    pub monotone_ok: bool,
    pub omega1_negative: bool,
    /// Minimum of `y_k` and `z_k` over all nodes and times, per mode.
    pub y_min: Vec<f64>,
    pub z_min: Vec<f64>,
    /// `max (y_k - y_1)` and `max (z_k - z_1)`, per mode.
    pub y_excess: Vec<f64>,
    pub z_excess: Vec<f64>,
    /// Relative errors of finite-difference Hessians, `(k, error)`.
    pub fd_errors: Vec<(usize, f64)>,
}

impl SpectrumReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("k,omega_k,fd_error\n");
        for (i, w) in self.omegas.iter().enumerate() {
            let k = i + 1;
            let fd = self
                .fd_errors
                .iter()
                .find(|e| e.0 == k)
                .map(|e| fmt_f64(e.1))
                .unwrap_or_default();
            out.push_str(&format!("{k},{},{fd}\n", fmt_f64(*w)));
        }
        out
    }
}

/// `y_k` and `z_k` for one mode.
#[derive(Debug, Clone)]
pub struct ModeSystems {
    pub k: usize,
    pub y: SpaceTimeField,
    pub z: SpaceTimeField,
}

fn require_ball_setting(problem: &Problem) -> Result<()> {
    if problem.setup().eps() != 0.0 {
        return Err(Error::Precondition("shape calculus uses eps = 0".into()));
    }
    if problem.grid().dim() != 2 {
        return Err(Error::Unsupported("shape calculus requires n = 2".into()));
    }
    Ok(())
}

/// Solves the `y_k` and `z_k` systems.
pub fn mode_systems(problem: &Problem, k: usize) -> Result<ModeSystems> {
    require_ball_setting(problem)?;
    if k == 0 {
        return Err(invalid("k", "modes start at 1"));
    }
    let prop = Propagator::new(problem.grid(), problem.time(), k)?;
    let y = prop.solve_jump_forward()?;
    let z = prop
        .solve_backward(&ModalProblem {
            k,
            source: Source::Field(&y),
            data: None,
            jump: 0.0,
        })?
        .switch;
    Ok(ModeSystems { k, y, z })
}

/// `∂_r Ψ*(r*)` by the centered difference.
pub fn psi_slope(problem: &Problem) -> Result<f64> {
    let o = problem.optimum()?;
    let j = problem.grid().star_index();
    Ok((o.psi[j + 1] - o.psi[j - 1]) / (2.0 * problem.grid().dr()))
}

/// `μ = -Ψ*(r*)`.
pub fn lagrange_multiplier(problem: &Problem) -> Result<f64> {
    require_ball_setting(problem)?;
    Ok(-problem.optimum()?.psi[problem.grid().star_index()])
}

/// `ω_1..ω_K` and the sign and comparison diagnostics of the mode systems.
pub fn compute_spectrum(problem: &Problem, modes: usize) -> Result<SpectrumReport> {
    require_ball_setting(problem)?;
    let grid = problem.grid();
    let r_star = grid.r_star();
    if modes == 0 {
        return Err(invalid("modes", "need at least one mode"));
    }
    if modes as f64 * grid.dr() / r_star > MAX_MODE_RESOLUTION {
        return Err(invalid(
            "modes",
            format!("k Δr / r* = {} exceeds {MAX_MODE_RESOLUTION}", modes as f64 * grid.dr() / r_star),
        ));
    }
    let dpsi = psi_slope(problem)?;
    let time = problem.time();
    let j = grid.star_index();
    let first = mode_systems(problem, 1)?;
    let rest: Vec<ModeSystems> = (2..=modes)
        .into_par_iter()
        .map(|k| mode_systems(problem, k))
        .collect::<Result<_>>()?;
    let excess = |a: &SpaceTimeField, b: &SpaceTimeField| {
        a.values()
            .iter()
            .zip(b.values())
            .fold(f64::NEG_INFINITY, |m, (x, y)| m.max(x - y))
    };
    let mut report = SpectrumReport {
        r_star,
        omegas: Vec::new(),
        z_integrals: Vec::new(),
        dpsi,
        monotone_ok: true,
        omega1_negative: false,
        y_min: Vec::new(),
        z_min: Vec::new(),
        y_excess: Vec::new(),
        z_excess: Vec::new(),
        fd_errors: Vec::new(),
    };
    for m in std::iter::once(&first).chain(&rest) {
        let zint: f64 = (0..time.len()).map(|n| time.quad_weight(n) * m.z.at(n, j)).sum();
        report.z_integrals.push(zint);
        report.omegas.push(zint + dpsi);
        report.y_min.push(m.y.min());
        report.z_min.push(m.z.min());
        report.y_excess.push(excess(&m.y, &first.y));
        report.z_excess.push(excess(&m.z, &first.z));
    }
    report.monotone_ok = report.omegas.windows(2).all(|w| w[1] < w[0]);
    report.omega1_negative = report.omegas[0] < 0.0;
    Ok(report)
}

/// `L''[Φ, Φ] = π r* Σ ω_k (α_k² + β_k²)`.
pub fn quadratic_form(coeffs: &DeformationCoeffs, spectrum: &SpectrumReport) -> Result<f64> {
    coeffs.check()?;
    if coeffs.max_mode() > spectrum.omegas.len() {
        return Err(invalid("coeffs", format!("mode {} beyond the spectrum", coeffs.max_mode())));
    }
    Ok(PI
        * spectrum.r_star
        * coeffs
            .modes
            .iter()
            .map(|&(k, a, b)| spectrum.omegas[k - 1] * (a * a + b * b))
            .sum::<f64>())
}

/// `J'(B*)[Φ] - Ψ*(r*) ∫ Φ·ν`, assembled by θ-quadrature of `(Φ·ν) Ψ*`
/// on the boundary.
pub fn criticality_check(coeffs: &DeformationCoeffs, problem: &Problem) -> Result<f64> {
    require_ball_setting(problem)?;
    coeffs.check()?;
    let psi_star = problem.optimum()?.psi[problem.grid().star_index()];
    let r_star = problem.grid().r_star();
    let ball = DeformedBall::uncorrected(r_star, 1.0, coeffs.modes.clone());
    let l = problem.disc().angular;
    let sum: f64 = (0..l)
        .map(|i| ball.trace(2.0 * PI * i as f64 / l as f64) * psi_star)
        .sum();
    Ok(sum * 2.0 * PI * r_star / l as f64)
}

/// `L(E) = J_T(E) - Ψ*(r*) Vol(E)` with the exact set volume.
pub fn lagrangian_value(f: &Control, problem: &Problem) -> Result<f64> {
    require_ball_setting(problem)?;
    let shape = match f {
        Control::Shape(s) => s,
        _ => return Err(invalid("f", "a parametric shape is required")),
    };
    shape.validate(problem.grid())?;
    let psi_star = problem.optimum()?.psi[problem.grid().star_index()];
    Ok(problem.evaluate_jt(f)? - psi_star * shape.volume(2))
}

/// Deformed ball `B*_{τΦ}` with the uniform volume correction.
pub fn deformed(problem: &Problem, coeffs: &DeformationCoeffs, tau: f64) -> Result<Control> {
    coeffs.check()?;
    let s = Shape::DeformedBall(DeformedBall::new(problem.grid().r_star(), tau, coeffs.modes.clone())?);
    s.validate(problem.grid())?;
    Ok(Control::Shape(s))
}

/// Relative error below which second differences are dominated by roundoff.
pub const FD_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdHessian {
    pub taus: Vec<f64>,
    /// `[L(τΦ) + L(-τΦ) - 2 L(0)] / τ²` per `τ`.
    pub quotients: Vec<f64>,
    pub model: f64,
    pub rel_errors: Vec<f64>,
    /// True when the error does not grow as `τ` decreases, ignoring
    /// changes below the roundoff floor [`FD_ERROR_FLOOR`].
    pub monotone: bool,
}

/// Central second differences of the Lagrangian against [`quadratic_form`].
pub fn fd_hessian_check(
    coeffs: &DeformationCoeffs,
    taus: &[f64],
    problem: &Problem,
    spectrum: &SpectrumReport,
) -> Result<FdHessian> {
    let model = quadratic_form(coeffs, spectrum)?;
    let base = lagrangian_value(&problem.star_control(), problem)?;
    let quotients: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let plus = lagrangian_value(&deformed(problem, coeffs, tau)?, problem)?;
            let minus = lagrangian_value(&deformed(problem, coeffs, -tau)?, problem)?;
            Ok((plus + minus - 2.0 * base) / (tau * tau))
        })
        .collect::<Result<_>>()?;
    let scale = model.abs().max(f64::MIN_POSITIVE);
    let rel_errors: Vec<f64> = quotients.iter().map(|q| (q - model).abs() / scale).collect();
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[b].total_cmp(&taus[a]));
    let monotone = order
        .windows(2)
        .all(|w| rel_errors[w[1]] <= rel_errors[w[0]].max(FD_ERROR_FLOOR));
    Ok(FdHessian {
        taus: taus.to_vec(),
        quotients,
        model,
        rel_errors,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{ProblemSetup, SetupParams};

    fn small() -> Problem {
        Problem::new(
            ProblemSetup::new(SetupParams {
                cells: 64,
                steps: 128,
                eps: 0.0,
                k_max: 8,
                angular: 256,
                ..Default::default()
            })
            .unwrap(),
        )
    }

    #[test]
    fn spectrum_signs() {
        let p = small();
        let s = compute_spectrum(&p, 6).unwrap();
        assert!(s.omega1_negative && s.monotone_ok, "{:?}", s.omegas);
        assert!(s.y_min[0] >= -1e-8 && s.z_min[0] >= -1e-8);
        assert!(s.y_excess.iter().all(|e| *e <= 1e-8));
        assert!(s.z_excess.iter().all(|e| *e <= 1e-8));
        assert_eq!(s.csv().lines().count(), 7);
    }

    #[test]
    fn rejects_unresolved_modes_and_eps() {
        let p = small();
        assert!(compute_spectrum(&p, 20).is_err());
        assert!(compute_spectrum(&p.with_eps(0.1).unwrap(), 2).is_err());
    }

    #[test]
    fn quadratic_form_identities() {
        let p = small();
        let s = compute_spectrum(&p, 3).unwrap();
        assert_eq!(quadratic_form(&DeformationCoeffs::default(), &s).unwrap(), 0.0);
        let one = quadratic_form(&DeformationCoeffs::cos(1), &s).unwrap();
        let pair = quadratic_form(&DeformationCoeffs::new(vec![(1, 1.0, 1.0)]), &s).unwrap();
        assert!(one < 0.0);
        assert!((pair - 2.0 * one).abs() <= 1e-15 * one.abs());
        assert!(quadratic_form(&DeformationCoeffs::cos(4), &s).is_err());
        assert!(quadratic_form(&DeformationCoeffs::cos(0), &s).is_err());
    }

    #[test]
    fn criticality_and_multiplier() {
        let p = small();
        for c in [DeformationCoeffs::cos(1), DeformationCoeffs::sin(3)] {
            let v = criticality_check(&c, &p).unwrap();
            assert!(v.abs() <= 1e-8 * c.trace_norm_sq(p.grid().r_star()).sqrt());
        }
        assert!(lagrange_multiplier(&p).unwrap() < 0.0);
        let base = lagrangian_value(&p.star_control(), &p).unwrap();
        let expected = p.optimum().unwrap().j + lagrange_multiplier(&p).unwrap() * p.setup().spec().v0;
        assert!((base - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_deformation_has_zero_second_difference() {
        let p = small();
        let s = compute_spectrum(&p, 2).unwrap();
        let fd = fd_hessian_check(&DeformationCoeffs::new(vec![(1, 0.0, 0.0)]), &[1e-3], &p, &s).unwrap();
        assert!(fd.quotients[0].abs() < 1e-6);
    }
}
