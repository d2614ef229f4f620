//! Numerical checks: monotonicity and non-degeneracy of the optimal
//! state and switch, the Talenti comparison, deficit sweeps, conditional
//! gradient ascent and brute-force optimality of the bathtub and annulus
//! competitors.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{
    annulus_control, annulus_radii, bathtub_maximizer, project_admissible, sample_delta_bangbang,
    sample_delta_profile, sample_random_admissible, sample_step_profile, shift_for_delta, Channel, Control,
    ModalStack, RandomKind, Shape,
};
use crate::error::{invalid, Error, Result};
use crate::functionals::{DeficitReport, Problem, ProblemSetup};
use crate::shape_hessian::{compute_spectrum, fd_hessian_check, DeformationCoeffs, SpectrumReport};
use crate::geometry::{dot_w, l1_distance as nodal_l1, RadialField, Sampled};
use crate::rearrange::precedes;

pub const DEFAULT_SEED: u64 = 42;

/// Outcome of one check. `margin` is a signed distance to failure: the
/// check passes when it is positive (or zero where noted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub details: String,
    #[serde(default)]
    pub artifacts: Vec<String>,
    /// Reported without a pass/fail verdict.
    #[serde(default)]
    pub informational: bool,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, margin: f64, details: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            margin,
            details: details.into(),
            artifacts: Vec::new(),
            informational: false,
        }
    }

    pub fn summary_line(&self) -> String {
        let verdict = if self.informational {
            "INFO"
        } else if self.passed {
            "PASS"
        } else {
            "FAIL"
        };
        format!("{verdict} {}: margin {:.6e}; {}", self.name, self.margin, self.details)
    }
}

/// `min -∂_r u*(t, r)` over interior nodes and `t > 0`.
pub fn check_radial_monotonicity(problem: &Problem) -> Result<CheckResult> {
    let o = problem.optimum()?;
    let grid = problem.grid();
    let dr = grid.dr();
    let mut margin = f64::INFINITY;
    let mut at = (0, 0);
    for n in 1..problem.time().len() {
        let u = o.state.row(n);
        for j in 1..grid.cells() {
            let slope = -(u[j + 1] - u[j - 1]) / (2.0 * dr);
            if slope < margin {
                margin = slope;
                at = (n, j);
            }
        }
    }
    Ok(CheckResult::new(
        "radial_monotonicity",
        margin > 0.0,
        margin,
        format!("minimum at t = {}, r = {}", problem.time().time(at.0), grid.nodes()[at.1]),
    ))
}

/// `inf -∂_r p*_ε(t, r)` over all time nodes and `y0 < r ≤ R`.
pub fn check_switch_nondegenerate(problem: &Problem, y0: f64) -> Result<CheckResult> {
    let grid = problem.grid();
    if !(y0 > 0.0 && y0 < grid.r_star()) {
        return Err(invalid("y0", format!("{y0} outside (0, r*)")));
    }
    let o = problem.optimum()?;
    let dr = grid.dr();
    let m = grid.cells();
    let first = grid.nodes().iter().position(|&r| r > y0).unwrap_or(m);
    let mut margin = f64::INFINITY;
    let mut at = 0;
    for n in 0..problem.time().len() {
        let p = o.adjoint.state.row(n);
        for j in first..=m {
            let slope = if j == m {
                -(3.0 * p[m] - 4.0 * p[m - 1] + p[m - 2]) / (2.0 * dr)
            } else {
                -(p[j + 1] - p[j - 1]) / (2.0 * dr)
            };
            if slope < margin {
                margin = slope;
                at = n;
            }
        }
    }
    let eps = problem.setup().eps();
    let mut r = CheckResult::new(
        "switch_nondegenerate",
        margin > 0.0,
        margin,
        format!("eps = {eps}, y0 = {y0}, infimum at t = {}", problem.time().time(at)),
    );
    r.informational = eps == 0.0;
    Ok(r)
}

/// `min_t a_ε(t)`, the normal derivative weight of the time-dependent deficit.
pub fn check_normal_weight(problem: &Problem) -> Result<CheckResult> {
    let w = problem.normal_weight()?;
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let mut r = CheckResult::new(
        "normal_weight",
        min > 0.0,
        min,
        format!("eps = {}, a(0) = {:.6e}, a(T) = {:.6e}", problem.setup().eps(), w[0], w[w.len() - 1]),
    );
    r.informational = problem.setup().eps() == 0.0;
    Ok(r)
}

/// Random time-dependent family cycled by the Talenti battery.
fn talenti_kind(i: usize, v0: f64) -> RandomKind {
    match i % 5 {
        0 => RandomKind::Smooth { time_dependent: true },
        1 => RandomKind::MovingShells,
        2 => RandomKind::DriftingBall,
        3 => RandomKind::OscillatingAnnulus {
            delta0: 0.05 * v0 * (1 + i % 3) as f64,
            m: 1 + (i % 4) as u32,
        },
        _ => RandomKind::Smooth { time_dependent: false },
    }
}

/// Talenti comparison `u(t) ≺ u*(t)` for random admissible controls at
/// `slices` evenly spaced times, plus strict energy loss for rearranged
/// indicators.
pub fn run_talenti_battery(problem: &Problem, samples: usize, slices: usize, seed: u64) -> Result<CheckResult> {
    let time = problem.time();
    let spec = *problem.setup().spec();
    let disc = problem.disc();
    let o = problem.optimum()?;
    let nodes: Vec<usize> = (1..=slices).map(|i| i * time.steps() / slices).collect();
    let margins: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let kind = talenti_kind(i, spec.v0);
            let f = sample_random_admissible(seed.wrapping_add(i as u64), kind, &spec, disc)?;
            let states = problem.state_slices(&f, &nodes)?;
            let mut worst = f64::INFINITY;
            for (s, &n) in states.iter().zip(&nodes) {
                let p = precedes(problem.grid(), s.sampled(), Sampled::Radial(o.state.row(n)))?;
                worst = worst.min(p.worst_margin);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-6 * problem.grid().domain_volume();

    // f = f*: equality up to roundoff
    let star = problem.state_slices(&problem.star_control(), &nodes)?;
    let equality = star
        .iter()
        .zip(&nodes)
        .map(|(s, &n)| precedes(problem.grid(), s.sampled(), Sampled::Radial(o.state.row(n))).map(|p| p.worst_margin))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    // indicators with f^# = f*: shifted and drifting balls lose energy
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut energy_gap = f64::INFINITY;
    if problem.grid().dim() == 2 {
        let j_star = problem.evaluate_jt(&problem.star_control())?;
        let rho = spec.ball_radius(2);
        for i in 0..4 {
            let shift = rng.gen_range(0.02..0.3) * (problem.grid().radius() - rho);
            let angle = rng.gen_range(0.0..2.0 * PI);
            let f = if i % 2 == 0 {
                Control::Shape(Shape::Ball {
                    center: [shift * angle.cos(), shift * angle.sin()],
                    radius: rho,
                })
            } else {
                sample_random_admissible(seed.wrapping_add(1000 + i), RandomKind::DriftingBall, &spec, disc)?
            };
            energy_gap = energy_gap.min(j_star - problem.evaluate_jt(&f)?);
        }
    }
    let gap_ok = problem.grid().dim() != 2 || energy_gap > 0.0;
    let passed = min >= -tol && equality.abs() <= tol && gap_ok;
    Ok(CheckResult::new(
        "talenti",
        passed,
        min,
        format!(
            "{samples} controls x {slices} slices; equality margin {equality:.3e}; energy gap of rearranged indicators {energy_gap:.3e}"
        ),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Ti,
    Td,
}

pub const TI_FAMILIES: [&str; 3] = ["annulus", "shifted-ball", "bangbang"];
pub const TD_FAMILIES: [&str; 2] = ["oscillating-annulus", "drifting-ball"];

/// Competitor grid of a deficit sweep; `deltas` are fractions of `V0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub kind: SweepKind,
    pub families: Vec<String>,
    pub deltas: Vec<f64>,
    /// Random draws per `δ` for the randomized families.
    pub samples: usize,
    pub seed: u64,
}

/// `count` log-spaced points in `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

impl SweepPlan {
    pub fn ti_default() -> Self {
        Self {
            kind: SweepKind::Ti,
            families: TI_FAMILIES.iter().map(|s| s.to_string()).collect(),
            deltas: log_space(1e-3, 1e-1, 20),
            samples: 8,
            seed: DEFAULT_SEED,
        }
    }

    pub fn td_default() -> Self {
        Self {
            kind: SweepKind::Td,
            families: TD_FAMILIES.iter().map(|s| s.to_string()).collect(),
            deltas: log_space(1e-3, 1e-1, 20),
            samples: 2,
            seed: DEFAULT_SEED,
        }
    }
}

/// Result of [`sweep_deficit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub check: CheckResult,
    pub reports: Vec<DeficitReport>,
    /// `(family, min ratio, max ratio)` over `δ ∈ [1e-3, 1e-1] V0`.
    pub spreads: Vec<(String, f64, f64)>,
    pub skipped: Vec<String>,
}

pub const MAX_SPREAD: f64 = 5.0;

struct Job {
    family: String,
    frac: f64,
    index: usize,
    control: std::result::Result<Control, String>,
}

fn build_jobs(problem: &Problem, plan: &SweepPlan) -> Result<Vec<Job>> {
    let spec = *problem.setup().spec();
    let grid = problem.grid();
    let disc = problem.disc();
    let t_end = problem.time().horizon();
    let mut jobs = Vec::new();
    for (fi, family) in plan.families.iter().enumerate() {
        let allowed: &[&str] = match plan.kind {
            SweepKind::Ti => &TI_FAMILIES,
            SweepKind::Td => &TD_FAMILIES,
        };
        if !allowed.contains(&family.as_str()) {
            return Err(invalid("families", format!("unknown family `{family}` for this sweep")));
        }
        for (di, &frac) in plan.deltas.iter().enumerate() {
            let delta = frac * spec.v0;
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ ((fi as u64) << 32) ^ di as u64);
            let mut push = |index: usize, c: Result<Control>| {
                jobs.push(Job {
                    family: family.clone(),
                    frac,
                    index,
                    control: c.map_err(|e| e.to_string()),
                })
            };
            match family.as_str() {
                "annulus" => push(0, annulus_control(delta, &spec, grid)),
                "shifted-ball" => {
                    let rho = spec.ball_radius(grid.dim());
                    let c = shift_for_delta(delta, rho).and_then(|x| {
                        let s = Shape::Ball {
                            center: [x, 0.0],
                            radius: rho,
                        };
                        s.validate(grid)?;
                        Ok(Control::Shape(s))
                    });
                    push(0, c)
                }
                "bangbang" => {
                    for i in 0..plan.samples {
                        push(i, sample_delta_bangbang(&mut rng, delta, &spec, grid).map(Control::Shape));
                    }
                }
                "oscillating-annulus" => {
                    for (i, m) in [1u32, 2, 4].into_iter().enumerate() {
                        push(i, crate::controls::oscillating_annulus(delta, m, &spec, disc));
                    }
                }
                "drifting-ball" => {
                    let rho = spec.ball_radius(2);
                    for i in 0..plan.samples {
                        let speed = PI * (i + 1) as f64 * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        let phase = rng.gen_range(0.0..2.0 * PI);
                        let c = shift_for_delta(delta, rho).and_then(|x| {
                            let shapes = (0..problem.time().len())
                                .map(|n| {
                                    let a = phase + speed * problem.time().time(n) / t_end;
                                    let s = Shape::Ball {
                                        center: [x * a.cos(), x * a.sin()],
                                        radius: rho,
                                    };
                                    s.validate(grid)?;
                                    Ok(s)
                                })
                                .collect::<Result<Vec<_>>>()?;
                            Ok(Control::TimeShape(shapes))
                        });
                        push(i, c);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(jobs)
}

/// Runs the time-independent or weighted deficit over a grid of competitors.
pub fn sweep_deficit(problem: &Problem, plan: &SweepPlan) -> Result<Sweep> {
    match plan.kind {
        SweepKind::Ti if problem.setup().eps() != 0.0 => {
            return Err(Error::Precondition("time-independent sweep needs eps = 0".into()))
        }
        SweepKind::Td if problem.setup().eps() <= 0.0 => {
            return Err(Error::Precondition("time-dependent sweep needs eps > 0".into()))
        }
        _ => {}
    }
    problem.optimum()?;
    let jobs = build_jobs(problem, plan)?;
    let outcomes: Vec<std::result::Result<DeficitReport, String>> = jobs
        .par_iter()
        .map(|job| {
            let f = job.control.as_ref().map_err(|e| e.clone())?;
            let id = format!("{}-{:.4e}-{}", job.family, job.frac, job.index);
            let params = format!("delta={:.6e}V0", job.frac);
            let r = match plan.kind {
                SweepKind::Ti => problem.deficit_ti(f, &id, &job.family, &params),
                SweepKind::Td => problem.deficit_td(f, &id, &job.family, &params),
            };
            r.map_err(|e| e.to_string())
        })
        .collect();
    let mut reports = Vec::new();
    let mut fracs = Vec::new();
    let mut skipped = Vec::new();
    for (job, out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(r) => {
                reports.push(r);
                fracs.push(job.frac);
            }
            Err(e) => skipped.push(format!("{} delta={:.3e}V0: {e}", job.family, job.frac)),
        }
    }
    let mut spreads = Vec::new();
    let mut worst_spread = 1.0f64;
    for family in &plan.families {
        let ratios: Vec<f64> = reports
            .iter()
            .zip(&fracs)
            .filter(|(r, frac)| &r.family == family && (1e-3 * 0.999..=1e-1 * 1.001).contains(*frac))
            .map(|(r, _)| r.ratio)
            .collect();
        if ratios.is_empty() {
            continue;
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo > 0.0 {
            worst_spread = worst_spread.max(hi / lo);
        } else {
            worst_spread = f64::INFINITY;
        }
        spreads.push((family.clone(), lo, hi));
    }
    let min_ratio = reports.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let passed = !reports.is_empty() && min_ratio > 0.0 && worst_spread <= MAX_SPREAD;
    let name = match plan.kind {
        SweepKind::Ti => "deficit_ti",
        SweepKind::Td => "deficit_td",
    };
    let check = CheckResult::new(
        name,
        passed,
        min_ratio,
        format!(
            "{} competitors, {} skipped, worst spread {worst_spread:.3}",
            reports.len(),
            skipped.len()
        ),
    );
    Ok(Sweep {
        check,
        reports,
        spreads,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub iteration: usize,
    pub objective: f64,
    /// `‖f_m - f*‖₁ / Vol(Ω)`.
    pub distance: f64,
    pub step: f64,
    /// Linear gain `⟨g_m - f_m, Ψ_{f_m}⟩`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimization {
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub control: Control,
}

impl Optimization {
    pub fn monotone(&self) -> bool {
        self.iterates
            .windows(2)
            .all(|w| w[1].objective >= w[0].objective - 1e-14 * w[0].objective.abs())
    }
}

/// Conditional-gradient ascent on radial nodal controls with the exact
/// quadratic line search.
pub fn optimize_fixed_point(problem: &Problem, start: &Control, max_iter: usize, tol: f64) -> Result<Optimization> {
    let disc = problem.disc();
    let grid = problem.grid();
    let spec = *problem.setup().spec();
    start.check_admissible(disc, &spec, 1e-9)?;
    let loads = start.loads(disc)?;
    let mut f = match loads.as_radial(0) {
        Some(v) if !loads.is_time_dependent() => v.to_vec(),
        _ => return Err(Error::Unsupported("the optimizer works on radial controls".into())),
    };
    let target = problem.optimum()?.loads.clone();
    let vol = grid.domain_volume();
    let lam = grid.angular_measure();
    let distance = |f: &[f64]| nodal_l1(grid, Sampled::Radial(f), Sampled::Radial(&target)).map(|d| d / vol);
    let mut iterates = Vec::new();
    let mut objective = problem.evaluate_loads(&ModalStack::radial(f.clone()))?;
    let mut converged = false;
    for m in 0..=max_iter {
        let d = distance(&f)?;
        if d < tol {
            iterates.push(Iterate {
                iteration: m,
                objective,
                distance: d,
                step: 0.0,
                gap: 0.0,
            });
            converged = true;
            break;
        }
        if m == max_iter {
            iterates.push(Iterate {
                iteration: m,
                objective,
                distance: d,
                step: 0.0,
                gap: f64::NAN,
            });
            break;
        }
        let control = Control::Radial(RadialField(f.clone()));
        let adj = problem.adjoint_switch(&control)?;
        let psi = adj.psi.channels[&Channel::RADIAL].at(0).to_vec();
        let g = match bathtub_maximizer(grid, Sampled::Radial(&psi), &spec)?.control {
            Control::Radial(g) => g.0,
            _ => unreachable!(),
        };
        let dir: Vec<f64> = g.iter().zip(&f).map(|(a, b)| a - b).collect();
        let gain = lam * dot_w(grid, &dir, &psi);
        let curv = problem.curvature(&ModalStack::radial(dir.clone()))?;
        let step = if gain <= 0.0 {
            0.0
        } else if curv <= 0.0 {
            1.0
        } else {
            (gain / (2.0 * curv)).clamp(0.0, 1.0)
        };
        iterates.push(Iterate {
            iteration: m,
            objective,
            distance: d,
            step,
            gap: gain,
        });
        if step == 0.0 {
            break;
        }
        for (x, dx) in f.iter_mut().zip(&dir) {
            *x += step * dx;
        }
        objective = problem.evaluate_loads(&ModalStack::radial(f.clone()))?;
    }
    Ok(Optimization {
        iterates,
        converged,
        control: Control::Radial(RadialField(f)),
    })
}

/// `J_ε(1_{A_δ}) ≥ J_ε(g)` for random `g` at distance `δ` from `f*`.
pub fn check_penalized_optimality(problem: &Problem, delta: f64, samples: usize, seed: u64) -> Result<CheckResult> {
    let spec = *problem.setup().spec();
    let grid = problem.grid();
    let best = problem.evaluate_jt_eps(&annulus_control(delta, &spec, grid)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let competitors: Vec<Control> = (0..samples)
        .map(|i| {
            if delta == 0.0 {
                return Ok(problem.star_control());
            }
            let s = if i % 2 == 0 {
                sample_delta_bangbang(&mut rng, delta, &spec, grid)?
            } else {
                sample_delta_profile(&mut rng, delta, &spec, grid)?
            };
            Ok(Control::Shape(s))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = competitors
        .par_iter()
        .map(|g| problem.evaluate_jt_eps(g))
        .collect::<Result<_>>()?;
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let margin = (best - worst) / best.abs();
    Ok(CheckResult::new(
        "penalized_optimality",
        margin >= -1e-9,
        margin,
        format!("delta = {delta:.4e}, {samples} competitors"),
    ))
}

/// Brute-force optimality of the bathtub maximizer and of the annulus for
/// linear objectives: `trials` random admissible competitors in total.
pub fn check_bathtub_bruteforce(problem: &Problem, trials: usize, seed: u64) -> Result<CheckResult> {
    let spec = *problem.setup().spec();
    let grid = problem.grid();
    let lam = grid.angular_measure();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi_star = problem.optimum()?.psi.0.clone();
    let mut worst = f64::INFINITY;
    let nodal = |c: &Control| -> Result<Vec<f64>> {
        Ok(c.loads(problem.disc())?.channels[&Channel::RADIAL].at(0).to_vec())
    };
    let half = trials / 2;
    // bathtub against random objectives
    let objectives = 20usize;
    for o in 0..objectives {
        let psi: Vec<f64> = if o == 0 {
            psi_star.clone()
        } else {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            grid.nodes()
                .iter()
                .map(|&r| a.iter().enumerate().map(|(i, c)| c * (PI * (i + 1) as f64 * r).cos()).sum())
                .collect()
        };
        let b = bathtub_maximizer(grid, Sampled::Radial(&psi), &spec)?;
        let fb = nodal(&b.control)?;
        let best = lam * dot_w(grid, &fb, &psi);
        let scale = lam * dot_w(grid, &vec![1.0; psi.len()], &psi.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let count = half / objectives + usize::from(o < half % objectives);
        for i in 0..count {
            let g = if i % 2 == 0 {
                let raw: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-0.5..1.5)).collect();
                nodal(&project_admissible(grid, &raw, &spec)?)?
            } else {
                let cells = rng.gen_range(1..12);
                nodal(&Control::Shape(sample_step_profile(&mut rng, &spec, grid, cells)?))?
            };
            worst = worst.min((best - lam * dot_w(grid, &g, &psi)) / scale);
        }
    }
    // annulus against the δ-class for the linear objective ∫ g Ψ*
    let deltas = log_space(1e-3, 0.5, 10);
    let rest = trials - half;
    for (di, frac) in deltas.iter().enumerate() {
        let delta = frac * spec.v0;
        let a = nodal(&annulus_control(delta, &spec, grid)?)?;
        let best = lam * dot_w(grid, &a, &psi_star);
        let scale = best.abs();
        let count = rest / deltas.len() + usize::from(di < rest % deltas.len());
        for i in 0..count {
            let s = if i % 2 == 0 {
                sample_delta_bangbang(&mut rng, delta, &spec, grid)?
            } else {
                sample_delta_profile(&mut rng, delta, &spec, grid)?
            };
            let g = nodal(&Control::Shape(s))?;
            worst = worst.min((best - lam * dot_w(grid, &g, &psi_star)) / scale);
        }
    }
    Ok(CheckResult::new(
        "bathtub_bruteforce",
        worst >= -1e-9,
        worst,
        format!("{trials} random competitors on M = {}", grid.cells()),
    ))
}

/// `r⁻/δ` and `r⁺/δ` against `c₀` at `δ = frac V0`; margin is
/// `tol - max relative deviation`.
pub fn check_annulus_asymptotics(problem: &Problem, frac: f64, tol: f64) -> Result<CheckResult> {
    let spec = *problem.setup().spec();
    let grid = problem.grid();
    let delta = frac * spec.v0;
    let a = annulus_radii(delta, &spec, grid)?;
    let c0 = crate::controls::annulus_constant(&spec, grid.dim());
    let dev_minus = (a.r_minus / delta / c0 - 1.0).abs();
    let dev_plus = (a.r_plus / delta / c0 - 1.0).abs();
    let dev = dev_minus.max(dev_plus);
    Ok(CheckResult::new(
        "annulus_asymptotics",
        dev <= tol,
        tol - dev,
        format!("delta = {delta:.3e}: r-/delta = {:.8}, r+/delta = {:.8}, c0 = {c0:.8}", a.r_minus / delta, a.r_plus / delta),
    ))
}

/// Spectrum signs, ordering, comparison bounds, grid-doubling stability and
/// finite-difference validation for modes `k ≤ fd_modes` at the smallest
/// `τ`. `problem` must have `ε = 0`.
pub fn check_spectrum(
    problem: &Problem,
    modes: usize,
    fd_modes: usize,
    taus: &[f64],
) -> Result<(SpectrumReport, Vec<CheckResult>)> {
    let mut s = compute_spectrum(problem, modes)?;
    let mut fd_worst = 0.0f64;
    for k in 1..=fd_modes.min(modes) {
        let fd = fd_hessian_check(&DeformationCoeffs::cos(k), taus, problem, &s)?;
        let finest = fd
            .taus
            .iter()
            .zip(&fd.rel_errors)
            .min_by(|a, b| a.0.total_cmp(b.0))
            .map_or(f64::NAN, |x| *x.1);
        fd_worst = fd_worst.max(finest);
        s.fd_errors.push((k, finest));
    }
    let mut fine = problem.setup().params().clone();
    fine.cells *= 2;
    fine.steps *= 2;
    let sf = compute_spectrum(&Problem::new(ProblemSetup::new(fine)?), modes)?;
    let drift = s
        .omegas
        .iter()
        .zip(&sf.omegas)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0f64, f64::max);
    let o1 = s.omegas[0];
    let gap = s.omegas.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let sign = s.y_min[0].min(s.z_min[0]) + 1e-8;
    let cmp = 1e-8 - s.y_excess.iter().chain(&s.z_excess).copied().fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![
        CheckResult::new("omega1_negative", s.omega1_negative, -o1, format!("omega_1 = {o1:.6e}")),
        CheckResult::new("omega_decreasing", s.monotone_ok, gap, format!("{} modes", s.omegas.len())),
        CheckResult::new(
            "y1_z1_nonnegative",
            sign >= 0.0,
            sign,
            format!("min y_1 = {:.3e}, min z_1 = {:.3e}", s.y_min[0], s.z_min[0]),
        ),
        CheckResult::new("yk_zk_below_mode1", cmp >= 0.0, cmp, "y_k <= y_1 and z_k <= z_1 nodewise"),
        CheckResult::new(
            "omega_grid_stability",
            drift <= 0.01,
            0.01 - drift,
            format!("max relative change {drift:.3e} under grid doubling"),
        ),
    ];
    if fd_modes > 0 {
        checks.push(CheckResult::new(
            "fd_hessian",
            fd_worst <= 0.02,
            0.02 - fd_worst,
            format!("worst relative error {fd_worst:.3e} at tau = {:.1e}", taus.iter().copied().fold(f64::INFINITY, f64::min)),
        ));
    }
    Ok((s, checks))
}
