//! Objectives `J_T`, `J_T^ε`, their adjoint calculus and the deficit reports.
//!
//! For a control with channel loads `F_c` the objective is
//! `J_ε = Σ_c λ_c [½ Σ_n c_n ⟨u_c^n, u_c^n⟩_W + (ε/2) ⟨u_c^N, u_c^N⟩_W]`
//! where `λ_c` is the Parseval weight of the channel. The adjoint of each
//! channel is the transposed time-stepping recursion, so Gâteaux derivatives
//! and the second-order expansion are exact up to roundoff.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controls::{
    l1_distance, AdmissibleSpec, Channel, Control, Discretization, ModalStack, Shape, Slice, Slices,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{unit_ball_volume, RadialField, RadialGrid, TimeGrid};
use crate::radial_pde::{
    one_sided_derivative, time_integral, BackwardSolution, ModalProblem, Propagator, Side,
    SpaceTimeField,
};

/// Scalar parameters of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SetupParams {
    pub radius: f64,
    pub dim: usize,
    pub v0: f64,
    pub cells: usize,
    pub horizon: f64,
    pub steps: usize,
    pub theta: f64,
    pub eps: f64,
    /// `a` in the initial datum `u0(r) = a (1 - (r/R)²)`.
    pub u0_amplitude: f64,
    pub k_max: usize,
    pub angular: usize,
}

impl Default for SetupParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            dim: 2,
            v0: PI / 4.0,
            cells: 256,
            horizon: 1.0,
            steps: 512,
            theta: 0.5,
            eps: 0.1,
            u0_amplitude: 0.0,
            k_max: 16,
            angular: 1024,
        }
    }
}

/// Validated problem data: grids, volume constraint, `ε` and `u0`.
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    params: SetupParams,
    disc: Discretization,
    spec: AdmissibleSpec,
    u0: RadialField,
}

impl ProblemSetup {
    /// Builds the grids; `r*` is snapped to the nearest node and `V0` is
    /// replaced by the volume of the snapped ball.
    pub fn new(params: SetupParams) -> Result<Self> {
        let p = &params;
        if !(2..=3).contains(&p.dim) {
            return Err(invalid("dim", format!("{} not in {{2, 3}}", p.dim)));
        }
        if !(p.v0 > 0.0 && p.v0 < unit_ball_volume(p.dim) * p.radius.powi(p.dim as i32)) {
            return Err(invalid("v0", format!("{} outside (0, Vol(Ω))", p.v0)));
        }
        if !(p.eps >= 0.0 && p.eps.is_finite()) {
            return Err(invalid("eps", format!("{} must be nonnegative", p.eps)));
        }
        if !(p.u0_amplitude >= 0.0 && p.u0_amplitude.is_finite()) {
            return Err(invalid("u0_amplitude", "must be nonnegative"));
        }
        let k_max = if p.dim == 2 { p.k_max } else { 0 };
        let r_star = (p.v0 / unit_ball_volume(p.dim)).powf(1.0 / p.dim as f64);
        let grid = RadialGrid::new(p.radius, p.cells, p.dim, r_star)?;
        let time = TimeGrid::new(p.horizon, p.steps, p.theta)?;
        let spec = AdmissibleSpec::new(grid.ball_volume(grid.r_star()), &grid)?;
        let disc = Discretization::new(grid, time, p.angular, k_max)?;
        let u0 = RadialField::from_fn(&disc.grid, |r| p.u0_amplitude * (1.0 - (r / p.radius).powi(2)));
        Self::assemble(params, disc, spec, u0)
    }

    fn assemble(params: SetupParams, disc: Discretization, spec: AdmissibleSpec, mut u0: RadialField) -> Result<Self> {
        disc.grid.check(&u0)?;
        if let Some(last) = u0.0.last_mut() {
            if last.abs() > 1e-12 {
                return Err(Error::Precondition("u0 must vanish at r = R".into()));
            }
            *last = 0.0;
        }
        if u0.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Precondition("u0 must be nonnegative".into()));
        }
        if u0.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Precondition("u0 must be nonincreasing".into()));
        }
        Ok(Self {
            params,
            disc,
            spec,
            u0,
        })
    }

    /// Replaces the initial datum; it must be nonnegative, nonincreasing and
    /// vanish at `R`.
    pub fn with_u0(&self, u0: RadialField) -> Result<Self> {
        Self::assemble(self.params.clone(), self.disc.clone(), self.spec, u0)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid("eps", format!("{eps} must be nonnegative")));
        }
        let mut s = self.clone();
        s.params.eps = eps;
        Ok(s)
    }

    pub fn params(&self) -> &SetupParams {
        &self.params
    }
    pub fn disc(&self) -> &Discretization {
        &self.disc
    }
    pub fn grid(&self) -> &RadialGrid {
        &self.disc.grid
    }
    pub fn time(&self) -> &TimeGrid {
        &self.disc.time
    }
    pub fn spec(&self) -> &AdmissibleSpec {
        &self.spec
    }
    pub fn eps(&self) -> f64 {
        self.params.eps
    }
    pub fn u0(&self) -> &RadialField {
        &self.u0
    }
    pub fn r_star(&self) -> f64 {
        self.disc.grid.r_star()
    }

    /// SHA-256 of the parameters and the initial datum.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.params).unwrap_or_default());
        for v in self.u0.iter() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `f*`, its state, its adjoint at the setup's `ε`, and `Ψ* = ∫ p*`.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub control: Control,
    pub loads: Vec<f64>,
    pub state: SpaceTimeField,
    pub adjoint: BackwardSolution,
    pub psi: RadialField,
    pub j: f64,
}

/// Adjoint of a general control: one backward solution per channel.
#[derive(Debug, Clone)]
pub struct Adjoint {
    pub channels: Vec<(Channel, BackwardSolution)>,
    /// `Ψ = ∫_0^T p dt` per channel.
    pub psi: ModalStack,
}

/// A problem instance with cached optimum.
#[derive(Debug)]
pub struct Problem {
    setup: ProblemSetup,
    optimum: OnceLock<Optimum>,
}

impl Clone for Problem {
    fn clone(&self) -> Self {
        Self::new(self.setup.clone())
    }
}

fn energy_weighted(grid: &RadialGrid, u: &[f64]) -> f64 {
    u.iter().zip(grid.weights()).map(|(x, w)| w * x * x).sum()
}

impl Problem {
    pub fn new(setup: ProblemSetup) -> Self {
        Self {
            setup,
            optimum: OnceLock::new(),
        }
    }

    pub fn defaults() -> Result<Self> {
        Ok(Self::new(ProblemSetup::new(SetupParams::default())?))
    }

    pub fn setup(&self) -> &ProblemSetup {
        &self.setup
    }
    pub fn disc(&self) -> &Discretization {
        &self.setup.disc
    }
    pub fn grid(&self) -> &RadialGrid {
        &self.setup.disc.grid
    }
    pub fn time(&self) -> &TimeGrid {
        &self.setup.disc.time
    }

    /// Same instance with another `ε`.
    pub fn with_eps(&self, eps: f64) -> Result<Problem> {
        Ok(Problem::new(self.setup.with_eps(eps)?))
    }

    fn propagator(&self, k: usize) -> Result<Propagator> {
        Propagator::new(self.grid(), self.time(), k)
    }

    /// `f* = 1_{B*}` as a control.
    pub fn star_control(&self) -> Control {
        Control::Shape(Shape::centered_ball(self.setup.r_star()))
    }

    pub fn optimum(&self) -> Result<&Optimum> {
        if let Some(o) = self.optimum.get() {
            return Ok(o);
        }
        let o = self.compute_optimum()?;
        Ok(self.optimum.get_or_init(|| o))
    }

    fn compute_optimum(&self) -> Result<Optimum> {
        let control = self.star_control();
        let loads = control.loads(self.disc())?.channels[&Channel::RADIAL].at(0).to_vec();
        let prop = self.propagator(0)?;
        let state = prop.solve_forward(&ModalProblem {
            k: 0,
            source: crate::radial_pde::Source::Steady(&loads),
            data: Some(&self.setup.u0),
            jump: 0.0,
        })?;
        let adjoint = self.backward(&prop, &state)?;
        let psi = time_integral(self.time(), &adjoint.switch)?;
        let j = self.channel_energy(Channel::RADIAL, &state);
        Ok(Optimum {
            control,
            loads,
            state,
            adjoint,
            psi,
            j,
        })
    }

    fn backward(&self, prop: &Propagator, state: &SpaceTimeField) -> Result<BackwardSolution> {
        let eps = self.setup.eps();
        let g: Vec<f64> = state.row(self.time().steps()).iter().map(|v| eps * v).collect();
        prop.solve_backward(&ModalProblem {
            k: state.mode(),
            source: crate::radial_pde::Source::Field(state),
            data: Some(&g),
            jump: 0.0,
        })
    }

    fn channel_energy(&self, c: Channel, state: &SpaceTimeField) -> f64 {
        let time = self.time();
        let running: f64 = (0..time.len())
            .map(|n| time.quad_weight(n) * energy_weighted(self.grid(), state.row(n)))
            .sum();
        let terminal = energy_weighted(self.grid(), state.row(time.steps()));
        c.parseval_weight(self.grid()) * (0.5 * running + 0.5 * self.setup.eps() * terminal)
    }

    /// `(Σ_n c_n ⟨u,u⟩_W, ⟨u^N,u^N⟩_W)` per channel, scaled by the Parseval
    /// weight, without storing the state.
    fn channel_terms(&self, loads: &ModalStack, with_u0: bool) -> Result<Vec<(f64, f64)>> {
        let jobs: Vec<(&Channel, &Slices)> = loads.channels.iter().collect();
        let grid = self.grid();
        let time = self.time();
        jobs.par_iter()
            .map(|(c, s)| {
                let prop = self.propagator(c.k)?;
                let data = (with_u0 && **c == Channel::RADIAL).then_some(&self.setup.u0.0[..]);
                let mut running = 0.0;
                let mut terminal = 0.0;
                prop.forward_visit(
                    &ModalProblem {
                        k: c.k,
                        source: s.source(),
                        data,
                        jump: 0.0,
                    },
                    |n, u| {
                        let e = energy_weighted(grid, u);
                        running += time.quad_weight(n) * e;
                        if n == time.steps() {
                            terminal = e;
                        }
                    },
                )?;
                let lam = c.parseval_weight(grid);
                Ok((lam * running, lam * terminal))
            })
            .collect()
    }

    fn objective(&self, loads: &ModalStack, eps: f64, with_u0: bool) -> Result<f64> {
        let mut total = 0.0;
        if with_u0 && !loads.channels.contains_key(&Channel::RADIAL) {
            let zero = ModalStack::radial(vec![0.0; self.grid().len()]);
            let t = self.channel_terms(&zero, true)?;
            total += 0.5 * t[0].0 + 0.5 * eps * t[0].1;
        }
        for (running, terminal) in self.channel_terms(loads, with_u0)? {
            total += 0.5 * running + 0.5 * eps * terminal;
        }
        Ok(total)
    }

    /// `J_T(f) = ½ ∬ u_f²`.
    pub fn evaluate_jt(&self, f: &Control) -> Result<f64> {
        self.objective(&f.loads(self.disc())?, 0.0, true)
    }

    /// `J_T^ε(f) = J_T(f) + (ε/2) ∫ u_f(T)²`.
    pub fn evaluate_jt_eps(&self, f: &Control) -> Result<f64> {
        self.objective(&f.loads(self.disc())?, self.setup.eps(), true)
    }

    /// `J_T^ε` for raw channel loads (which need not be admissible).
    pub fn evaluate_loads(&self, loads: &ModalStack) -> Result<f64> {
        self.objective(loads, self.setup.eps(), true)
    }

    /// `½ ∬ u̇²` (+ terminal term) of the linearized state driven by `h`.
    pub fn curvature(&self, h: &ModalStack) -> Result<f64> {
        self.objective(h, self.setup.eps(), false)
    }

    /// `∫_0^T u_f(T)²`-free terminal energy `∫ u_f(T)²`.
    pub fn terminal_energy(&self, f: &Control) -> Result<f64> {
        let t = self.channel_terms(&f.loads(self.disc())?, true)?;
        Ok(t.iter().map(|x| x.1).sum())
    }

    /// State of every channel.
    pub fn solve_state(&self, f: &Control) -> Result<Vec<(Channel, SpaceTimeField)>> {
        let loads = f.loads(self.disc())?;
        loads
            .channels
            .par_iter()
            .map(|(c, s)| {
                let data = (*c == Channel::RADIAL).then_some(&self.setup.u0.0[..]);
                let u = self.propagator(c.k)?.solve_forward(&ModalProblem {
                    k: c.k,
                    source: s.source(),
                    data,
                    jump: 0.0,
                })?;
                Ok((*c, u))
            })
            .collect()
    }

    /// State at the given time nodes, sampled on the polar grid unless the
    /// control is radial.
    pub fn state_slices(&self, f: &Control, nodes: &[usize]) -> Result<Vec<Slice>> {
        let loads = f.loads(self.disc())?;
        if let Some(&n) = nodes.iter().find(|&&n| n >= self.time().len()) {
            return Err(invalid("nodes", format!("time node {n} out of range")));
        }
        let rows: Vec<(Channel, Vec<Vec<f64>>)> = loads
            .channels
            .par_iter()
            .map(|(c, s)| {
                let data = (*c == Channel::RADIAL).then_some(&self.setup.u0.0[..]);
                let mut rows = vec![Vec::new(); nodes.len()];
                self.propagator(c.k)?.forward_visit(
                    &ModalProblem {
                        k: c.k,
                        source: s.source(),
                        data,
                        jump: 0.0,
                    },
                    |n, u| {
                        for (slot, &m) in rows.iter_mut().zip(nodes) {
                            if m == n {
                                *slot = u.to_vec();
                            }
                        }
                    },
                )?;
                Ok((*c, rows))
            })
            .collect::<Result<_>>()?;
        let radial = rows.iter().all(|(c, _)| c.k == 0);
        Ok((0..nodes.len())
            .map(|i| {
                if radial {
                    let zero = vec![0.0; self.grid().len()];
                    Slice::Radial(rows.first().map_or(zero, |(_, r)| r[i].clone()))
                } else {
                    let stack = ModalStack {
                        channels: rows.iter().map(|(c, r)| (*c, Slices::Steady(r[i].clone()))).collect(),
                    };
                    Slice::Polar(stack.sample_polar(self.disc(), 0))
                }
            })
            .collect())
    }

    /// Adjoint `p_f` per channel (terminal data `ε u_f(T)`) and `Ψ = ∫ p_f`.
    pub fn adjoint_switch(&self, f: &Control) -> Result<Adjoint> {
        let states = self.solve_state(f)?;
        let channels: Vec<(Channel, BackwardSolution)> = states
            .par_iter()
            .map(|(c, u)| Ok((*c, self.backward(&self.propagator(c.k)?, u)?)))
            .collect::<Result<_>>()?;
        let mut psi = ModalStack::default();
        for (c, b) in &channels {
            psi.channels
                .insert(*c, Slices::Steady(time_integral(self.time(), &b.switch)?.0));
        }
        Ok(Adjoint { channels, psi })
    }

    /// Channel loads of `g - f`.
    pub fn direction(&self, g: &Control, f: &Control) -> Result<ModalStack> {
        Ok(g.loads(self.disc())?.axpy(-1.0, &f.loads(self.disc())?))
    }

    fn check_mass_free(&self, h: &ModalStack) -> Result<()> {
        if let Some(s) = h.channels.get(&Channel::RADIAL) {
            let ones = vec![1.0; self.grid().len()];
            let slices = if matches!(s, Slices::Timed(_)) { self.time().len() } else { 1 };
            for n in 0..slices {
                let m = self.grid().angular_measure() * crate::geometry::dot_w(self.grid(), s.at(n), &ones);
                if m.abs() > 1e-8 * self.setup.spec.v0 {
                    return Err(Error::Precondition(format!(
                        "direction carries mass {m} at time node {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `∬ h p_f`, the exact directional derivative of the discrete `J_T^ε`.
    pub fn gateaux(&self, f: &Control, h: &ModalStack) -> Result<f64> {
        self.check_mass_free(h)?;
        let adj = self.adjoint_switch(f)?;
        Ok(self.pairing(&adj, h))
    }

    /// `Σ_c λ_c Σ_n c_n ⟨h_c^n, p_c^n⟩_W`.
    pub fn pairing(&self, adj: &Adjoint, h: &ModalStack) -> f64 {
        let time = self.time();
        let grid = self.grid();
        adj.channels
            .iter()
            .filter_map(|(c, b)| h.channels.get(c).map(|s| (c, b, s)))
            .map(|(c, b, s)| {
                let sum: f64 = (0..time.len())
                    .map(|n| time.quad_weight(n) * crate::geometry::dot_w(grid, s.at(n), b.switch.row(n)))
                    .sum();
                c.parseval_weight(grid) * sum
            })
            .sum()
    }

    /// `|J(f+h) - J(f) - ∬ h p_f - ½ ∬ u̇²|`, zero up to roundoff.
    pub fn quadratic_expansion_check(&self, f: &Control, h: &ModalStack) -> Result<ExpansionCheck> {
        let loads = f.loads(self.disc())?;
        let j = self.evaluate_loads(&loads)?;
        let j_plus = self.evaluate_loads(&loads.axpy(1.0, h))?;
        let first = self.gateaux(f, h)?;
        let second = self.curvature(h)?;
        Ok(ExpansionCheck {
            j,
            first,
            second,
            residual: (j_plus - j - first - second).abs(),
        })
    }

    /// `a_ε(t_n) = -∂_r p*(t_n, r*)`, the mean of the one-sided derivatives
    /// of the backward state at `r*`.
    pub fn normal_weight(&self) -> Result<Vec<f64>> {
        let o = self.optimum()?;
        let j = self.grid().star_index();
        (0..self.time().len())
            .map(|n| {
                let row = o.adjoint.state.row(n);
                let a = one_sided_derivative(self.grid(), row, j, Side::Inner)?;
                let b = one_sided_derivative(self.grid(), row, j, Side::Outer)?;
                Ok(-0.5 * (a + b))
            })
            .collect()
    }

    /// Deficit ratio for a time-independent competitor (`ε = 0`).
    pub fn deficit_ti(&self, f: &Control, id: &str, family: &str, params: &str) -> Result<DeficitReport> {
        if self.setup.eps() != 0.0 {
            return Err(Error::Precondition("time-independent deficit needs eps = 0".into()));
        }
        if f.is_time_dependent() {
            return Err(Error::Precondition("competitor depends on time".into()));
        }
        let star = self.star_control();
        let l1 = l1_distance(self.disc(), f, &star, 0)?;
        if l1 <= 1e-10 {
            return Err(Error::Precondition("competitor coincides with f*".into()));
        }
        let deficit = self.optimum()?.j - self.evaluate_jt(f)?;
        let l1_sq = l1 * l1;
        Ok(DeficitReport {
            competitor_id: id.into(),
            family: family.into(),
            params: params.into(),
            deficit,
            l1_sq,
            weight_min: None,
            ratio: deficit / l1_sq,
        })
    }

    /// Weighted deficit for a time-dependent competitor (`ε > 0`).
    pub fn deficit_td(&self, f: &Control, id: &str, family: &str, params: &str) -> Result<DeficitReport> {
        if self.setup.eps() <= 0.0 {
            return Err(Error::Precondition("time-dependent deficit needs eps > 0".into()));
        }
        let weights = self.normal_weight()?;
        let star = self.star_control();
        let time = self.time();
        let mut l1_sq = 0.0;
        let mut farthest = 0.0f64;
        for (n, a) in weights.iter().enumerate() {
            let idx = if f.is_time_dependent() { n } else { 0 };
            let d = l1_distance(self.disc(), f, &star, idx)?;
            farthest = farthest.max(d);
            l1_sq += time.quad_weight(n) * a * d * d;
        }
        if farthest <= 1e-10 {
            return Err(Error::Precondition("competitor coincides with f*".into()));
        }
        let deficit = self.optimum()?.j - self.evaluate_jt_eps(f)?;
        Ok(DeficitReport {
            competitor_id: id.into(),
            family: family.into(),
            params: params.into(),
            deficit,
            l1_sq,
            weight_min: Some(weights.iter().copied().fold(f64::INFINITY, f64::min)),
            ratio: deficit / l1_sq,
        })
    }
}

/// Terms of the exact second-order expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub j: f64,
    pub first: f64,
    pub second: f64,
    pub residual: f64,
}

impl ExpansionCheck {
    pub fn relative(&self) -> f64 {
        self.residual / self.j.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitReport {
    pub competitor_id: String,
    pub family: String,
    pub params: String,
    pub deficit: f64,
    pub l1_sq: f64,
    pub weight_min: Option<f64>,
    pub ratio: f64,
}

pub const DEFICIT_CSV_HEADER: &str = "competitor_id,family,delta_or_params,deficit,l1_sq,weight_min,ratio";

/// Floating-point value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl DeficitReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            csv_field(&self.competitor_id),
            csv_field(&self.family),
            csv_field(&self.params),
            fmt_f64(self.deficit),
            fmt_f64(self.l1_sq),
            self.weight_min.map(fmt_f64).unwrap_or_default(),
            fmt_f64(self.ratio)
        )
    }

    /// JSON record with the setup hash and grid sizes.
    pub fn json_record(&self, setup: &ProblemSetup) -> serde_json::Value {
        serde_json::json!({
            "report": self,
            "setup_hash": setup.hash(),
            "setup": setup.params(),
            "grid": setup.disc().fingerprint(),
        })
    }
}
