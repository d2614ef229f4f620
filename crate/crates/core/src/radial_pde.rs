//! Modal heat solver in radial coordinates.
//!
//! For an angular mode `k` the operator `-(1/r^{n-1}) ∂_r(r^{n-1} ∂_r) + k²/r²`
//! is discretized with P1 elements on the radial grid and a lumped mass
//! matrix `W = diag(w_j)`. Time stepping is a θ-scheme
//!
//! ```text
//! (W + θ dt A) u^{s+1} = (W - (1-θ) dt A) u^s + dt W (θ F^{s+1} + (1-θ) F^s)
//! ```
//!
//! and the backward solver is its exact algebraic transpose, so the duality
//! pairing between states and switch functions holds to roundoff.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{RadialField, RadialGrid, TimeGrid};
use crate::tridiag::Tridiagonal;

/// Values on the space-time grid, one row per time node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    mode: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &RadialGrid, time: &TimeGrid, mode: usize) -> Self {
        Self {
            mode,
            cols: grid.len(),
            values: vec![0.0; grid.len() * time.len()],
        }
    }

    /// Field given by `f(t, r)` at every node.
    pub fn from_fn(
        grid: &RadialGrid,
        time: &TimeGrid,
        mode: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid, time, mode);
        for n in 0..time.len() {
            let t = time.time(n);
            for (v, &r) in out.row_mut(n).iter_mut().zip(grid.nodes()) {
                *v = f(t, r);
            }
        }
        out
    }

    pub fn mode(&self) -> usize {
        self.mode
    }
    pub fn rows(&self) -> usize {
        self.values.len() / self.cols
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.cols..(n + 1) * self.cols]
    }
    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.cols..(n + 1) * self.cols]
    }
    pub fn at(&self, n: usize, j: usize) -> f64 {
        self.values[n * self.cols + j]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check(&self, grid: &RadialGrid, time: &TimeGrid) -> Result<()> {
        if self.cols != grid.len() || self.rows() != time.len() {
            return Err(Error::GridMismatch {
                expected: grid.len() * time.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Right-hand side of a modal solve, as nodal values of the load density.
#[derive(Debug, Clone, Copy, Default)]
pub enum Source<'a> {
    #[default]
    Zero,
    /// The same nodal vector at every time node.
    Steady(&'a [f64]),
    /// One nodal vector per time node.
    Timed(&'a [Vec<f64>]),
    Field(&'a SpaceTimeField),
}

impl Source<'_> {
    fn at(&self, n: usize) -> Option<&[f64]> {
        match self {
            Source::Zero => None,
            Source::Steady(v) => Some(v),
            Source::Timed(v) => Some(&v[n]),
            Source::Field(f) => Some(f.row(n)),
        }
    }

    fn check(&self, grid: &RadialGrid, time: &TimeGrid) -> Result<()> {
        let m = grid.len();
        let bad = |found| Error::GridMismatch { expected: m, found };
        match self {
            Source::Zero => Ok(()),
            Source::Steady(v) => (v.len() == m).then_some(()).ok_or(bad(v.len())),
            Source::Timed(v) => {
                if v.len() != time.len() {
                    return Err(Error::GridMismatch {
                        expected: time.len(),
                        found: v.len(),
                    });
                }
                v.iter()
                    .try_for_each(|s| (s.len() == m).then_some(()).ok_or(bad(s.len())))
            }
            Source::Field(f) => f.check(grid, time),
        }
    }
}

/// One modal solve: mode, load, initial (forward) or terminal (backward)
/// data, and the strength of a point load on the sphere `|x| = r*`.
///
/// A jump strength `s` produces the flux jump `⟦∂_r u⟧(r*) = -s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModalProblem<'a> {
    pub k: usize,
    pub source: Source<'a>,
    pub data: Option<&'a [f64]>,
    pub jump: f64,
}

/// Output of [`Propagator::solve_backward`].
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    /// Backward state `Λ^n`, the transposed recursion run from the terminal data.
    pub state: SpaceTimeField,
    /// Switch values `p^n` such that the state-source pairing is
    /// `Σ_n c_n ⟨F^n, p^n⟩_W`.
    pub switch: SpaceTimeField,
}

/// Factorized one-step operators for a fixed mode and grid pair.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: RadialGrid,
    time: TimeGrid,
    k: usize,
    lo: usize,
    // factors of W + θ dt A on the active nodes, for θ = 1 and the base θ
    implicit: Tridiagonal,
    base: Option<Tridiagonal>,
}

impl Propagator {
    pub fn new(grid: &RadialGrid, time: &TimeGrid, k: usize) -> Result<Self> {
        if k > 0 && grid.dim() != 2 {
            return Err(Error::Unsupported(format!(
                "angular mode {k} requires n = 2"
            )));
        }
        let (diag, off) = stiffness(grid, k);
        let lo = usize::from(k > 0);
        let w = &grid.weights()[lo..grid.cells()];
        let factor = |theta: f64| {
            let a = theta * time.dt();
            let d: Vec<f64> = diag.iter().zip(w).map(|(d, w)| w + a * d).collect();
            let o: Vec<f64> = off.iter().map(|o| a * o).collect();
            Tridiagonal::factor(&d, &o)
        };
        let implicit = factor(1.0)?;
        let base = if time.theta() < 1.0 {
            Some(factor(time.theta())?)
        } else {
            None
        };
        Ok(Self {
            grid: grid.clone(),
            time: time.clone(),
            k,
            lo,
            implicit,
            base,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    pub fn time(&self) -> &TimeGrid {
        &self.time
    }
    pub fn mode(&self) -> usize {
        self.k
    }

    fn factor_for(&self, s: usize) -> (&Tridiagonal, f64) {
        let theta = self.time.step_theta(s);
        match (&self.base, theta < 1.0) {
            (Some(b), true) => (b, theta),
            _ => (&self.implicit, 1.0),
        }
    }

    fn check(&self, p: &ModalProblem<'_>) -> Result<()> {
        if p.k != self.k {
            return Err(invalid(
                "k",
                format!("problem mode {} on a mode-{} propagator", p.k, self.k),
            ));
        }
        p.source.check(&self.grid, &self.time)?;
        if let Some(d) = p.data {
            self.grid.check(d)?;
        }
        if !p.jump.is_finite() {
            return Err(invalid("jump", "must be finite"));
        }
        Ok(())
    }

    /// `F^n` restricted to the active nodes, including the point load.
    fn load(&self, p: &ModalProblem<'_>, n: usize, out: &mut [f64]) {
        let hi = self.grid.cells();
        match p.source.at(n) {
            Some(v) => out.copy_from_slice(&v[self.lo..hi]),
            None => out.iter_mut().for_each(|x| *x = 0.0),
        }
        if p.jump != 0.0 {
            let j = self.grid.star_index();
            let rs = self.grid.r_star();
            out[j - self.lo] +=
                rs.powi(self.grid.dim() as i32 - 1) * p.jump / self.grid.weights()[j];
        }
    }

    /// Runs the forward scheme, handing every time level (full nodal vector)
    /// to `visit`.
    pub fn forward_visit(
        &self,
        p: &ModalProblem<'_>,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        self.check(p)?;
        let (lo, hi) = (self.lo, self.grid.cells());
        let m = hi - lo;
        let w = &self.grid.weights()[lo..hi];
        let dt = self.time.dt();
        let mut full = vec![0.0; self.grid.len()];
        let mut u = vec![0.0; m];
        if let Some(d) = p.data {
            u.copy_from_slice(&d[lo..hi]);
        }
        full[lo..hi].copy_from_slice(&u);
        visit(0, &full);

        let mut f_now = vec![0.0; m];
        let mut f_next = vec![0.0; m];
        self.load(p, 0, &mut f_now);
        let mut rhs = vec![0.0; m];
        for s in 0..self.time.steps() {
            self.load(p, s + 1, &mut f_next);
            let (fac, theta) = self.factor_for(s);
            // u^{s+1} = [B^{-1} W (u^s + θ dt F̄) - (1-θ) u^s] / θ
            for i in 0..m {
                let fbar = theta * f_next[i] + (1.0 - theta) * f_now[i];
                rhs[i] = w[i] * (u[i] + theta * dt * fbar);
            }
            fac.solve(&mut rhs);
            if theta == 1.0 {
                u.copy_from_slice(&rhs);
            } else {
                for i in 0..m {
                    u[i] = (rhs[i] - (1.0 - theta) * u[i]) / theta;
                }
            }
            full[lo..hi].copy_from_slice(&u);
            visit(s + 1, &full);
            std::mem::swap(&mut f_now, &mut f_next);
        }
        Ok(())
    }

    pub fn solve_forward(&self, p: &ModalProblem<'_>) -> Result<SpaceTimeField> {
        let mut out = SpaceTimeField::zeros(&self.grid, &self.time, self.k);
        self.forward_visit(p, |n, u| out.row_mut(n).copy_from_slice(u))?;
        Ok(out)
    }

    /// Transposed scheme: `source` plays the role of the running weight `q`
    /// and `data` is the terminal value `g`.
    pub fn solve_backward(&self, p: &ModalProblem<'_>) -> Result<BackwardSolution> {
        self.check(p)?;
        let (lo, hi) = (self.lo, self.grid.cells());
        let m = hi - lo;
        let w = &self.grid.weights()[lo..hi];
        let dt = self.time.dt();
        let steps = self.time.steps();
        let c = |n: usize| self.time.quad_weight(n);

        let mut state = SpaceTimeField::zeros(&self.grid, &self.time, self.k);
        let mut switch = SpaceTimeField::zeros(&self.grid, &self.time, self.k);
        let mut q = vec![0.0; m];
        self.load(p, steps, &mut q);
        let mut lam: Vec<f64> = (0..m)
            .map(|i| c(steps) * q[i] + p.data.map_or(0.0, |g| g[lo + i]))
            .collect();
        state.row_mut(steps)[lo..hi].copy_from_slice(&lam);

        let mut hat = vec![0.0; m];
        for s in (0..steps).rev() {
            let (fac, theta) = self.factor_for(s);
            for i in 0..m {
                hat[i] = w[i] * lam[i];
            }
            fac.solve(&mut hat);
            let to_next = dt * theta / c(s + 1);
            for (v, h) in switch.row_mut(s + 1)[lo..hi].iter_mut().zip(&hat) {
                *v += to_next * h;
            }
            if theta < 1.0 {
                let to_this = dt * (1.0 - theta) / c(s);
                for (v, h) in switch.row_mut(s)[lo..hi].iter_mut().zip(&hat) {
                    *v += to_this * h;
                }
            }
            self.load(p, s, &mut q);
            for i in 0..m {
                let propagated = if theta == 1.0 {
                    hat[i]
                } else {
                    (hat[i] - (1.0 - theta) * lam[i]) / theta
                };
                lam[i] = c(s) * q[i] + propagated;
            }
            state.row_mut(s)[lo..hi].copy_from_slice(&lam);
        }
        Ok(BackwardSolution { state, switch })
    }

    /// `y_k`: zero initial data, no source, unit point load at `r*`.
    pub fn solve_jump_forward(&self) -> Result<SpaceTimeField> {
        if self.k == 0 {
            return Err(invalid("k", "jump systems start at k = 1"));
        }
        self.solve_forward(&ModalProblem {
            k: self.k,
            jump: 1.0,
            ..Default::default()
        })
    }
}

/// Stiffness matrix of mode `k` on the active nodes: diagonal and
/// off-diagonal.
fn stiffness(grid: &RadialGrid, k: usize) -> (Vec<f64>, Vec<f64>) {
    let m = grid.cells();
    let n = grid.dim() as i32;
    let dr = grid.dr();
    let r = grid.nodes();
    // ∫_{cell} r^{n-1} dr / Δr²
    let cell: Vec<f64> = (0..m)
        .map(|i| (r[i + 1].powi(n) - r[i].powi(n)) / (n as f64 * dr * dr))
        .collect();
    let mut diag = vec![0.0; m];
    for i in 0..m {
        diag[i] += cell[i];
        if i > 0 {
            diag[i] += cell[i - 1];
        }
    }
    let k2 = (k * k) as f64;
    if k > 0 {
        for j in 1..m {
            diag[j] += k2 * grid.weights()[j] / (r[j] * r[j]);
        }
    }
    let lo = usize::from(k > 0);
    let off: Vec<f64> = (lo..m - 1).map(|i| -cell[i]).collect();
    (diag[lo..].to_vec(), off)
}

/// Free-function form of [`Propagator::solve_forward`].
pub fn solve_forward(
    grid: &RadialGrid,
    time: &TimeGrid,
    p: &ModalProblem<'_>,
) -> Result<SpaceTimeField> {
    Propagator::new(grid, time, p.k)?.solve_forward(p)
}

/// Free-function form of [`Propagator::solve_backward`].
pub fn solve_backward(
    grid: &RadialGrid,
    time: &TimeGrid,
    p: &ModalProblem<'_>,
) -> Result<BackwardSolution> {
    Propagator::new(grid, time, p.k)?.solve_backward(p)
}

/// `y_k` for mode `k ≥ 1`.
pub fn solve_jump_forward(grid: &RadialGrid, time: &TimeGrid, k: usize) -> Result<SpaceTimeField> {
    if k == 0 {
        return Err(invalid("k", "jump systems start at k = 1"));
    }
    Propagator::new(grid, time, k)?.solve_jump_forward()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Inner,
    Outer,
}

/// Second-order one-sided derivative `∂_r` of a nodal vector at node `j`.
pub fn one_sided_derivative(grid: &RadialGrid, values: &[f64], j: usize, side: Side) -> Result<f64> {
    grid.check(values)?;
    let dr = grid.dr();
    match side {
        Side::Inner if j >= 2 => {
            Ok((3.0 * values[j] - 4.0 * values[j - 1] + values[j - 2]) / (2.0 * dr))
        }
        Side::Outer if j + 2 <= grid.cells() => {
            Ok((-3.0 * values[j] + 4.0 * values[j + 1] - values[j + 2]) / (2.0 * dr))
        }
        _ => Err(Error::Precondition(format!(
            "fewer than 3 nodes on the {side:?} side of node {j}"
        ))),
    }
}

/// `∂_r F(t_n, r)` by a one-sided second-order stencil; `r` must be a node.
pub fn normal_derivative_at(
    grid: &RadialGrid,
    field: &SpaceTimeField,
    n: usize,
    r: f64,
    side: Side,
) -> Result<f64> {
    if field.cols() != grid.len() || n >= field.rows() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            found: field.cols(),
        });
    }
    let j = grid
        .node_index(r)
        .ok_or_else(|| Error::Precondition(format!("r = {r} is not a grid node")))?;
    one_sided_derivative(grid, field.row(n), j, side)
}

/// Jump `∂_r F(r+) - ∂_r F(r-)` at node `j`.
pub fn flux_jump(grid: &RadialGrid, values: &[f64], j: usize) -> Result<f64> {
    Ok(one_sided_derivative(grid, values, j, Side::Outer)?
        - one_sided_derivative(grid, values, j, Side::Inner)?)
}

/// Trapezoid integral in time at every node.
pub fn time_integral(time: &TimeGrid, field: &SpaceTimeField) -> Result<RadialField> {
    if field.rows() != time.len() {
        return Err(Error::GridMismatch {
            expected: time.len(),
            found: field.rows(),
        });
    }
    let mut acc = vec![0.0; field.cols()];
    for n in 0..time.len() {
        let c = time.quad_weight(n);
        for (a, v) in acc.iter_mut().zip(field.row(n)) {
            *a += c * v;
        }
    }
    Ok(RadialField(acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids(m: usize, n: usize, t: f64) -> (RadialGrid, TimeGrid) {
        (
            RadialGrid::new(1.0, m, 2, 0.5).unwrap(),
            TimeGrid::new(t, n, 0.5).unwrap(),
        )
    }

    #[test]
    fn zero_data_gives_zero() {
        let (g, t) = grids(32, 16, 1.0);
        let u = solve_forward(&g, &t, &ModalProblem::default()).unwrap();
        assert_eq!(u.max(), 0.0);
        assert_eq!(u.min(), 0.0);
        let p = solve_backward(&g, &t, &ModalProblem::default()).unwrap();
        assert_eq!(p.switch.max(), 0.0);
    }

    #[test]
    fn steady_state_of_unit_source() {
        let (g, t) = grids(128, 400, 20.0);
        let one = vec![1.0; g.len()];
        let u = solve_forward(
            &g,
            &t,
            &ModalProblem {
                source: Source::Steady(&one),
                ..Default::default()
            },
        )
        .unwrap();
        let last = u.row(t.steps());
        for (v, r) in last.iter().zip(g.nodes()) {
            assert!((v - (1.0 - r * r) / 4.0).abs() < 1e-4, "{r}: {v}");
        }
        assert_eq!(last[g.cells()], 0.0);
    }

    #[test]
    fn backward_is_time_reversed_forward() {
        let (g, t) = grids(40, 30, 0.3);
        let data: Vec<f64> = g.nodes().iter().map(|r| (1.0 - r) * (2.0 + r.sin())).collect();
        for k in [0, 3] {
            let prop = Propagator::new(&g, &t, k).unwrap();
            let p = ModalProblem {
                k,
                data: Some(&data),
                ..Default::default()
            };
            let fwd = prop.solve_forward(&p).unwrap();
            let bwd = prop.solve_backward(&p).unwrap();
            for n in 0..t.len() {
                for j in 0..g.len() {
                    let a = fwd.at(n, j);
                    let b = bwd.state.at(t.steps() - n, j);
                    assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{n} {j}");
                }
            }
        }
    }

    #[test]
    fn duality_is_exact() {
        let (g, t) = grids(24, 20, 0.5);
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for k in [0, 1, 4] {
            let h: Vec<Vec<f64>> = (0..t.len())
                .map(|_| (0..g.len()).map(|_| rnd()).collect())
                .collect();
            let q: Vec<Vec<f64>> = (0..t.len())
                .map(|_| (0..g.len()).map(|_| rnd()).collect())
                .collect();
            let gterm: Vec<f64> = (0..g.len()).map(|_| rnd()).collect();
            let prop = Propagator::new(&g, &t, k).unwrap();
            let u = prop
                .solve_forward(&ModalProblem {
                    k,
                    source: Source::Timed(&h),
                    ..Default::default()
                })
                .unwrap();
            let adj = prop
                .solve_backward(&ModalProblem {
                    k,
                    source: Source::Timed(&q),
                    data: Some(&gterm),
                    jump: 0.0,
                })
                .unwrap();
            let mut lhs = crate::geometry::dot_w(&g, u.row(t.steps()), &gterm);
            let mut rhs = 0.0;
            for n in 0..t.len() {
                lhs += t.quad_weight(n) * crate::geometry::dot_w(&g, u.row(n), &q[n]);
                rhs += t.quad_weight(n) * crate::geometry::dot_w(&g, &h[n], adj.switch.row(n));
            }
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()), "k={k}: {lhs} {rhs}");
        }
    }

    #[test]
    fn jump_system_has_unit_flux_jump() {
        let (g, t) = grids(256, 128, 1.0);
        let y = solve_jump_forward(&g, &t, 1).unwrap();
        let jump = flux_jump(&g, y.row(t.steps()), g.star_index()).unwrap();
        assert!((jump + 1.0).abs() < 5e-2, "{jump}");
        assert!(y.min() >= -1e-12);
        assert!(solve_jump_forward(&g, &t, 0).is_err());
    }

    #[test]
    fn derivative_stencils() {
        let (g, t) = grids(64, 4, 1.0);
        let f = SpaceTimeField::from_fn(&g, &t, 0, |_, r| r * r);
        for side in [Side::Inner, Side::Outer] {
            let d = normal_derivative_at(&g, &f, 2, 0.5, side).unwrap();
            assert!((d - 1.0).abs() < 1e-10);
        }
        let c = SpaceTimeField::from_fn(&g, &t, 0, |_, _| 3.0);
        assert_eq!(normal_derivative_at(&g, &c, 0, 0.5, Side::Outer).unwrap(), 0.0);
        assert!(normal_derivative_at(&g, &f, 0, 1.0 / 64.0, Side::Inner).is_err());
        assert!(normal_derivative_at(&g, &f, 0, 0.501, Side::Inner).is_err());
    }

    #[test]
    fn time_integral_cases() {
        let (g, t) = grids(16, 10, 1.0);
        let one = SpaceTimeField::from_fn(&g, &t, 0, |_, _| 1.0);
        let lin = SpaceTimeField::from_fn(&g, &t, 0, |s, _| s);
        for (f, e) in [(one, 1.0), (lin, 0.5)] {
            let v = time_integral(&t, &f).unwrap();
            assert!(v.iter().all(|x| (x - e).abs() < 1e-12));
        }
    }
}
