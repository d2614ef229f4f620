//! Radial and temporal grids on the disk `B(0, R)`.
//!
//! Radial quantities are integrated against the measure `r^{n-1} dr` with
//! the weights of piecewise-linear hat functions, so that every quadrature
//! is exact for integrands that are linear in `r` and the control loads of
//! the parabolic solver are exact integrals of hat functions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MIN_CELLS: usize = 4;

/// Volume of the unit ball in dimension `n` (n = 2 or 3).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("dimension {n} not supported"),
    }
}

/// Area of the unit sphere, `n * Vol(B(0,1))`; the prefactor turning radial
/// integrals into volume integrals.
pub fn sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫_{s0}^{s1} s^p (a + s)^{n-1} ds` expanded around `a` to avoid
/// cancellation when `s` is small against `a`.
fn shifted_moment(a: f64, s0: f64, s1: f64, p: usize, n: usize) -> f64 {
    (0..n)
        .map(|m| {
            let e = (m + p + 1) as i32;
            binomial(n - 1, m) * a.powi((n - 1 - m) as i32) * (s1.powi(e) - s0.powi(e))
                / e as f64
        })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialGrid {
    radius: f64,
    cells: usize,
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    star_index: usize,
    star_shift: f64,
}

/// `build_radial_grid`: uniform grid on `[0, R]` with `r_star` snapped to
/// the nearest interior node.
pub fn build_radial_grid(radius: f64, cells: usize, dim: usize, r_star: f64) -> Result<RadialGrid> {
    RadialGrid::new(radius, cells, dim, r_star)
}

impl RadialGrid {
    pub fn new(radius: f64, cells: usize, dim: usize, r_star: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", "must be positive"));
        }
        if !(2..=3).contains(&dim) {
            return Err(invalid("dim", format!("{dim} not in {{2, 3}}")));
        }
        if cells < MIN_CELLS {
            return Err(invalid(
                "cells",
                format!("{cells} below the minimum of {MIN_CELLS}"),
            ));
        }
        if !(r_star > 0.0 && r_star < radius) {
            return Err(invalid("r_star", format!("{r_star} outside (0, {radius})")));
        }
        let dr = radius / cells as f64;
        let nodes: Vec<f64> = (0..=cells)
            .map(|j| if j == cells { radius } else { j as f64 * dr })
            .collect();
        let star_index = ((r_star / dr).round() as usize).clamp(1, cells - 1);
        let star_shift = nodes[star_index] - r_star;

        let mut weights = vec![0.0; cells + 1];
        for i in 0..cells {
            let a = nodes[i];
            let h = nodes[i + 1] - a;
            // ∫ over cell i of (r - r_i)/h r^{n-1} and (r_{i+1} - r)/h r^{n-1}
            let rising = shifted_moment(a, 0.0, h, 1, dim) / h;
            let total = shifted_moment(a, 0.0, h, 0, dim);
            weights[i] += total - rising;
            weights[i + 1] += rising;
        }
        Ok(Self {
            radius,
            cells,
            dim,
            nodes,
            weights,
            star_index,
            star_shift,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn cells(&self) -> usize {
        self.cells
    }
    pub fn len(&self) -> usize {
        self.cells + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn dr(&self) -> f64 {
        self.radius / self.cells as f64
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn star_index(&self) -> usize {
        self.star_index
    }
    pub fn r_star(&self) -> f64 {
        self.nodes[self.star_index]
    }
    /// Signed displacement applied to the requested `r_star` when snapping.
    pub fn star_shift(&self) -> f64 {
        self.star_shift
    }
    pub fn surface_const(&self) -> f64 {
        self.dim as f64 * unit_ball_volume(self.dim).powf(1.0 / self.dim as f64)
    }
    /// `n Vol(B(0,1))`.
    pub fn angular_measure(&self) -> f64 {
        sphere_area(self.dim)
    }
    pub fn domain_volume(&self) -> f64 {
        unit_ball_volume(self.dim) * self.radius.powi(self.dim as i32)
    }
    pub fn ball_volume(&self, r: f64) -> f64 {
        unit_ball_volume(self.dim) * r.powi(self.dim as i32)
    }

    /// Index of the node at `r`, if `r` lies on the grid.
    pub fn node_index(&self, r: f64) -> Option<usize> {
        let j = (r / self.dr()).round();
        if j < 0.0 || j > self.cells as f64 {
            return None;
        }
        let j = j as usize;
        ((self.nodes[j] - r).abs() <= 1e-12 * self.radius).then_some(j)
    }

    /// Nearest node to `r` (clamped to the grid).
    pub fn nearest_node(&self, r: f64) -> usize {
        ((r / self.dr()).round().max(0.0) as usize).min(self.cells)
    }

    /// Stable fingerprint for provenance records.
    pub fn fingerprint(&self) -> String {
        format!(
            "radial:R={}:M={}:n={}:j*={}",
            self.radius, self.cells, self.dim, self.star_index
        )
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(())
    }

    /// Integrals `∫_a^b φ_j(r) r^{n-1} dr` of the hat functions over `[a, b]`,
    /// reported to `sink(j, value)` for every node whose support meets the
    /// interval. Nodes fully covered receive exactly `w_j`.
    pub fn hat_integrals(&self, a: f64, b: f64, mut sink: impl FnMut(usize, f64)) {
        let a = a.max(0.0);
        let b = b.min(self.radius);
        if b <= a {
            return;
        }
        let dr = self.dr();
        let first = ((a / dr).floor() as usize).min(self.cells - 1);
        let last = ((b / dr).ceil() as usize).clamp(first + 1, self.cells);
        // interior nodes with support inside [a, b] receive their full weight
        for j in first..=last {
            let lo = if j == 0 { 0.0 } else { self.nodes[j - 1] };
            let hi = if j == self.cells {
                self.radius
            } else {
                self.nodes[j + 1]
            };
            if lo >= a && hi <= b {
                sink(j, self.weights[j]);
                continue;
            }
            let mut acc = 0.0;
            if j > 0 {
                // falling edge of hat j - 1 is the rising edge of hat j
                let r0 = self.nodes[j - 1];
                let s0 = (a.max(r0) - r0).max(0.0);
                let s1 = (b.min(self.nodes[j]) - r0).max(0.0);
                if s1 > s0 {
                    acc += shifted_moment(r0, s0, s1, 1, self.dim) / dr;
                }
            }
            if j < self.cells {
                let r0 = self.nodes[j];
                let h = self.nodes[j + 1] - r0;
                let s0 = (a.max(r0) - r0).max(0.0);
                let s1 = (b.min(self.nodes[j + 1]) - r0).max(0.0);
                if s1 > s0 {
                    acc += shifted_moment(r0, s0, s1, 0, self.dim)
                        - shifted_moment(r0, s0, s1, 1, self.dim) / h;
                }
            }
            if acc != 0.0 {
                sink(j, acc);
            }
        }
    }

    /// Nodal values `F_j = ∫_a^b φ_j r^{n-1} dr / w_j` of the indicator of
    /// the shell `a < r < b`, accumulated (times `value`) into `out`.
    pub fn add_shell(&self, a: f64, b: f64, value: f64, out: &mut [f64]) {
        let w = &self.weights;
        self.hat_integrals(a, b, |j, v| {
            out[j] += if v == w[j] { value } else { value * v / w[j] };
        });
    }
}

/// Scalar field sampled at the radial nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField(pub Vec<f64>);

impl RadialField {
    pub fn zeros(grid: &RadialGrid) -> Self {
        Self(vec![0.0; grid.len()])
    }
    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.nodes().iter().map(|&r| f(r)).collect())
    }
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for RadialField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Values on the polar tensor grid `θ_l = 2π l / L`, `r_j`; row-major in `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarField {
    pub angular: usize,
    pub values: Vec<f64>,
}

impl PolarField {
    pub fn zeros(grid: &RadialGrid, angular: usize) -> Self {
        Self {
            angular,
            values: vec![0.0; angular * grid.len()],
        }
    }
    pub fn from_radial(radial: &[f64], angular: usize) -> Self {
        let mut values = Vec::with_capacity(angular * radial.len());
        for _ in 0..angular {
            values.extend_from_slice(radial);
        }
        Self { angular, values }
    }
    pub fn ray(&self, l: usize) -> &[f64] {
        let m = self.values.len() / self.angular;
        &self.values[l * m..(l + 1) * m]
    }
    pub fn ray_mut(&mut self, l: usize) -> &mut [f64] {
        let m = self.values.len() / self.angular;
        &mut self.values[l * m..(l + 1) * m]
    }
    pub fn angle(&self, l: usize) -> f64 {
        2.0 * std::f64::consts::PI * l as f64 / self.angular as f64
    }
    pub fn check(&self, grid: &RadialGrid) -> Result<()> {
        if self.angular == 0 || self.values.len() != self.angular * grid.len() {
            return Err(Error::GridMismatch {
                expected: self.angular.max(1) * grid.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }
    /// Measure `2π w_j / L` carried by each sample of ray `l`, node `j`.
    pub fn sample_measure(&self, grid: &RadialGrid, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * grid.weights()[j] / self.angular as f64
    }
}

/// `∫_Ω f` for a radial field: `n Vol(B(0,1)) Σ_j w_j f_j`.
pub fn disk_integral(grid: &RadialGrid, f: &[f64]) -> Result<f64> {
    grid.check(f)?;
    Ok(grid.angular_measure() * dot_w(grid, f, &vec![1.0; f.len()]))
}

/// `∫_Ω f` for a polar field (n = 2).
pub fn polar_integral(grid: &RadialGrid, f: &PolarField) -> Result<f64> {
    f.check(grid)?;
    let w = grid.weights();
    let total: f64 = (0..f.angular)
        .map(|l| f.ray(l).iter().zip(w).map(|(v, w)| v * w).sum::<f64>())
        .sum();
    Ok(2.0 * std::f64::consts::PI * total / f.angular as f64)
}

/// `Σ_j w_j f_j g_j`.
pub fn dot_w(grid: &RadialGrid, f: &[f64], g: &[f64]) -> f64 {
    grid.weights()
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

/// `∫_{B(0,r)} f` for the piecewise-linear interpolant of a radial field.
pub fn ball_cumulative(grid: &RadialGrid, f: &[f64], r: f64) -> Result<f64> {
    grid.check(f)?;
    if !(0.0..=grid.radius() * (1.0 + 1e-14)).contains(&r) {
        return Err(invalid("r", format!("{r} outside [0, {}]", grid.radius())));
    }
    let mut acc = 0.0;
    grid.hat_integrals(0.0, r, |j, v| acc += f[j] * v);
    Ok(grid.angular_measure() * acc)
}

/// Operand of [`l1_distance`].
#[derive(Debug, Clone, Copy)]
pub enum Sampled<'a> {
    Radial(&'a [f64]),
    Polar(&'a PolarField),
}

/// `‖f − g‖_{L¹(Ω)}` on the grid; a radial operand is broadcast over the
/// angular samples of a polar one.
pub fn l1_distance(grid: &RadialGrid, f: Sampled<'_>, g: Sampled<'_>) -> Result<f64> {
    match (f, g) {
        (Sampled::Radial(a), Sampled::Radial(b)) => {
            grid.check(a)?;
            grid.check(b)?;
            let acc: f64 = grid
                .weights()
                .iter()
                .zip(a.iter().zip(b))
                .map(|(w, (x, y))| w * (x - y).abs())
                .sum();
            Ok(grid.angular_measure() * acc)
        }
        (Sampled::Polar(a), Sampled::Polar(b)) => {
            a.check(grid)?;
            b.check(grid)?;
            if a.angular != b.angular {
                return Err(Error::GridMismatch {
                    expected: a.values.len(),
                    found: b.values.len(),
                });
            }
            polar_abs_diff(grid, a, |l, j| b.ray(l)[j])
        }
        (Sampled::Polar(a), Sampled::Radial(b)) | (Sampled::Radial(b), Sampled::Polar(a)) => {
            a.check(grid)?;
            grid.check(b)?;
            polar_abs_diff(grid, a, |_, j| b[j])
        }
    }
}

fn polar_abs_diff(
    grid: &RadialGrid,
    a: &PolarField,
    other: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported("polar fields require n = 2".into()));
    }
    let w = grid.weights();
    let mut acc = 0.0;
    for l in 0..a.angular {
        for (j, v) in a.ray(l).iter().enumerate() {
            acc += w[j] * (v - other(l, j)).abs();
        }
    }
    Ok(2.0 * std::f64::consts::PI * acc / a.angular as f64)
}

/// Time discretization of `[0, T]` by a θ-scheme.
///
/// The first and last `startup` steps are fully implicit (θ = 1); this damps
/// the stiff modes excited by rough data while keeping the step schedule
/// symmetric under time reversal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    theta: f64,
    startup: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize, theta: f64) -> Result<Self> {
        Self::with_startup(horizon, steps, theta, 2)
    }

    pub fn with_startup(horizon: f64, steps: usize, theta: f64, startup: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(invalid("theta", format!("{theta} not in [0.5, 1]")));
        }
        Ok(Self {
            horizon,
            steps,
            theta,
            startup: startup.min(steps / 2),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn startup(&self) -> usize {
        self.startup
    }
    pub fn len(&self) -> usize {
        self.steps + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    /// θ used by the step from `t_s` to `t_{s+1}`.
    pub fn step_theta(&self, s: usize) -> f64 {
        if s < self.startup || s + self.startup >= self.steps {
            1.0
        } else {
            self.theta
        }
    }

    /// Trapezoid weights `c_n` in time.
    pub fn quad_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "time:T={}:N={}:theta={}:startup={}",
            self.horizon, self.steps, self.theta, self.startup
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn r_star_is_a_node() {
        let g = RadialGrid::new(1.0, 4, 2, 0.5).unwrap();
        assert_eq!(g.star_index(), 2);
        assert_eq!(g.nodes()[2], 0.5);
        assert_eq!(g.star_shift(), 0.0);
    }

    #[test]
    fn snapping_is_reported() {
        let g = RadialGrid::new(1.0, 16, 2, 0.51).unwrap();
        assert_eq!(g.star_index(), 8);
        assert!((g.star_shift() + 0.01).abs() < 1e-15);
    }

    #[test]
    fn weights_integrate_constants() {
        for (n, exact) in [(2, 0.5), (3, 1.0 / 3.0)] {
            let g = RadialGrid::new(1.0, 256, n, 0.5).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - exact).abs() < 1e-12 * exact, "n={n}: {s}");
            assert!(g.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn degree_one_integrands_are_exact() {
        for n in [2, 3] {
            let g = RadialGrid::new(2.0, 37, n, 1.0).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|r| 3.0 - 1.25 * r).collect();
            // ∫_0^2 (3 - 1.25 r) r^{n-1} dr
            let exact = if n == 2 {
                3.0 * 2.0 - 1.25 * 8.0 / 3.0
            } else {
                3.0 * 8.0 / 3.0 - 1.25 * 4.0
            } * sphere_area(n);
            let got = disk_integral(&g, &f).unwrap();
            assert!((got - exact).abs() < 1e-12 * exact.abs(), "{got} vs {exact}");
        }
    }

    #[test]
    fn disk_area_and_ball_volume() {
        let g = RadialGrid::new(1.0, 256, 2, 0.5).unwrap();
        let one = vec![1.0; g.len()];
        assert!((disk_integral(&g, &one).unwrap() - PI).abs() < 1e-10);
        let ind: Vec<f64> = g.nodes().iter().map(|&r| (r < 0.5) as u8 as f64).collect();
        let v = disk_integral(&g, &ind).unwrap();
        assert!((v - PI / 4.0).abs() < 4.0 / (256.0 * 256.0) + 2.0 * PI * 0.5 / 256.0);
        // the hat projection of the ball is exact
        let mut shell = vec![0.0; g.len()];
        g.add_shell(0.0, 0.5, 1.0, &mut shell);
        assert!((disk_integral(&g, &shell).unwrap() - PI / 4.0).abs() < 1e-13);
    }

    #[test]
    fn quadratic_converges_at_second_order() {
        let err = |m: usize| {
            let g = RadialGrid::new(1.0, m, 2, 0.5).unwrap();
            let f = RadialField::from_fn(&g, |r| r * r);
            (disk_integral(&g, &f).unwrap() - PI / 2.0).abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 < 1e-3);
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn ball_cumulative_cases() {
        let g = RadialGrid::new(1.0, 256, 2, 0.5).unwrap();
        let one = vec![1.0; g.len()];
        assert_eq!(ball_cumulative(&g, &one, 0.0).unwrap(), 0.0);
        let full = ball_cumulative(&g, &one, 1.0).unwrap();
        assert!((full - disk_integral(&g, &one).unwrap()).abs() < 1e-13);
        let lin = RadialField::from_fn(&g, |r| r);
        let v = ball_cumulative(&g, &lin, 0.5).unwrap();
        assert!((v - PI / 12.0).abs() < 1e-13);
        // off-node radius: linear interpolant integrated exactly
        let v = ball_cumulative(&g, &lin, 0.3217).unwrap();
        let exact = 2.0 * PI * 0.3217f64.powi(3) / 3.0;
        assert!((v - exact).abs() < 1e-13);
        assert!(ball_cumulative(&g, &one, 1.5).is_err());
    }

    #[test]
    fn hat_integrals_partition_the_interval() {
        let g = RadialGrid::new(1.0, 20, 3, 0.5).unwrap();
        for (a, b) in [(0.0, 1.0), (0.013, 0.77), (0.31, 0.33), (0.5, 0.5001)] {
            let mut acc = 0.0;
            g.hat_integrals(a, b, |_, v| acc += v);
            let exact = (b * b * b - a * a * a) / 3.0;
            assert!((acc - exact).abs() < 1e-15, "{a} {b}: {acc} {exact}");
        }
    }

    #[test]
    fn l1_basic() {
        let g = RadialGrid::new(1.0, 64, 2, 0.5).unwrap();
        let f = RadialField::from_fn(&g, |r| 1.0 - r);
        assert_eq!(l1_distance(&g, Sampled::Radial(&f), Sampled::Radial(&f)).unwrap(), 0.0);
        let p = PolarField::from_radial(&f, 64);
        let zero = vec![0.0; g.len()];
        let a = l1_distance(&g, Sampled::Polar(&p), Sampled::Radial(&zero)).unwrap();
        let b = l1_distance(&g, Sampled::Radial(&f), Sampled::Radial(&zero)).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn invalid_grids() {
        assert!(RadialGrid::new(1.0, 3, 2, 0.5).is_err());
        assert!(RadialGrid::new(1.0, 64, 2, 1.0).is_err());
        assert!(RadialGrid::new(1.0, 64, 2, 0.0).is_err());
        assert!(RadialGrid::new(1.0, 64, 4, 0.5).is_err());
        assert!(TimeGrid::new(1.0, 10, 0.4).is_err());
        assert!(TimeGrid::new(0.0, 10, 0.5).is_err());
    }

    #[test]
    fn time_schedule_is_palindromic() {
        let t = TimeGrid::new(1.0, 10, 0.5).unwrap();
        let th: Vec<f64> = (0..10).map(|s| t.step_theta(s)).collect();
        assert_eq!(th, [1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0]);
        let total: f64 = (0..t.len()).map(|n| t.quad_weight(n)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
