//! Admissible controls, competitor families, samplers and the bathtub
//! maximizer.
//!
//! Every control is reduced to nodal load densities per angular channel
//! (`k`, cos/sin) using exact integrals of the radial hat functions, so
//! indicator sets whose edges fall inside a cell are represented without
//! snapping and their mass is exact.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{unit_ball_volume, PolarField, RadialField, RadialGrid, Sampled, TimeGrid};
use crate::radial_pde::Source;
use crate::rearrange::{pieces, Piece};

/// Grids and angular resolution shared by all control operations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discretization {
    pub grid: RadialGrid,
    pub time: TimeGrid,
    /// Angular samples `L` of the polar grid.
    pub angular: usize,
    /// Highest angular mode kept when projecting onto channels.
    pub k_max: usize,
}

impl Discretization {
    pub fn new(grid: RadialGrid, time: TimeGrid, angular: usize, k_max: usize) -> Result<Self> {
        if angular < crate::rearrange::MIN_ANGULAR {
            return Err(invalid("angular", format!("{angular} below 64")));
        }
        if 2 * k_max >= angular {
            return Err(invalid("k_max", format!("{k_max} aliases on {angular} samples")));
        }
        Ok(Self {
            grid,
            time,
            angular,
            k_max,
        })
    }

    pub fn angle(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.angular as f64
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "{}|{}|L={}|K={}",
            self.grid.fingerprint(),
            self.time.fingerprint(),
            self.angular,
            self.k_max
        )
    }
}

/// Mass constraint of the admissible class `{0 ≤ f ≤ 1, ∫ f = V0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSpec {
    pub v0: f64,
}

impl AdmissibleSpec {
    pub fn new(v0: f64, grid: &RadialGrid) -> Result<Self> {
        if !(v0 > 0.0 && v0 < grid.domain_volume()) {
            return Err(invalid(
                "v0",
                format!("{v0} outside (0, {})", grid.domain_volume()),
            ));
        }
        Ok(Self { v0 })
    }

    /// Radius of the centered ball of volume `V0`.
    pub fn ball_radius(&self, dim: usize) -> f64 {
        (self.v0 / unit_ball_volume(dim)).powf(1.0 / dim as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

/// One real Fourier channel `cos kθ` or `sin kθ`; `k = 0` is the radial part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub k: usize,
    pub trig: Trig,
}

impl Channel {
    pub const RADIAL: Channel = Channel {
        k: 0,
        trig: Trig::Cos,
    };

    pub fn cos(k: usize) -> Self {
        Self { k, trig: Trig::Cos }
    }
    pub fn sin(k: usize) -> Self {
        Self { k, trig: Trig::Sin }
    }

    /// `∫ trig(kθ)² dθ` times the sphere measure: `n Vol(B(0,1))` for the
    /// radial channel and `π` otherwise.
    pub fn parseval_weight(&self, grid: &RadialGrid) -> f64 {
        if self.k == 0 {
            grid.angular_measure()
        } else {
            PI
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        match (self.k, self.trig) {
            (0, _) => 1.0,
            (k, Trig::Cos) => (k as f64 * theta).cos(),
            (k, Trig::Sin) => (k as f64 * theta).sin(),
        }
    }
}

/// Nodal values of one channel, steady or one vector per time node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Slices {
    Steady(Vec<f64>),
    Timed(Vec<Vec<f64>>),
}

impl Slices {
    pub fn at(&self, n: usize) -> &[f64] {
        match self {
            Slices::Steady(v) => v,
            Slices::Timed(v) => &v[n],
        }
    }

    pub fn source(&self) -> Source<'_> {
        match self {
            Slices::Steady(v) => Source::Steady(v),
            Slices::Timed(v) => Source::Timed(v),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        match self {
            Slices::Steady(v) => m(v),
            Slices::Timed(v) => v.iter().map(|s| m(s)).fold(0.0, f64::max),
        }
    }

    fn timed(&self, slices: usize) -> Vec<Vec<f64>> {
        match self {
            Slices::Steady(v) => vec![v.clone(); slices],
            Slices::Timed(v) => v.clone(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Slices) -> Slices {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a + s * b).collect();
        match (self, other) {
            (Slices::Steady(a), Slices::Steady(b)) => Slices::Steady(add(a, b)),
            _ => {
                let n = match (self, other) {
                    (Slices::Timed(v), _) | (_, Slices::Timed(v)) => v.len(),
                    _ => unreachable!(),
                };
                let (a, b) = (self.timed(n), other.timed(n));
                Slices::Timed(a.iter().zip(&b).map(|(a, b)| add(a, b)).collect())
            }
        }
    }
}

/// Angular Fourier stack `a₀(r) + Σ_k a_k(r) cos kθ + b_k(r) sin kθ`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModalStack {
    #[serde(with = "channel_map")]
    pub channels: BTreeMap<Channel, Slices>,
}

mod channel_map {
    use super::{Channel, Slices};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Channel, Slices>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(&Channel, &Slices)> = m.iter().collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Channel, Slices>, D::Error> {
        let v: Vec<(Channel, Slices)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

impl ModalStack {
    pub fn radial(values: Vec<f64>) -> Self {
        let mut channels = BTreeMap::new();
        channels.insert(Channel::RADIAL, Slices::Steady(values));
        Self { channels }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.channels.values().any(|s| matches!(s, Slices::Timed(_)))
    }

    pub fn max_mode(&self) -> usize {
        self.channels.keys().map(|c| c.k).max().unwrap_or(0)
    }

    /// `self + s * other`, channel by channel.
    pub fn axpy(&self, s: f64, other: &ModalStack) -> ModalStack {
        let mut channels = self.channels.clone();
        for (c, v) in &other.channels {
            let next = match channels.get(c) {
                Some(a) => a.axpy(s, v),
                None => Slices::Steady(vec![0.0; v.at(0).len()]).axpy(s, v),
            };
            channels.insert(*c, next);
        }
        ModalStack { channels }
    }

    fn check(&self, d: &Discretization) -> Result<()> {
        for (c, s) in &self.channels {
            if c.k == 0 && c.trig == Trig::Sin {
                return Err(invalid("channels", "mode 0 has no sine channel"));
            }
            if c.k > 0 && d.grid.dim() != 2 {
                return Err(Error::Unsupported("angular modes require n = 2".into()));
            }
            match s {
                Slices::Steady(v) => d.grid.check(v)?,
                Slices::Timed(v) => {
                    if v.len() != d.time.len() {
                        return Err(Error::GridMismatch {
                            expected: d.time.len(),
                            found: v.len(),
                        });
                    }
                    v.iter().try_for_each(|s| d.grid.check(s))?;
                }
            }
        }
        Ok(())
    }

    /// Evaluates the series on the polar grid at time node `n`.
    pub fn sample_polar(&self, d: &Discretization, n: usize) -> PolarField {
        let mut out = PolarField::zeros(&d.grid, d.angular);
        for (c, s) in &self.channels {
            let v = s.at(n);
            for l in 0..d.angular {
                let t = c.eval(d.angle(l));
                for (o, x) in out.ray_mut(l).iter_mut().zip(v) {
                    *o += t * x;
                }
            }
        }
        out
    }

    /// θ-quadrature of polar samples onto channels `k ≤ k_max`.
    pub fn from_polar(d: &Discretization, polar: &PolarField) -> Result<Self> {
        polar.check(&d.grid)?;
        let mut q = AngularQuadrature::new(d, polar.angular);
        for l in 0..polar.angular {
            q.add_ray(l, |sink| {
                for (j, &v) in polar.ray(l).iter().enumerate() {
                    sink.point(j, v);
                }
            });
        }
        Ok(q.finish())
    }

    /// Radial profile when the only channel is `k = 0`.
    pub fn as_radial(&self, n: usize) -> Option<&[f64]> {
        if self.channels.keys().all(|c| c.k == 0) {
            self.channels.get(&Channel::RADIAL).map(|s| s.at(n))
        } else {
            None
        }
    }
}

/// Accumulates rays of nodal values into Fourier channels. Runs of nodes
/// with the same value are added through difference arrays so that the cost
/// per ray scales with the number of edges rather than the grid size.
struct AngularQuadrature<'a> {
    d: &'a Discretization,
    angular: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    diff: Vec<Vec<f64>>,
    direct: Vec<Vec<f64>>,
}

struct RaySink<'b> {
    runs: &'b mut Vec<(usize, usize, f64)>,
    points: &'b mut Vec<(usize, f64)>,
}

impl RaySink<'_> {
    fn run(&mut self, j0: usize, j1: usize, v: f64) {
        if j1 >= j0 && v != 0.0 {
            self.runs.push((j0, j1, v));
        }
    }
    fn point(&mut self, j: usize, v: f64) {
        if v != 0.0 {
            self.points.push((j, v));
        }
    }
}

impl<'a> AngularQuadrature<'a> {
    fn new(d: &'a Discretization, angular: usize) -> Self {
        let channels = 2 * d.k_max + 1;
        let mut cos = vec![0.0; (d.k_max + 1) * angular];
        let mut sin = vec![0.0; (d.k_max + 1) * angular];
        for k in 0..=d.k_max {
            for l in 0..angular {
                let t = 2.0 * PI * (k * l % angular) as f64 / angular as f64;
                cos[k * angular + l] = t.cos();
                sin[k * angular + l] = t.sin();
            }
        }
        let m = d.grid.len();
        Self {
            d,
            angular,
            cos,
            sin,
            diff: vec![vec![0.0; m + 1]; channels],
            direct: vec![vec![0.0; m]; channels],
        }
    }

    fn add_ray(&mut self, l: usize, fill: impl FnOnce(&mut RaySink<'_>)) {
        let mut runs = Vec::new();
        let mut points = Vec::new();
        fill(&mut RaySink {
            runs: &mut runs,
            points: &mut points,
        });
        let a = self.angular;
        for k in 0..=self.d.k_max {
            let (c, s) = (self.cos[k * a + l], self.sin[k * a + l]);
            let slots: &[(usize, f64)] = if k == 0 {
                &[(0, 1.0)]
            } else {
                &[(2 * k - 1, c), (2 * k, s)]
            };
            for &(ch, t) in slots {
                let t = if k == 0 { 1.0 } else { t };
                for &(j0, j1, v) in &runs {
                    self.diff[ch][j0] += t * v;
                    self.diff[ch][j1 + 1] -= t * v;
                }
                for &(j, v) in &points {
                    self.direct[ch][j] += t * v;
                }
            }
        }
    }

    fn finish(self) -> ModalStack {
        let mut channels = BTreeMap::new();
        let a = self.angular as f64;
        for (ch, (diff, direct)) in self.diff.iter().zip(&self.direct).enumerate() {
            let channel = match ch {
                0 => Channel::RADIAL,
                c if c % 2 == 1 => Channel::cos(c.div_ceil(2)),
                c => Channel::sin(c / 2),
            };
            let scale = if ch == 0 { 1.0 / a } else { 2.0 / a };
            let mut run = 0.0;
            let v: Vec<f64> = direct
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    run += diff[j];
                    scale * (run + x)
                })
                .collect();
            if ch == 0 || v.iter().any(|x| x.abs() > 1e-15) {
                channels.insert(channel, Slices::Steady(v));
            }
        }
        ModalStack { channels }
    }
}

/// Radial profile `v_i` on `(breaks_i, breaks_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepProfile {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 {
            return Err(invalid("breaks", "need one more break than values"));
        }
        if breaks.windows(2).any(|w| w[1] < w[0]) || breaks.first().is_some_and(|&b| b < 0.0) {
            return Err(invalid("breaks", "must be nondecreasing and nonnegative"));
        }
        Ok(Self { breaks, values })
    }

    /// Indicator of a union of disjoint, sorted shells `(a, b)`.
    pub fn shells(shells: &[(f64, f64)]) -> Result<Self> {
        let mut breaks = Vec::new();
        let mut values = Vec::new();
        let mut last = 0.0;
        for &(a, b) in shells {
            if a < last || b < a {
                return Err(invalid("shells", "must be sorted and disjoint"));
            }
            if a > last {
                breaks.push(last);
                values.push(0.0);
            }
            breaks.push(a);
            values.push(1.0);
            last = b;
        }
        breaks.push(last);
        Self::new(breaks, values)
    }

    fn pieces(&self) -> Vec<(f64, f64, f64)> {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .filter(|(w, &v)| v != 0.0 && w[1] > w[0])
            .map(|(w, &v)| (w[0], w[1], v))
            .collect()
    }
}

/// Annulus `A_δ = {r < r* - r⁻} ∪ {r* < r < r* + r⁺}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusRadii {
    pub r_star: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub delta: f64,
}

/// Largest feasible `Vol(A_δ Δ B*)`.
pub fn delta_max(spec: &AdmissibleSpec, grid: &RadialGrid) -> f64 {
    2.0 * spec.v0.min(grid.domain_volume() - spec.v0)
}

/// Inner and outer widths of `A_δ` from the two volume equations.
pub fn annulus_radii(delta: f64, spec: &AdmissibleSpec, grid: &RadialGrid) -> Result<AnnulusRadii> {
    let n = grid.dim();
    let om = unit_ball_volume(n);
    let rs = spec.ball_radius(n);
    if !(0.0..=delta_max(spec, grid)).contains(&delta) {
        return Err(Error::Geometry(format!(
            "delta {delta} outside [0, {}]",
            delta_max(spec, grid)
        )));
    }
    let half = delta / (2.0 * om);
    let rsn = rs.powi(n as i32);
    let inner = (rsn - half).max(0.0).powf(1.0 / n as f64);
    let outer = (rsn + half).powf(1.0 / n as f64);
    // r* - a = (r*^n - a^n) / Σ r*^{n-1-i} a^i, free of cancellation
    let sum = |a: f64| (0..n).map(|i| rs.powi((n - 1 - i) as i32) * a.powi(i as i32)).sum::<f64>();
    let r_minus = if inner > 0.0 { half / sum(inner) } else { rs };
    let r_plus = half / sum(outer);
    if rs + r_plus > grid.radius() * (1.0 + 1e-12) {
        return Err(Error::Geometry(format!("outer radius {} exits the domain", rs + r_plus)));
    }
    Ok(AnnulusRadii {
        r_star: rs,
        r_minus,
        r_plus,
        delta,
    })
}

/// `c₀ = 1 / (2 n Vol(B(0,1)) r*^{n-1})`, the common limit of `r^±/δ`.
pub fn annulus_constant(spec: &AdmissibleSpec, dim: usize) -> f64 {
    let rs = spec.ball_radius(dim);
    1.0 / (2.0 * dim as f64 * unit_ball_volume(dim) * rs.powi(dim as i32 - 1))
}

/// Ball of radius `r*` whose boundary is `R(θ) = r* + offset + τ Σ (α_k cos kθ + β_k sin kθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformedBall {
    pub r_star: f64,
    pub tau: f64,
    /// `(k, α_k, β_k)` with `k ≥ 1`.
    pub coeffs: Vec<(usize, f64, f64)>,
    /// Uniform radial correction restoring the volume `π r*²`.
    pub offset: f64,
}

impl DeformedBall {
    pub fn new(r_star: f64, tau: f64, coeffs: Vec<(usize, f64, f64)>) -> Result<Self> {
        if coeffs.iter().any(|c| c.0 == 0) {
            return Err(invalid("coeffs", "modes start at k = 1"));
        }
        let s: f64 = coeffs.iter().map(|(_, a, b)| a * a + b * b).sum();
        let disc = r_star * r_star - 0.5 * tau * tau * s;
        if disc <= 0.0 {
            return Err(Error::Geometry("deformation too large for volume correction".into()));
        }
        let offset = -(0.5 * tau * tau * s) / (r_star + disc.sqrt());
        Ok(Self {
            r_star,
            tau,
            coeffs,
            offset,
        })
    }

    /// Same deformation without the volume correction.
    pub fn uncorrected(r_star: f64, tau: f64, coeffs: Vec<(usize, f64, f64)>) -> Self {
        Self {
            r_star,
            tau,
            coeffs,
            offset: 0.0,
        }
    }

    /// Normal trace `Σ α_k cos kθ + β_k sin kθ`.
    pub fn trace(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(k, a, b)| {
                let t = k as f64 * theta;
                a * t.cos() + b * t.sin()
            })
            .sum()
    }

    pub fn boundary(&self, theta: f64) -> f64 {
        self.r_star + self.offset + self.tau * self.trace(theta)
    }

    /// Exact area `½ ∫ R(θ)² dθ`.
    pub fn volume(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|(_, a, b)| a * a + b * b).sum();
        let base = self.r_star + self.offset;
        PI * base * base + 0.5 * PI * self.tau * self.tau * s
    }

    fn amplitude_bound(&self) -> f64 {
        self.tau.abs() * self.coeffs.iter().map(|(_, a, b)| a.abs() + b.abs()).sum::<f64>()
    }
}

/// Parametric indicator sets and radial step profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Ball { center: [f64; 2], radius: f64 },
    Annulus(AnnulusRadii),
    DeformedBall(DeformedBall),
    Radial(StepProfile),
    Union(Vec<Shape>),
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64, f64)> {
    v.retain(|(a, b)| b > a);
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b, 1.0)),
        }
    }
    out
}

impl Shape {
    pub fn centered_ball(radius: f64) -> Self {
        Shape::Ball {
            center: [0.0, 0.0],
            radius,
        }
    }

    /// Pieces `(a, b, value)` in `r` when the shape is radially symmetric.
    pub fn radial_pieces(&self) -> Option<Vec<(f64, f64, f64)>> {
        match self {
            Shape::Ball { center, radius } if center == &[0.0, 0.0] => {
                Some(vec![(0.0, *radius, 1.0)])
            }
            Shape::Annulus(a) => Some(merge_intervals(vec![
                (0.0, a.r_star - a.r_minus),
                (a.r_star, a.r_star + a.r_plus),
            ])),
            Shape::DeformedBall(d) if d.tau == 0.0 || d.coeffs.is_empty() => {
                Some(vec![(0.0, d.r_star + d.offset, 1.0)])
            }
            Shape::Radial(p) => Some(p.pieces()),
            Shape::Union(parts) => {
                let mut iv = Vec::new();
                for p in parts {
                    for (a, b, v) in p.radial_pieces()? {
                        if v != 1.0 {
                            return None;
                        }
                        iv.push((a, b));
                    }
                }
                Some(merge_intervals(iv))
            }
            _ => None,
        }
    }

    pub fn is_radial(&self) -> bool {
        self.radial_pieces().is_some()
    }

    /// Pieces along the ray at angle `θ` (n = 2).
    pub fn ray_pieces(&self, theta: f64) -> Vec<(f64, f64, f64)> {
        if let Some(p) = self.radial_pieces() {
            return p;
        }
        match self {
            Shape::Ball { center, radius } => {
                let b = center[0] * theta.cos() + center[1] * theta.sin();
                let c2 = center[0] * center[0] + center[1] * center[1];
                let disc = b * b - c2 + radius * radius;
                if disc <= 0.0 {
                    return Vec::new();
                }
                let s = disc.sqrt();
                let (lo, hi) = ((b - s).max(0.0), b + s);
                if hi > lo {
                    vec![(lo, hi, 1.0)]
                } else {
                    Vec::new()
                }
            }
            Shape::DeformedBall(d) => vec![(0.0, d.boundary(theta), 1.0)],
            Shape::Union(parts) => merge_intervals(
                parts
                    .iter()
                    .flat_map(|p| p.ray_pieces(theta))
                    .map(|(a, b, _)| (a, b))
                    .collect(),
            ),
            _ => unreachable!("radial shapes handled above"),
        }
    }

    /// Volume of the shape (exact where a closed form exists).
    pub fn volume(&self, dim: usize) -> f64 {
        let om = unit_ball_volume(dim);
        let n = dim as i32;
        if let Some(p) = self.radial_pieces() {
            return p.iter().map(|(a, b, v)| v * om * (b.powi(n) - a.powi(n))).sum();
        }
        match self {
            Shape::Ball { radius, .. } => om * radius.powi(n),
            Shape::DeformedBall(d) => d.volume(),
            _ => {
                let l = 4096;
                (0..l)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / l as f64;
                        self.ray_pieces(t)
                            .iter()
                            .map(|(a, b, v)| 0.5 * v * (b * b - a * a))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    * 2.0
                    * PI
                    / l as f64
            }
        }
    }

    /// Rejects shapes leaving `B(0, R)` or requiring n = 2 on another dimension.
    pub fn validate(&self, grid: &RadialGrid) -> Result<()> {
        let rr = grid.radius() * (1.0 + 1e-12);
        if !self.is_radial() && grid.dim() != 2 {
            return Err(Error::Unsupported("non-radial shapes require n = 2".into()));
        }
        match self {
            Shape::Ball { center, radius } => {
                let c = center[0].hypot(center[1]);
                if !(*radius >= 0.0) || c + radius > rr {
                    return Err(Error::Geometry(format!(
                        "ball at distance {c} with radius {radius} exits the domain"
                    )));
                }
            }
            Shape::Annulus(a) => {
                if a.r_minus < 0.0 || a.r_plus < 0.0 || a.r_minus > a.r_star || a.r_star + a.r_plus > rr {
                    return Err(Error::Geometry("annulus radii out of range".into()));
                }
            }
            Shape::DeformedBall(d) => {
                let base = d.r_star + d.offset;
                let amp = d.amplitude_bound();
                if base - amp <= 0.0 || base + amp >= grid.radius() {
                    return Err(Error::Geometry(format!(
                        "deformed boundary leaves (0, R): base {base}, amplitude {amp}"
                    )));
                }
            }
            Shape::Radial(p) => {
                if p.breaks.last().is_some_and(|&b| b > rr) {
                    return Err(Error::Geometry("profile extends beyond R".into()));
                }
                if p.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Geometry("profile values outside [0, 1]".into()));
                }
            }
            Shape::Union(parts) => parts.iter().try_for_each(|p| p.validate(grid))?,
        }
        Ok(())
    }

    /// Channel loads by exact hat integration, radially or per ray.
    pub fn loads(&self, d: &Discretization) -> Result<ModalStack> {
        self.validate(&d.grid)?;
        let grid = &d.grid;
        if let Some(p) = self.radial_pieces() {
            let mut v = vec![0.0; grid.len()];
            for (a, b, val) in p {
                grid.add_shell(a, b, val, &mut v);
            }
            return Ok(ModalStack::radial(v));
        }
        let mut q = AngularQuadrature::new(d, d.angular);
        let w = grid.weights();
        for l in 0..d.angular {
            let pieces = self.ray_pieces(d.angle(l));
            q.add_ray(l, |sink| {
                for (a, b, val) in pieces {
                    let mut run: Option<(usize, usize)> = None;
                    grid.hat_integrals(a, b, |j, x| {
                        if x == w[j] {
                            run = match run {
                                Some((s, e)) if e + 1 == j => Some((s, j)),
                                Some((s, e)) => {
                                    sink.run(s, e, val);
                                    Some((j, j))
                                }
                                None => Some((j, j)),
                            };
                        } else {
                            sink.point(j, val * x / w[j]);
                        }
                    });
                    if let Some((s, e)) = run {
                        sink.run(s, e, val);
                    }
                }
            });
        }
        Ok(q.finish())
    }

    /// Nodal values along every ray of the polar grid.
    pub fn sample_polar(&self, d: &Discretization) -> Result<PolarField> {
        self.validate(&d.grid)?;
        let mut out = PolarField::zeros(&d.grid, d.angular);
        for l in 0..d.angular {
            let pieces = self.ray_pieces(d.angle(l));
            let ray = out.ray_mut(l);
            for (a, b, v) in pieces {
                d.grid.add_shell(a, b, v, ray);
            }
        }
        Ok(out)
    }
}

/// `∫_0^R |f - g| r^{n-1} dr` for two sorted piece lists along a ray.
fn ray_l1(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)], dim: usize) -> f64 {
    let mut cuts: Vec<f64> = a
        .iter()
        .chain(b)
        .flat_map(|&(s, e, _)| [s, e])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let value = |p: &[(f64, f64, f64)], x: f64| {
        p.iter()
            .find(|&&(s, e, _)| s <= x && x < e)
            .map_or(0.0, |&(_, _, v)| v)
    };
    let n = dim as i32;
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (value(a, mid) - value(b, mid)).abs() * (w[1].powi(n) - w[0].powi(n)) / n as f64
        })
        .sum()
}

/// Exact `‖1_A - 1_B‖_{L¹}` for two shapes, up to θ-quadrature on `L` rays
/// when either is non-radial.
pub fn shape_l1(a: &Shape, b: &Shape, dim: usize, angular: usize) -> f64 {
    match (a.radial_pieces(), b.radial_pieces()) {
        (Some(pa), Some(pb)) => crate::geometry::sphere_area(dim) * ray_l1(&pa, &pb, dim),
        _ => {
            (0..angular)
                .map(|l| {
                    let t = 2.0 * PI * l as f64 / angular as f64;
                    ray_l1(&a.ray_pieces(t), &b.ray_pieces(t), 2)
                })
                .sum::<f64>()
                * 2.0
                * PI
                / angular as f64
        }
    }
}

/// An admissible (or candidate) control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Control {
    /// Time-independent radial nodal values.
    Radial(RadialField),
    /// Radial nodal values at every time node.
    TimeRadial(Vec<RadialField>),
    /// Time-independent values on the polar grid.
    Polar(PolarField),
    Modal(ModalStack),
    Shape(Shape),
    /// One shape per time node.
    TimeShape(Vec<Shape>),
}

/// Owned sample of a control at one time node.
#[derive(Debug, Clone, PartialEq)]
pub enum Slice {
    Radial(Vec<f64>),
    Polar(PolarField),
}

impl Slice {
    pub fn sampled(&self) -> Sampled<'_> {
        match self {
            Slice::Radial(v) => Sampled::Radial(v),
            Slice::Polar(p) => Sampled::Polar(p),
        }
    }
}

impl Control {
    pub fn is_time_dependent(&self) -> bool {
        match self {
            Control::TimeRadial(_) | Control::TimeShape(_) => true,
            Control::Modal(m) => m.is_time_dependent(),
            _ => false,
        }
    }

    fn check_slices(&self, d: &Discretization) -> Result<()> {
        let count = match self {
            Control::TimeRadial(v) => v.len(),
            Control::TimeShape(v) => v.len(),
            _ => return Ok(()),
        };
        if count != d.time.len() {
            return Err(Error::GridMismatch {
                expected: d.time.len(),
                found: count,
            });
        }
        Ok(())
    }

    /// Nodal load densities per channel.
    pub fn loads(&self, d: &Discretization) -> Result<ModalStack> {
        self.check_slices(d)?;
        let stack = match self {
            Control::Radial(f) => {
                d.grid.check(f)?;
                ModalStack::radial(f.0.clone())
            }
            Control::TimeRadial(v) => {
                v.iter().try_for_each(|f| d.grid.check(f))?;
                let mut channels = BTreeMap::new();
                channels.insert(
                    Channel::RADIAL,
                    Slices::Timed(v.iter().map(|f| f.0.clone()).collect()),
                );
                ModalStack { channels }
            }
            Control::Polar(p) => ModalStack::from_polar(d, p)?,
            Control::Modal(m) => m.clone(),
            Control::Shape(s) => s.loads(d)?,
            Control::TimeShape(shapes) => {
                let per: Vec<ModalStack> = shapes.iter().map(|s| s.loads(d)).collect::<Result<_>>()?;
                let keys: std::collections::BTreeSet<Channel> =
                    per.iter().flat_map(|m| m.channels.keys().copied()).collect();
                let zero = vec![0.0; d.grid.len()];
                let channels = keys
                    .into_iter()
                    .map(|c| {
                        let slices = per
                            .iter()
                            .map(|m| m.channels.get(&c).map_or(zero.clone(), |s| s.at(0).to_vec()))
                            .collect();
                        (c, Slices::Timed(slices))
                    })
                    .collect();
                ModalStack { channels }
            }
        };
        stack.check(d)?;
        Ok(stack)
    }

    /// Sample at time node `n`: radial when the control is radial there.
    pub fn slice(&self, d: &Discretization, n: usize) -> Result<Slice> {
        self.check_slices(d)?;
        Ok(match self {
            Control::Radial(f) => Slice::Radial(f.0.clone()),
            Control::TimeRadial(v) => Slice::Radial(v[n].0.clone()),
            Control::Polar(p) => Slice::Polar(p.clone()),
            Control::Modal(m) => match m.as_radial(n) {
                Some(v) => Slice::Radial(v.to_vec()),
                None => Slice::Polar(m.sample_polar(d, n)),
            },
            Control::Shape(s) => shape_slice(s, d)?,
            Control::TimeShape(v) => shape_slice(&v[n], d)?,
        })
    }

    /// Shape active at time node `n`, if the control is parametric.
    pub fn shape_at(&self, n: usize) -> Option<&Shape> {
        match self {
            Control::Shape(s) => Some(s),
            Control::TimeShape(v) => v.get(n),
            _ => None,
        }
    }

    /// `∫_Ω f(t_n, ·)`.
    pub fn mass(&self, d: &Discretization, n: usize) -> Result<f64> {
        let loads = self.loads_at(d, n)?;
        Ok(d.grid.angular_measure()
            * crate::geometry::dot_w(&d.grid, &loads, &vec![1.0; d.grid.len()]))
    }

    fn loads_at(&self, d: &Discretization, n: usize) -> Result<Vec<f64>> {
        Ok(match self {
            Control::Radial(f) => f.0.clone(),
            Control::TimeRadial(v) => v[n].0.clone(),
            Control::Shape(s) => s.loads(d)?.channels[&Channel::RADIAL].at(0).to_vec(),
            Control::TimeShape(v) => v[n].loads(d)?.channels[&Channel::RADIAL].at(0).to_vec(),
            _ => self
                .loads(d)?
                .channels
                .get(&Channel::RADIAL)
                .map_or(vec![0.0; d.grid.len()], |s| s.at(n).to_vec()),
        })
    }

    /// Minimum and maximum sampled value at time node `n`.
    pub fn range(&self, d: &Discretization, n: usize) -> Result<(f64, f64)> {
        let s = self.slice(d, n)?;
        let v: &[f64] = match &s {
            Slice::Radial(v) => v,
            Slice::Polar(p) => &p.values,
        };
        Ok(v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))))
    }

    /// Checks `0 ≤ f ≤ 1` and `∫ f = V0` at every time node.
    pub fn check_admissible(&self, d: &Discretization, spec: &AdmissibleSpec, tol: f64) -> Result<()> {
        let slices = if self.is_time_dependent() { d.time.len() } else { 1 };
        for n in 0..slices {
            let (lo, hi) = self.range(d, n)?;
            if lo < -tol || hi > 1.0 + tol {
                return Err(Error::Precondition(format!(
                    "values in [{lo}, {hi}] at time node {n}"
                )));
            }
            let m = self.mass(d, n)?;
            if (m - spec.v0).abs() > tol * spec.v0.max(1.0) {
                return Err(Error::Precondition(format!(
                    "mass {m} differs from V0 = {} at time node {n}",
                    spec.v0
                )));
            }
        }
        Ok(())
    }

    /// JSON document with provenance and per-slice masses.
    pub fn to_document(&self, d: &Discretization) -> Result<ControlDocument> {
        let slices = if self.is_time_dependent() { d.time.len() } else { 1 };
        let masses = (0..slices).map(|n| self.mass(d, n)).collect::<Result<_>>()?;
        Ok(ControlDocument {
            control: self.clone(),
            grid: d.fingerprint(),
            masses,
        })
    }
}

fn shape_slice(s: &Shape, d: &Discretization) -> Result<Slice> {
    if s.is_radial() {
        Ok(Slice::Radial(s.loads(d)?.channels[&Channel::RADIAL].at(0).to_vec()))
    } else {
        Ok(Slice::Polar(s.sample_polar(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDocument {
    pub control: Control,
    pub grid: String,
    pub masses: Vec<f64>,
}

/// `‖f(t_n) - g(t_n)‖_{L¹(Ω)}`: exact for pairs of shapes, otherwise by
/// quadrature of the sampled values.
pub fn l1_distance(d: &Discretization, f: &Control, g: &Control, n: usize) -> Result<f64> {
    if let (Some(a), Some(b)) = (f.shape_at(n), g.shape_at(n)) {
        a.validate(&d.grid)?;
        b.validate(&d.grid)?;
        return Ok(shape_l1(a, b, d.grid.dim(), d.angular));
    }
    let (a, b) = (f.slice(d, n)?, g.slice(d, n)?);
    crate::geometry::l1_distance(&d.grid, a.sampled(), b.sampled())
}

/// Result of [`bathtub_maximizer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bathtub {
    pub control: Control,
    /// Level `c` with `f = 1` on `{ψ > c}`.
    pub threshold: f64,
    /// True when the fill of the level set `{ψ = c}` is not unique.
    pub degenerate: bool,
}

/// Maximizer of `f ↦ ∫ f ψ` over `{0 ≤ f ≤ 1, ∫ f = V0}` on the grid:
/// pieces are filled by decreasing `ψ`, ties in input-index order.
pub fn bathtub_maximizer(grid: &RadialGrid, psi: Sampled<'_>, spec: &AdmissibleSpec) -> Result<Bathtub> {
    let pcs = pieces(grid, psi)?;
    if pcs.iter().any(|p| !p.value.is_finite()) {
        return Err(invalid("psi", "non-finite value"));
    }
    let total: f64 = pcs.iter().map(|p| p.measure).sum();
    if spec.v0 >= total {
        return Err(Error::Precondition("V0 not below the domain volume".into()));
    }
    let mut order: Vec<usize> = (0..pcs.len()).collect();
    order.sort_by(|&a, &b| pcs[b].value.total_cmp(&pcs[a].value));
    let mut fill = vec![0.0; pcs.len()];
    let mut need = spec.v0;
    let mut last = order[0];
    for &i in &order {
        if need <= 0.0 {
            break;
        }
        let m = pcs[i].measure;
        if m <= need {
            fill[i] = 1.0;
            need -= m;
        } else {
            fill[i] = need / m;
            need = 0.0;
        }
        last = i;
    }
    let c = pcs[last].value;
    let scale = pcs.iter().fold(0.0f64, |a, p| a.max(p.value.abs())).max(f64::MIN_POSITIVE);
    let plateau: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| (pcs[i].value - c).abs() <= 1e-12 * scale)
        .collect();
    let partial = plateau.iter().any(|&i| fill[i] > 0.0 && fill[i] < 1.0)
        || (plateau.iter().any(|&i| fill[i] == 0.0) && plateau.iter().any(|&i| fill[i] > 0.0));
    let degenerate = plateau.len() > 1 && partial;
    let control = match psi {
        Sampled::Radial(_) => Control::Radial(RadialField(fill)),
        Sampled::Polar(p) => {
            let mut out = PolarField::zeros(grid, p.angular);
            // pieces are node-major
            for (idx, v) in fill.iter().enumerate() {
                let (j, l) = (idx / p.angular, idx % p.angular);
                out.ray_mut(l)[j] = *v;
            }
            Control::Polar(out)
        }
    };
    Ok(Bathtub {
        control,
        threshold: c,
        degenerate,
    })
}

/// Clips to `[0, 1]` and shifts by a constant so that the mass is `V0`.
pub fn project_admissible(grid: &RadialGrid, raw: &[f64], spec: &AdmissibleSpec) -> Result<Control> {
    grid.check(raw)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(invalid("f", "non-finite value"));
    }
    let lam = grid.angular_measure();
    let mass = |c: f64| -> f64 {
        lam * raw
            .iter()
            .zip(grid.weights())
            .map(|(v, w)| w * (v + c).clamp(0.0, 1.0))
            .sum::<f64>()
    };
    if spec.v0 >= grid.domain_volume() {
        return Err(Error::Precondition("V0 unreachable".into()));
    }
    let clipped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    if (mass(0.0) - spec.v0).abs() <= 1e-14 * spec.v0 {
        return Ok(Control::Radial(RadialField(clipped)));
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let (max, min) = raw
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), &x| (a.max(x), b.min(x)));
    lo = lo.min(-max);
    hi = hi.max(1.0 - min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < spec.v0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    Ok(Control::Radial(RadialField(
        raw.iter().map(|v| (v + c).clamp(0.0, 1.0)).collect(),
    )))
}

/// `1_{A_δ}`.
pub fn annulus_control(delta: f64, spec: &AdmissibleSpec, grid: &RadialGrid) -> Result<Control> {
    Ok(Control::Shape(Shape::Annulus(annulus_radii(delta, spec, grid)?)))
}

/// `1_{B(x0, r*)}`.
pub fn shifted_ball_control(x0: [f64; 2], spec: &AdmissibleSpec, grid: &RadialGrid) -> Result<Control> {
    let s = Shape::Ball {
        center: x0,
        radius: spec.ball_radius(grid.dim()),
    };
    s.validate(grid)?;
    Ok(Control::Shape(s))
}

/// Volume-corrected deformed ball.
pub fn deformed_ball_control(
    tau: f64,
    coeffs: Vec<(usize, f64, f64)>,
    spec: &AdmissibleSpec,
    grid: &RadialGrid,
) -> Result<Control> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported("deformed balls require n = 2".into()));
    }
    let s = Shape::DeformedBall(DeformedBall::new(spec.ball_radius(2), tau, coeffs)?);
    s.validate(grid)?;
    Ok(Control::Shape(s))
}

/// `Vol(B(x0, ρ) Δ B(0, ρ))` from the lens area of two equal discs.
pub fn shifted_ball_delta(shift: f64, radius: f64) -> f64 {
    let d = shift.abs();
    if d >= 2.0 * radius {
        return 2.0 * PI * radius * radius;
    }
    let lens = 2.0 * radius * radius * (d / (2.0 * radius)).acos() - 0.5 * d * (4.0 * radius * radius - d * d).sqrt();
    2.0 * (PI * radius * radius - lens)
}

/// Shift `|x0|` giving `Vol(B(x0, ρ) Δ B(0, ρ)) = δ`.
pub fn shift_for_delta(delta: f64, radius: f64) -> Result<f64> {
    if !(0.0..2.0 * PI * radius * radius).contains(&delta) {
        return Err(Error::Geometry(format!("delta {delta} not reachable by a shift")));
    }
    let (mut lo, mut hi) = (0.0, 2.0 * radius);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shifted_ball_delta(mid, radius) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `1_{A_{δ(t)}}` with `δ(t) = δ0 |sin(π m t / T)|`.
pub fn oscillating_annulus(
    delta0: f64,
    m: u32,
    spec: &AdmissibleSpec,
    d: &Discretization,
) -> Result<Control> {
    let t_end = d.time.horizon();
    let shapes = (0..d.time.len())
        .map(|n| {
            let t = d.time.time(n);
            let delta = delta0 * (PI * m as f64 * t / t_end).sin().abs();
            Ok(Shape::Annulus(annulus_radii(delta, spec, &d.grid)?))
        })
        .collect::<Result<_>>()?;
    Ok(Control::TimeShape(shapes))
}

/// Families of random admissible controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RandomKind {
    /// Union of 1 to 4 random shells of total volume `V0`.
    BangBangRadial,
    /// Smooth radial profile plus a bounded angular modulation; the phase
    /// rotates in time when `time_dependent` is set.
    Smooth { time_dependent: bool },
    /// Random shells whose edges move linearly in the volume variable.
    MovingShells,
    /// Non-centered ball of volume `V0` drifting along a circle.
    DriftingBall,
    /// [`oscillating_annulus`].
    OscillatingAnnulus { delta0: f64, m: u32 },
}

/// Random sorted intervals in `[lo, hi]` of total length `len`.
fn random_intervals(rng: &mut impl Rng, count: usize, lo: f64, hi: f64, len: f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = (0..2 * count).map(|_| rng.gen::<f64>()).collect();
    pts.sort_by(f64::total_cmp);
    let lengths: f64 = pts.chunks(2).map(|c| c[1] - c[0]).sum();
    let span = hi - lo;
    let gaps = 1.0 - lengths;
    let (sl, sg) = (
        if lengths > 0.0 { len / lengths } else { 0.0 },
        if gaps > 0.0 { (span - len) / gaps } else { 0.0 },
    );
    let mut out = Vec::with_capacity(count);
    let mut pos = lo;
    let mut prev = 0.0;
    for c in pts.chunks(2) {
        pos += (c[0] - prev) * sg;
        let a = pos;
        pos += (c[1] - c[0]) * sl;
        out.push((a, pos.min(hi)));
        prev = c[1];
    }
    out
}

fn to_radius(v: f64, dim: usize) -> f64 {
    (v.max(0.0) / unit_ball_volume(dim)).powf(1.0 / dim as f64)
}

fn shells_from_volumes(iv: &[(f64, f64)], dim: usize) -> Result<StepProfile> {
    let shells: Vec<(f64, f64)> = iv
        .iter()
        .map(|&(a, b)| (to_radius(a, dim), to_radius(b, dim)))
        .collect();
    StepProfile::shells(&shells)
}

fn random_shell_volumes(rng: &mut impl Rng, spec: &AdmissibleSpec, grid: &RadialGrid, count: usize) -> Vec<(f64, f64)> {
    random_intervals(rng, count, 0.0, grid.domain_volume(), spec.v0)
}

/// Logistic profile `1 / (1 + e^{(r - c)/s})` with `c` fitted to mass `V0`.
fn logistic_profile(grid: &RadialGrid, spec: &AdmissibleSpec, width: f64) -> Vec<f64> {
    let eval = |c: f64| -> Vec<f64> {
        grid.nodes()
            .iter()
            .map(|&r| {
                let v = 1.0 / (1.0 + ((r - c) / width).exp());
                if r >= grid.radius() {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    };
    let mass = |c: f64| crate::geometry::disk_integral(grid, &eval(c)).unwrap_or(0.0);
    let (mut lo, mut hi) = (-2.0 * grid.radius(), 3.0 * grid.radius());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < spec.v0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eval(0.5 * (lo + hi))
}

/// Draws one admissible control of the given kind from `seed`.
pub fn sample_random_admissible(
    seed: u64,
    kind: RandomKind,
    spec: &AdmissibleSpec,
    d: &Discretization,
) -> Result<Control> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &d.grid;
    let dim = grid.dim();
    match kind {
        RandomKind::BangBangRadial => {
            let count = rng.gen_range(1..=4);
            let iv = random_shell_volumes(&mut rng, spec, grid, count);
            Ok(Control::Shape(Shape::Radial(shells_from_volumes(&iv, dim)?)))
        }
        RandomKind::MovingShells => {
            let count = rng.gen_range(1..=4);
            let a = random_shell_volumes(&mut rng, spec, grid, count);
            let b = random_shell_volumes(&mut rng, spec, grid, count);
            let t_end = d.time.horizon();
            let shapes = (0..d.time.len())
                .map(|n| {
                    let s = d.time.time(n) / t_end;
                    let iv: Vec<(f64, f64)> = a
                        .iter()
                        .zip(&b)
                        .map(|(x, y)| ((1.0 - s) * x.0 + s * y.0, (1.0 - s) * x.1 + s * y.1))
                        .collect();
                    Ok(Shape::Radial(shells_from_volumes(&iv, dim)?))
                })
                .collect::<Result<_>>()?;
            Ok(Control::TimeShape(shapes))
        }
        RandomKind::Smooth { time_dependent } => {
            if dim != 2 {
                return Err(Error::Unsupported("smooth modal controls require n = 2".into()));
            }
            let width = rng.gen_range(0.02..0.1) * grid.radius();
            let base = logistic_profile(grid, spec, width);
            let k = rng.gen_range(1..=d.k_max.clamp(1, 4));
            let gamma = rng.gen_range(0.3..0.9);
            let phase0 = rng.gen_range(0.0..2.0 * PI);
            let speed = if time_dependent {
                rng.gen_range(1..=3) as f64
            } else {
                0.0
            };
            let amp: Vec<f64> = base.iter().map(|b| gamma * b.min(1.0 - b)).collect();
            let mut channels = BTreeMap::new();
            channels.insert(Channel::RADIAL, Slices::Steady(base));
            let phase = |n: usize| phase0 + 2.0 * PI * speed * d.time.time(n) / d.time.horizon();
            let scaled = |f: &dyn Fn(f64) -> f64, n: usize| -> Vec<f64> {
                amp.iter().map(|a| a * f(phase(n))).collect()
            };
            // a cos(kθ + φ) = a cos φ cos kθ - a sin φ sin kθ
            let (c, s): (Slices, Slices) = if time_dependent {
                (
                    Slices::Timed((0..d.time.len()).map(|n| scaled(&f64::cos, n)).collect()),
                    Slices::Timed((0..d.time.len()).map(|n| scaled(&|x: f64| -x.sin(), n)).collect()),
                )
            } else {
                (
                    Slices::Steady(scaled(&f64::cos, 0)),
                    Slices::Steady(scaled(&|x: f64| -x.sin(), 0)),
                )
            };
            channels.insert(Channel::cos(k), c);
            channels.insert(Channel::sin(k), s);
            Ok(Control::Modal(ModalStack { channels }))
        }
        RandomKind::DriftingBall => {
            if dim != 2 {
                return Err(Error::Unsupported("drifting balls require n = 2".into()));
            }
            let rho = spec.ball_radius(2);
            let max_shift = grid.radius() - rho;
            let dist = rng.gen_range(0.0..0.9) * max_shift;
            let phase0 = rng.gen_range(0.0..2.0 * PI);
            let speed = rng.gen_range(-2.0..2.0) * PI;
            let t_end = d.time.horizon();
            let shapes = (0..d.time.len())
                .map(|n| {
                    let a = phase0 + speed * d.time.time(n) / t_end;
                    Shape::Ball {
                        center: [dist * a.cos(), dist * a.sin()],
                        radius: rho,
                    }
                })
                .collect();
            Ok(Control::TimeShape(shapes))
        }
        RandomKind::OscillatingAnnulus { delta0, m } => oscillating_annulus(delta0, m, spec, d),
    }
}

/// Random radial bang-bang set with `Vol(E Δ B*) = δ`: mass `δ/2` removed
/// from `(r* - κ r⁻, r*)` and added in `(r*, r* + κ r⁺)`, `κ ∈ [1, 2]`.
pub fn sample_delta_bangbang(
    rng: &mut impl Rng,
    delta: f64,
    spec: &AdmissibleSpec,
    grid: &RadialGrid,
) -> Result<Shape> {
    let a = annulus_radii(delta, spec, grid)?;
    let dim = grid.dim();
    let om = unit_ball_volume(dim);
    let kappa = rng.gen_range(1.0..2.0);
    let rs = a.r_star;
    let v_star = spec.v0;
    let inner_lo = om * (rs - kappa * a.r_minus).max(0.0).powi(dim as i32);
    let outer_hi = (om * (rs + kappa * a.r_plus).powi(dim as i32)).min(grid.domain_volume());
    let half = 0.5 * delta;
    if v_star - inner_lo < half || outer_hi - v_star < half {
        return Err(Error::Geometry("delta too large for the window".into()));
    }
    let (ni, no) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let removed = random_intervals(rng, ni, inner_lo, v_star, half);
    let added = random_intervals(rng, no, v_star, outer_hi, half);
    // complement of the removed intervals inside the ball, then the additions
    let mut kept = Vec::new();
    let mut pos = 0.0;
    for &(x, y) in &removed {
        if x > pos {
            kept.push((pos, x));
        }
        pos = y;
    }
    if v_star > pos {
        kept.push((pos, v_star));
    }
    kept.extend(added);
    let merged: Vec<(f64, f64)> = merge_intervals(kept).into_iter().map(|(a, b, _)| (a, b)).collect();
    Ok(Shape::Radial(shells_from_volumes(&merged, dim)?))
}

/// Random radial step profile with values in `[0, 1]` and mass `V0`
/// (not necessarily bang-bang).
pub fn sample_step_profile(rng: &mut impl Rng, spec: &AdmissibleSpec, grid: &RadialGrid, cells: usize) -> Result<Shape> {
    let dim = grid.dim();
    let vol = grid.domain_volume();
    let mut cuts: Vec<f64> = (0..cells.saturating_sub(1)).map(|_| rng.gen::<f64>() * vol).collect();
    cuts.push(0.0);
    cuts.push(vol);
    cuts.sort_by(f64::total_cmp);
    let widths: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
    let raw: Vec<f64> = widths.iter().map(|_| rng.gen::<f64>()).collect();
    // water-fill so that Σ clamp(raw + c) width = V0
    let mass = |c: f64| widths.iter().zip(&raw).map(|(w, v)| w * (v + c).clamp(0.0, 1.0)).sum::<f64>();
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < spec.v0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let breaks: Vec<f64> = cuts.iter().map(|&v| to_radius(v, dim)).collect();
    let values = raw.iter().map(|v| (v + c).clamp(0.0, 1.0)).collect();
    Ok(Shape::Radial(StepProfile::new(breaks, values)?))
}

/// Random step profile in the class `‖g - 1_{B*}‖₁ = δ`: a deficit of mass
/// `δ/2` inside `B*` and an excess of mass `δ/2` outside, both with values
/// in `[0, 1]`.
pub fn sample_delta_profile(rng: &mut impl Rng, delta: f64, spec: &AdmissibleSpec, grid: &RadialGrid) -> Result<Shape> {
    let dim = grid.dim();
    let vol = grid.domain_volume();
    let half = 0.5 * delta;
    if half > spec.v0 || half > vol - spec.v0 {
        return Err(Error::Geometry(format!("delta {delta} infeasible")));
    }
    // split [0, V0] and [V0, Vol] in the volume variable into random cells
    let part = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64, target: f64| -> (Vec<f64>, Vec<f64>) {
        let cells = rng.gen_range(1..=6);
        let mut cuts: Vec<f64> = (0..cells - 1).map(|_| lo + rng.gen::<f64>() * (hi - lo)).collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let widths: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        let raw: Vec<f64> = widths.iter().map(|_| rng.gen::<f64>()).collect();
        let mass = |c: f64| widths.iter().zip(&raw).map(|(w, v)| w * (v * c).min(1.0)).sum::<f64>();
        let (mut a, mut b) = (0.0, 1e12);
        for _ in 0..300 {
            let mid = 0.5 * (a + b);
            if mass(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        let c = 0.5 * (a + b);
        (cuts, raw.iter().map(|v| (v * c).min(1.0)).collect())
    };
    let (cin, din) = part(rng, 0.0, spec.v0, half);
    let (cout, dout) = part(rng, spec.v0, vol, half);
    let mut breaks: Vec<f64> = cin.iter().map(|&v| to_radius(v, dim)).collect();
    let mut values: Vec<f64> = din.iter().map(|x| 1.0 - x).collect();
    breaks.extend(cout[1..].iter().map(|&v| to_radius(v, dim)));
    values.extend(dout);
    Ok(Shape::Radial(StepProfile::new(breaks, values)?))
}

/// Measure-model pieces of a control slice; used by the brute-force checks.
pub fn slice_pieces(d: &Discretization, s: &Slice) -> Result<Vec<Piece>> {
    pieces(&d.grid, s.sampled())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(m: usize) -> Discretization {
        let grid = RadialGrid::new(1.0, m, 2, 0.5).unwrap();
        let time = TimeGrid::new(1.0, 8, 0.5).unwrap();
        Discretization::new(grid, time, 256, 16).unwrap()
    }

    fn spec(d: &Discretization) -> AdmissibleSpec {
        AdmissibleSpec::new(PI / 4.0, &d.grid).unwrap()
    }

    #[test]
    fn annulus_closed_form() {
        let d = disc(64);
        let s = spec(&d);
        let a = annulus_radii(0.05 * PI, &s, &d.grid).unwrap();
        assert!((a.r_minus - (0.5 - 0.225f64.sqrt())).abs() < 1e-14);
        assert!((a.r_plus - (0.275f64.sqrt() - 0.5)).abs() < 1e-14);
        let z = annulus_radii(0.0, &s, &d.grid).unwrap();
        assert_eq!((z.r_minus, z.r_plus), (0.0, 0.0));
        assert!(annulus_radii(-1.0, &s, &d.grid).is_err());
        assert!(annulus_radii(2.0 * PI, &s, &d.grid).is_err());
    }

    #[test]
    fn annulus_volumes() {
        let d = disc(64);
        let s = spec(&d);
        for delta in [1e-4, 0.01, 0.3, 1.5] {
            let a = Shape::Annulus(annulus_radii(delta, &s, &d.grid).unwrap());
            assert!((a.volume(2) - s.v0).abs() < 1e-12);
            let l1 = shape_l1(&a, &Shape::centered_ball(0.5), 2, 64);
            assert!((l1 - delta).abs() < 1e-12 * delta.max(1.0), "{l1} {delta}");
            let m = Control::Shape(a).mass(&d, 0).unwrap();
            assert!((m - s.v0).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_ball_lens() {
        let d = disc(128);
        let s = spec(&d);
        let f = shifted_ball_control([0.05, 0.0], &s, &d.grid).unwrap();
        let star = Control::Shape(Shape::centered_ball(0.5));
        let l1 = l1_distance(&d, &f, &star, 0).unwrap();
        // rays crossing both circles put kinks in the angular integrand
        assert!((l1 - shifted_ball_delta(0.05, 0.5)).abs() < 1e-4 * l1, "{l1}");
        let m = f.mass(&d, 0).unwrap();
        assert!((m - s.v0).abs() < 1e-10, "{m}");
        assert_eq!(shifted_ball_control([0.0, 0.0], &s, &d.grid).unwrap(), star);
        assert!(shifted_ball_control([0.6, 0.0], &s, &d.grid).is_err());
        let x = shift_for_delta(0.1, 0.5).unwrap();
        assert!((shifted_ball_delta(x, 0.5) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn deformed_ball_volume_and_channels() {
        let d = disc(256);
        let s = spec(&d);
        let zero = deformed_ball_control(0.0, vec![(2, 1.0, 0.0)], &s, &d.grid).unwrap();
        let star = Control::Shape(Shape::centered_ball(0.5)).loads(&d).unwrap();
        assert_eq!(zero.loads(&d).unwrap(), star);
        let tau = 1e-3;
        let f = deformed_ball_control(tau, vec![(2, 1.0, 0.0)], &s, &d.grid).unwrap();
        let Control::Shape(Shape::DeformedBall(db)) = &f else { unreachable!() };
        assert!((db.volume() - s.v0).abs() < 1e-15);
        assert!(db.offset < 0.0 && db.offset.abs() < tau * tau);
        let loads = f.loads(&d).unwrap();
        let c2 = loads.channels[&Channel::cos(2)].at(0);
        // thin-shell limit: ∫ a₂ r dr = τ r*
        let m: f64 = c2.iter().zip(d.grid.weights()).map(|(a, w)| a * w).sum();
        assert!((m - tau * 0.5).abs() < 1e-3 * tau, "{m}");
        for (j, v) in c2.iter().enumerate() {
            if v.abs() > 1e-12 {
                assert!((j as i64 - d.grid.star_index() as i64).abs() <= 1);
            }
        }
        assert!((f.mass(&d, 0).unwrap() - s.v0).abs() < 1e-12);
    }

    #[test]
    fn polar_and_modal_round_trip() {
        let d = disc(64);
        let s = spec(&d);
        let f = shifted_ball_control([0.1, -0.05], &s, &d.grid).unwrap();
        let loads = f.loads(&d).unwrap();
        let polar = Control::Shape(match &f {
            Control::Shape(s) => s.clone(),
            _ => unreachable!(),
        })
        .slice(&d, 0)
        .unwrap();
        let Slice::Polar(p) = polar else { unreachable!() };
        let again = ModalStack::from_polar(&d, &p).unwrap();
        for (c, v) in &loads.channels {
            let w = again.channels.get(c).map(|s| s.at(0).to_vec()).unwrap_or(vec![0.0; d.grid.len()]);
            for (a, b) in v.at(0).iter().zip(&w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bathtub_examples() {
        let d = disc(64);
        let s = spec(&d);
        let psi = RadialField::from_fn(&d.grid, |r| 1.0 - r * r);
        let b = bathtub_maximizer(&d.grid, Sampled::Radial(&psi), &s).unwrap();
        assert!(!b.degenerate);
        let Control::Radial(f) = &b.control else { unreachable!() };
        let star = Control::Shape(Shape::centered_ball(0.5)).loads(&d).unwrap();
        for (a, e) in f.iter().zip(star.channels[&Channel::RADIAL].at(0)) {
            assert!((a - e).abs() < 1e-12, "{a} {e}");
        }
        let flat = vec![2.0; d.grid.len()];
        let b = bathtub_maximizer(&d.grid, Sampled::Radial(&flat), &s).unwrap();
        assert!(b.degenerate);
        assert!((b.control.mass(&d, 0).unwrap() - s.v0).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let d = disc(64);
        let s = spec(&d);
        let star = Control::Shape(Shape::centered_ball(0.5)).loads(&d).unwrap();
        let f = star.channels[&Channel::RADIAL].at(0).to_vec();
        assert_eq!(project_admissible(&d.grid, &f, &s).unwrap(), Control::Radial(RadialField(f.clone())));
        let doubled: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        let Control::Radial(p) = project_admissible(&d.grid, &doubled, &s).unwrap() else { unreachable!() };
        for (a, b) in p.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = vec![s.v0 / PI; d.grid.len()];
        let mut cc = c.clone();
        *cc.last_mut().unwrap() = s.v0 / PI;
        let Control::Radial(p) = project_admissible(&d.grid, &cc, &s).unwrap() else { unreachable!() };
        for (a, b) in p.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_kinds_are_admissible() {
        let d = disc(64);
        let s = spec(&d);
        let kinds = [
            RandomKind::BangBangRadial,
            RandomKind::Smooth { time_dependent: false },
            RandomKind::Smooth { time_dependent: true },
            RandomKind::MovingShells,
            RandomKind::DriftingBall,
            RandomKind::OscillatingAnnulus { delta0: 0.05, m: 2 },
        ];
        for seed in 0..5 {
            for kind in kinds {
                let f = sample_random_admissible(seed, kind, &s, &d).unwrap();
                f.check_admissible(&d, &s, 1e-10).unwrap_or_else(|e| panic!("{kind:?}: {e}"));
            }
        }
        let f = oscillating_annulus(0.05, 2, &s, &d).unwrap();
        assert_eq!(f.shape_at(0), Some(&Shape::Annulus(annulus_radii(0.0, &s, &d.grid).unwrap())));
    }

    #[test]
    fn delta_classes_have_exact_distance() {
        let d = disc(64);
        let s = spec(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let star = Shape::centered_ball(0.5);
        for delta in [1e-3, 0.02, 0.3] {
            for _ in 0..5 {
                let a = sample_delta_bangbang(&mut rng, delta, &s, &d.grid).unwrap();
                let b = sample_delta_profile(&mut rng, delta, &s, &d.grid).unwrap();
                for shape in [a, b] {
                    assert!((shape_l1(&shape, &star, 2, 64) - delta).abs() < 1e-11 * delta.max(1.0));
                    assert!((shape.volume(2) - s.v0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let d = disc(64);
        let s = spec(&d);
        for seed in 0..3 {
            let f = sample_random_admissible(seed, RandomKind::Smooth { time_dependent: true }, &s, &d).unwrap();
            let doc = f.to_document(&d).unwrap();
            let text = serde_json::to_string(&doc).unwrap();
            let back: ControlDocument = serde_json::from_str(&text).unwrap();
            assert_eq!(back, doc);
        }
    }
}
