//! Schwarz rearrangement on the radial and polar grids.
//!
//! A sampled field is a finite collection of pieces `(value, measure)`:
//! nodal value `f_j` with measure `n Vol(B(0,1)) w_j` on the radial grid, or
//! `2π w_j / L` per angular sample on the polar grid. Its decreasing
//! rearrangement is the step function in the volume variable obtained by
//! sorting the pieces, which is exactly equimeasurable with the input.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{PolarField, RadialField, RadialGrid, Sampled};

/// Values below this are treated as zero rather than rejected.
pub const NEGATIVE_CLIP: f64 = -1e-12;
pub const MIN_ANGULAR: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub value: f64,
    pub measure: f64,
}

/// Pieces in input-index order (node-major for polar fields).
pub fn pieces(grid: &RadialGrid, f: Sampled<'_>) -> Result<Vec<Piece>> {
    match f {
        Sampled::Radial(v) => {
            grid.check(v)?;
            let lam = grid.angular_measure();
            Ok(v.iter()
                .zip(grid.weights())
                .map(|(&value, w)| Piece {
                    value,
                    measure: lam * w,
                })
                .collect())
        }
        Sampled::Polar(p) => {
            p.check(grid)?;
            if grid.dim() != 2 {
                return Err(Error::Unsupported("polar fields require n = 2".into()));
            }
            let mut out = Vec::with_capacity(p.values.len());
            for j in 0..grid.len() {
                let measure = p.sample_measure(grid, j);
                for l in 0..p.angular {
                    out.push(Piece {
                        value: p.ray(l)[j],
                        measure,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// Decreasing step function of the volume variable `m ∈ [0, Vol(Ω)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rearrangement {
    values: Vec<f64>,
    measures: Vec<f64>,
    // prefix sums of measure and of value * measure
    ends: Vec<f64>,
    mass: Vec<f64>,
}

impl Rearrangement {
    /// Sorts pieces by decreasing value; ties keep their input order.
    pub fn from_pieces(mut pieces: Vec<Piece>) -> Self {
        pieces.sort_by(|a, b| b.value.total_cmp(&a.value));
        let mut ends = Vec::with_capacity(pieces.len());
        let mut mass = Vec::with_capacity(pieces.len());
        let (mut m, mut s) = (0.0, 0.0);
        for p in &pieces {
            m += p.measure;
            s += p.value * p.measure;
            ends.push(m);
            mass.push(s);
        }
        Self {
            values: pieces.iter().map(|p| p.value).collect(),
            measures: pieces.iter().map(|p| p.measure).collect(),
            ends,
            mass,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn measures(&self) -> &[f64] {
        &self.measures
    }
    pub fn total_measure(&self) -> f64 {
        self.ends.last().copied().unwrap_or(0.0)
    }
    pub fn integral(&self) -> f64 {
        self.mass.last().copied().unwrap_or(0.0)
    }
    /// `∫ (f^#)^p`.
    pub fn integral_pow(&self, p: i32) -> f64 {
        self.values
            .iter()
            .zip(&self.measures)
            .map(|(v, m)| v.powi(p) * m)
            .sum()
    }

    /// `∫_0^m f^#`, i.e. the integral of `f^#` over the centered ball of volume `m`.
    pub fn cumulative(&self, m: f64) -> f64 {
        if m <= 0.0 || self.values.is_empty() {
            return 0.0;
        }
        let i = self.ends.partition_point(|&e| e < m);
        if i >= self.values.len() {
            return self.integral();
        }
        let before = if i == 0 { 0.0 } else { self.ends[i - 1] };
        let base = if i == 0 { 0.0 } else { self.mass[i - 1] };
        if m == self.ends[i] {
            return self.mass[i];
        }
        base + self.values[i] * (m - before)
    }

    /// Volume of `{f > τ}`.
    pub fn measure_above(&self, tau: f64) -> f64 {
        let i = self.values.partition_point(|&v| v > tau);
        if i == 0 {
            0.0
        } else {
            self.ends[i - 1]
        }
    }

    /// `∫ f^# g^#` by merging the two step functions.
    pub fn dot(&self, other: &Rearrangement) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut pos = 0.0;
        let mut acc = 0.0;
        while i < self.values.len() && j < other.values.len() {
            let end = self.ends[i].min(other.ends[j]);
            acc += self.values[i] * other.values[j] * (end - pos).max(0.0);
            pos = end;
            if self.ends[i] <= end {
                i += 1;
            }
            if other.ends[j] <= end {
                j += 1;
            }
        }
        acc
    }

    /// Averages of `f^#` over the radial shells of the grid, filled from the
    /// center. A shell whose overlapping steps all carry the same value
    /// receives that value exactly.
    pub fn to_field(&self, grid: &RadialGrid) -> RadialField {
        let lam = grid.angular_measure();
        let mut out = Vec::with_capacity(grid.len());
        let mut start = 0.0;
        let mut i = 0;
        for w in grid.weights() {
            let width = lam * w;
            let end = start + width;
            let negligible = 1e-12 * width;
            let mut acc = 0.0;
            let mut common: Option<f64> = None;
            let mut uniform = true;
            let mut pos = start;
            let mut k = i;
            while k < self.values.len() && pos < end {
                let seg_end = self.ends[k].min(end);
                let len = seg_end - pos;
                if len > negligible {
                    match common {
                        None => common = Some(self.values[k]),
                        Some(c) if c != self.values[k] => uniform = false,
                        _ => {}
                    }
                }
                acc += self.values[k] * len.max(0.0);
                pos = seg_end;
                if self.ends[k] <= end {
                    k += 1;
                } else {
                    break;
                }
            }
            // the step straddling `end` is revisited by the next shell
            i = k;
            let v = match (uniform, common) {
                (true, Some(c)) => c,
                _ if pos > start => acc / (pos - start),
                _ => self.values.last().copied().unwrap_or(0.0),
            };
            out.push(v);
            start = end;
        }
        RadialField(out)
    }
}

fn validate(p: &[Piece]) -> Result<Vec<Piece>> {
    p.iter()
        .map(|p| {
            if !p.value.is_finite() {
                Err(invalid("f", "non-finite value"))
            } else if p.value < NEGATIVE_CLIP {
                Err(invalid("f", format!("negative value {}", p.value)))
            } else {
                Ok(Piece {
                    value: p.value.max(0.0),
                    measure: p.measure,
                })
            }
        })
        .collect()
}

/// Schwarz rearrangement of a nonnegative radial or polar field.
pub fn decreasing_rearrangement(grid: &RadialGrid, f: Sampled<'_>) -> Result<Rearrangement> {
    if let Sampled::Polar(p) = f {
        if p.angular < MIN_ANGULAR {
            return Err(invalid(
                "angular",
                format!("{} samples, at least {MIN_ANGULAR} required", p.angular),
            ));
        }
    }
    Ok(Rearrangement::from_pieces(validate(&pieces(grid, f)?)?))
}

/// Rearrangement of a field sampled on the polar grid.
pub fn schwarz_2d(grid: &RadialGrid, f: &PolarField) -> Result<Rearrangement> {
    decreasing_rearrangement(grid, Sampled::Polar(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precedence {
    pub holds: bool,
    /// `min_r ∫_{B_r} g - ∫_{B_r} f^#` over the grid shells.
    pub worst_margin: f64,
}

/// Tests `f ≺ g`: `∫_{B_r} f^# ≤ ∫_{B_r} g` at every node radius, up to
/// `1e-6 Vol(Ω)`.
pub fn precedes(grid: &RadialGrid, f: Sampled<'_>, g: Sampled<'_>) -> Result<Precedence> {
    let fr = decreasing_rearrangement(grid, f)?;
    let lam = grid.angular_measure();
    let shell_mass: Vec<f64> = match g {
        Sampled::Radial(v) => {
            grid.check(v)?;
            v.iter()
                .zip(grid.weights())
                .map(|(v, w)| lam * w * v)
                .collect()
        }
        Sampled::Polar(p) => {
            p.check(grid)?;
            (0..grid.len())
                .map(|j| {
                    let m = p.sample_measure(grid, j);
                    (0..p.angular).map(|l| p.ray(l)[j] * m).sum()
                })
                .collect()
        }
    };
    let mut worst = f64::INFINITY;
    let (mut vol, mut acc) = (0.0, 0.0);
    for (w, s) in grid.weights().iter().zip(&shell_mass) {
        vol += lam * w;
        acc += s;
        worst = worst.min(acc - fr.cumulative(vol));
    }
    let tol = 1e-6 * grid.domain_volume();
    Ok(Precedence {
        holds: worst >= -tol,
        worst_margin: worst,
    })
}

/// `∫ f^# g^# - ∫ f g`; nonnegative by the Hardy–Littlewood inequality.
pub fn check_hardy_littlewood(grid: &RadialGrid, f: Sampled<'_>, g: Sampled<'_>) -> Result<f64> {
    let fp = validate(&pieces(grid, f)?)?;
    let gp = validate(&pieces(grid, g)?)?;
    if fp.len() != gp.len() {
        return Err(Error::GridMismatch {
            expected: fp.len(),
            found: gp.len(),
        });
    }
    let direct: f64 = fp.iter().zip(&gp).map(|(a, b)| a.value * b.value * a.measure).sum();
    let fr = Rearrangement::from_pieces(fp);
    let gr = Rearrangement::from_pieces(gp);
    Ok(fr.dot(&gr) - direct)
}

/// Distribution function `τ ↦ Vol({f > τ})` at decreasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionProfile {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
}

/// Volume of `{f > τ}` for a radial field, using exact level sets of its
/// piecewise-linear interpolant.
pub fn radial_measure_above(grid: &RadialGrid, f: &[f64], tau: f64) -> Result<f64> {
    grid.check(f)?;
    let r = grid.nodes();
    let mut vol = 0.0;
    for i in 0..grid.cells() {
        let (a, b) = (f[i], f[i + 1]);
        let (lo, hi) = if a > tau && b > tau {
            (r[i], r[i + 1])
        } else if a <= tau && b <= tau {
            continue;
        } else {
            let x = r[i] + (tau - a) / (b - a) * (r[i + 1] - r[i]);
            if a > tau {
                (r[i], x)
            } else {
                (x, r[i + 1])
            }
        };
        vol += grid.ball_volume(hi) - grid.ball_volume(lo);
    }
    Ok(vol)
}

/// Profile at `n_thresholds` equispaced levels from `max f` down to
/// `min(min f, 0)`.
pub fn distribution(
    grid: &RadialGrid,
    f: Sampled<'_>,
    n_thresholds: usize,
) -> Result<DistributionProfile> {
    if n_thresholds < 2 {
        return Err(invalid("n_thresholds", "at least 2 required"));
    }
    let values: Vec<f64> = match f {
        Sampled::Radial(v) => v.to_vec(),
        Sampled::Polar(p) => p.values.clone(),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("f", "non-finite value"));
    }
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let thresholds: Vec<f64> = (0..n_thresholds)
        .map(|i| hi - (hi - lo) * i as f64 / (n_thresholds - 1) as f64)
        .collect();
    let measures = match f {
        Sampled::Radial(v) => thresholds
            .iter()
            .map(|&t| radial_measure_above(grid, v, t))
            .collect::<Result<Vec<_>>>()?,
        Sampled::Polar(_) => {
            let r = Rearrangement::from_pieces(pieces(grid, f)?);
            thresholds.iter().map(|&t| r.measure_above(t)).collect()
        }
    };
    Ok(DistributionProfile {
        thresholds,
        measures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> RadialGrid {
        RadialGrid::new(1.0, 64, 2, 0.5).unwrap()
    }

    #[test]
    fn decreasing_input_is_a_fixed_point() {
        let g = grid();
        let f = RadialField::from_fn(&g, |r| (1.0 - r).powi(2) + 0.25 * (r < 0.3) as u8 as f64);
        let fr = decreasing_rearrangement(&g, Sampled::Radial(&f)).unwrap();
        assert_eq!(fr.to_field(&g), f);
        let twice = decreasing_rearrangement(&g, Sampled::Radial(&fr.to_field(&g))).unwrap();
        assert_eq!(twice.to_field(&g), f);
    }

    #[test]
    fn radial_as_polar_matches_one_dimensional_path() {
        let g = grid();
        let f = RadialField::from_fn(&g, |r| (3.0 * r).sin().abs());
        let one = decreasing_rearrangement(&g, Sampled::Radial(&f)).unwrap().to_field(&g);
        let p = PolarField::from_radial(&f, 64);
        let two = schwarz_2d(&g, &p).unwrap().to_field(&g);
        for (a, b) in one.iter().zip(two.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn rejects_negative_and_coarse_input() {
        let g = grid();
        let mut f = vec![0.5; g.len()];
        f[3] = -0.1;
        assert!(decreasing_rearrangement(&g, Sampled::Radial(&f)).is_err());
        f[3] = -1e-13;
        assert!(decreasing_rearrangement(&g, Sampled::Radial(&f)).is_ok());
        let p = PolarField::zeros(&g, 32);
        assert!(schwarz_2d(&g, &p).is_err());
    }

    #[test]
    fn precedes_examples() {
        let g = grid();
        let f = RadialField::from_fn(&g, |r| 1.0 - r);
        let p = precedes(&g, Sampled::Radial(&f), Sampled::Radial(&f)).unwrap();
        assert!(p.holds);
        assert_eq!(p.worst_margin, 0.0);
        let star = RadialField::from_fn(&g, |r| (r < 0.5) as u8 as f64);
        let double: Vec<f64> = star.iter().map(|v| 2.0 * v).collect();
        let p = precedes(&g, Sampled::Radial(&double), Sampled::Radial(&star)).unwrap();
        let v0 = crate::geometry::disk_integral(&g, &star).unwrap();
        assert!(!p.holds);
        assert!((p.worst_margin + v0).abs() < 1e-12);
    }

    #[test]
    fn hardy_littlewood_equality_for_decreasing_pair() {
        let g = grid();
        let f = RadialField::from_fn(&g, |r| 1.0 - r);
        let h = RadialField::from_fn(&g, |r| (-r * r).exp());
        let res = check_hardy_littlewood(&g, Sampled::Radial(&f), Sampled::Radial(&h)).unwrap();
        assert!(res.abs() < 1e-14);
        let inc = RadialField::from_fn(&g, |r| r);
        let res = check_hardy_littlewood(&g, Sampled::Radial(&f), Sampled::Radial(&inc)).unwrap();
        assert!(res > 0.0);
    }

    #[test]
    fn distribution_examples() {
        let g = grid();
        let lin = RadialField::from_fn(&g, |r| 1.0 - r);
        let d = distribution(&g, Sampled::Radial(&lin), 11).unwrap();
        for (t, m) in d.thresholds.iter().zip(&d.measures) {
            assert!((m - PI * (1.0 - t).powi(2)).abs() < 1e-12, "{t} {m}");
        }
        let c = vec![0.7; g.len()];
        let d = distribution(&g, Sampled::Radial(&c), 5).unwrap();
        assert_eq!(d.measures[0], 0.0);
        assert!((d.measures[1] - PI).abs() < 1e-12);
    }

    #[test]
    fn cumulative_and_measure_above() {
        let r = Rearrangement::from_pieces(vec![
            Piece { value: 1.0, measure: 2.0 },
            Piece { value: 3.0, measure: 1.0 },
            Piece { value: 2.0, measure: 1.0 },
        ]);
        assert_eq!(r.values(), &[3.0, 2.0, 1.0]);
        assert_eq!(r.cumulative(1.5), 4.0);
        assert_eq!(r.cumulative(10.0), 7.0);
        assert_eq!(r.measure_above(1.5), 2.0);
        assert_eq!(r.integral_pow(2), 15.0);
        assert_eq!(r.dot(&r), 15.0);
    }
}
