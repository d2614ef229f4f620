//! Symmetric tridiagonal solves with a reusable factorization.

use crate::error::{Error, Result};

/// LU factorization of a tridiagonal matrix with diagonal `diag` and
/// symmetric off-diagonal `off` (`off[i]` couples rows `i` and `i + 1`).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    off: Vec<f64>,
    // modified super-diagonal and inverse pivots of the forward sweep
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    pub fn factor(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        assert_eq!(off.len() + 1, n.max(1), "off-diagonal length");
        let mut upper = vec![0.0; n.saturating_sub(1)];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let sub = if i > 0 { off[i - 1] } else { 0.0 };
            let pivot = diag[i] - sub * prev_upper;
            if pivot.abs() < f64::MIN_POSITIVE || !pivot.is_finite() {
                return Err(Error::Singular { row: i });
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                upper[i] = off[i] * inv_pivot[i];
                prev_upper = upper[i];
            }
        }
        Ok(Self {
            off: off.to_vec(),
            upper,
            inv_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// y = (diag + off) x for a symmetric tridiagonal matrix.
pub fn sym_mul(diag: &[f64], off: &[f64], x: &[f64], y: &mut [f64]) {
    let n = diag.len();
    for i in 0..n {
        let mut acc = diag[i] * x[i];
        if i > 0 {
            acc += off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            acc += off[i] * x[i + 1];
        }
        y[i] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let diag = [4.0, 4.0, 4.0, 4.0];
        let off = [-1.0, -1.0, -1.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b = [0.0; 4];
        sym_mul(&diag, &off, &x, &mut b);
        let f = Tridiagonal::factor(&diag, &off).unwrap();
        f.solve(&mut b);
        for (a, e) in b.iter().zip(x.iter()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let err = Tridiagonal::factor(&[1.0, 1.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Singular { row: 1 }));
    }
}
