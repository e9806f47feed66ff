//! Vector field implementations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A smooth vector field `G` on `R^m` with its Jacobian `DG`.
///
/// Buffers are caller-provided so the integrator can run allocation free.
/// `jacobian` writes `DG(x)` row-major into an `m * m` slice.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
    /// An upper bound for `sup ||DG||` over the axis-aligned box `[lo, hi]`.
    fn lipschitz_bound(&self, lo: &[f64], hi: &[f64]) -> f64;
}

/// Affine field `G(x) = A x + b`.
#[derive(Debug, Clone)]
pub struct AffineField {
    a: DMatrix<f64>,
    b: Vec<f64>,
}

impl AffineField {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == b.len());
        AffineField { a, b }
    }

    pub fn linear(a: DMatrix<f64>) -> Self {
        let m = a.nrows();
        Self::new(a, vec![0.0; m])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let m = self.b.len();
        for i in 0..m {
            let mut s = self.b[i];
            for j in 0..m {
                s += self.a[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        let m = self.b.len();
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = self.a[(i, j)];
            }
        }
    }

    fn lipschitz_bound(&self, _lo: &[f64], _hi: &[f64]) -> f64 {
        if self.a.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        self.a.clone().svd(false, false).singular_values.max()
    }
}

/// Lorenz equations `x' = s(y - x)`, `y' = x(r - z) - y`, `z' = xy - bz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Lorenz {
    pub const CLASSIC: Lorenz = Lorenz {
        sigma: 10.0,
        rho: 28.0,
        beta: 8.0 / 3.0,
    };

    fn as_polynomial(&self) -> PolynomialField {
        let t = |coeff: f64, powers: [u32; 3]| Monomial {
            coeff,
            powers: powers.to_vec(),
        };
        PolynomialField::new(
            3,
            vec![
                vec![t(-self.sigma, [1, 0, 0]), t(self.sigma, [0, 1, 0])],
                vec![t(self.rho, [1, 0, 0]), t(-1.0, [0, 1, 0]), t(-1.0, [1, 0, 1])],
                vec![t(1.0, [1, 1, 0]), t(-self.beta, [0, 0, 1])],
            ],
        )
    }
}

impl VectorField for Lorenz {
    fn dim(&self) -> usize {
        3
    }

    #[inline]
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * (x[1] - x[0]);
        out[1] = x[0] * (self.rho - x[2]) - x[1];
        out[2] = x[0] * x[1] - self.beta * x[2];
    }

    #[inline]
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.sigma;
        out[1] = self.sigma;
        out[2] = 0.0;
        out[3] = self.rho - x[2];
        out[4] = -1.0;
        out[5] = -x[0];
        out[6] = x[1];
        out[7] = x[0];
        out[8] = -self.beta;
    }

    fn lipschitz_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.as_polynomial().lipschitz_bound(lo, hi)
    }
}

/// One monomial `coeff * prod_k x_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.coeff;
        for (xi, p) in x.iter().zip(&self.powers) {
            if *p > 0 {
                v *= xi.powi(*p as i32);
            }
        }
        v
    }

    fn derivative(&self, k: usize) -> Option<Monomial> {
        let p = self.powers[k];
        if p == 0 || self.coeff == 0.0 {
            return None;
        }
        let mut powers = self.powers.clone();
        powers[k] -= 1;
        Some(Monomial {
            coeff: self.coeff * p as f64,
            powers,
        })
    }

    /// Bound of `|monomial|` on the box.
    fn abs_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut v = self.coeff.abs();
        for k in 0..self.powers.len() {
            let m = lo[k].abs().max(hi[k].abs());
            v *= m.powi(self.powers[k] as i32);
        }
        v
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }
}

/// Polynomial vector field: component `i` is the sum of `rows[i]`.
#[derive(Debug, Clone)]
pub struct PolynomialField {
    dim: usize,
    rows: Vec<Vec<Monomial>>,
    jac: Vec<Vec<Monomial>>,
}

impl PolynomialField {
    pub fn new(dim: usize, rows: Vec<Vec<Monomial>>) -> Self {
        assert_eq!(rows.len(), dim);
        let mut jac = Vec::with_capacity(dim * dim);
        for row in &rows {
            for k in 0..dim {
                jac.push(row.iter().filter_map(|t| t.derivative(k)).collect());
            }
        }
        PolynomialField { dim, rows, jac }
    }

    pub fn rows(&self) -> &[Vec<Monomial>] {
        &self.rows
    }

    pub fn max_degree(&self) -> u32 {
        self.rows
            .iter()
            .flatten()
            .map(Monomial::degree)
            .max()
            .unwrap_or(0)
    }
}

impl VectorField for PolynomialField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|t| t.eval(x)).sum();
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        for (o, entry) in out.iter_mut().zip(&self.jac) {
            *o = entry.iter().map(|t| t.eval(x)).sum();
        }
    }

    fn lipschitz_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        // Frobenius norm of entrywise bounds dominates the spectral norm.
        if self.max_degree() <= 1 {
            let mut a = DMatrix::zeros(self.dim, self.dim);
            let zero = vec![0.0; self.dim];
            let mut buf = vec![0.0; self.dim * self.dim];
            self.jacobian(&zero, &mut buf);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    a[(i, j)] = buf[i * self.dim + j];
                }
            }
            return AffineField::linear(a).lipschitz_bound(lo, hi);
        }
        self.jac
            .iter()
            .map(|entry| {
                let b: f64 = entry.iter().map(|t| t.abs_bound(lo, hi)).sum();
                b * b
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_matches_its_polynomial_form() {
        let l = Lorenz::CLASSIC;
        let p = l.as_polynomial();
        let x = [1.5, -2.0, 20.0];
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        l.eval(&x, &mut a);
        p.eval(&x, &mut b);
        assert_eq!(a, b);
        let (mut ja, mut jb) = ([0.0; 9], [0.0; 9]);
        l.jacobian(&x, &mut ja);
        p.jacobian(&x, &mut jb);
        assert_eq!(ja, jb);
    }

    #[test]
    fn affine_bound_is_spectral_norm() {
        let f = AffineField::linear(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0, -1.0, -2.0,
        ])));
        assert!((f.lipschitz_bound(&[0.0; 3], &[0.0; 3]) - 2.0).abs() < 1e-14);
    }
}
