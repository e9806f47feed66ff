//! Small dense linear algebra used by the tangent machinery.
//!
//! Frames are `m x k` column matrices with `k <= m` small (at most the
//! phase-space dimension), so everything here is written for clarity over
//! blocking.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass.
///
/// The returned `R` has a non-negative diagonal, so an orthonormal input is
/// reproduced exactly up to rounding. A column that is numerically dependent
/// on its predecessors gets a zero diagonal entry and a zero column in `Q`.
pub fn qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, k) = a.shape();
    let mut q = a.clone();
    let mut r = DMatrix::zeros(k, k);
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                r[(i, j)] += d;
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-d, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        r[(j, j)] = norm;
        if norm > 0.0 && norm.is_finite() {
            q.column_mut(j).scale_mut(1.0 / norm);
        } else {
            q.column_mut(j).fill(0.0);
        }
    }
    debug_assert_eq!(q.nrows(), m);
    (q, r)
}

/// Orthonormal basis of the column span of `a`.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    qr(a).0
}

/// Ratio between the smallest and largest diagonal entry of an upper
/// triangular factor; a cheap conditioning proxy for QR-renormalized frames.
pub fn diag_ratio(r: &DMatrix<f64>) -> f64 {
    let d = r.diagonal();
    let max = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = d.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if max == 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `q` inside `R^m`.
pub fn orthogonal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = q.shape();
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.clone_owned()).collect();
    let mut out = Vec::with_capacity(m - k);
    while out.len() < m - k {
        // Pick the coordinate axis with the largest residual.
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = 0.0;
        for axis in 0..m {
            let mut v = DVector::zeros(m);
            v[axis] = 1.0;
            for _pass in 0..2 {
                for b in &basis {
                    let d = b.dot(&v);
                    v.axpy(-d, b, 1.0);
                }
            }
            let n = v.norm();
            if n > best_norm {
                best_norm = n;
                best = Some(v / n);
            }
        }
        let v = best.expect("complement exists while rank < m");
        basis.push(v.clone());
        out.push(v);
    }
    if out.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Orthonormal basis (in the coordinates of `R^k`) of the complement of the
/// vector `g` inside `R^k`.
pub fn complement_of_vector(g: &DVector<f64>) -> DMatrix<f64> {
    let n = g.norm();
    let unit = DMatrix::from_column_slice(g.len(), 1, (g / n).as_slice());
    orthogonal_complement(&unit)
}

/// Principal angles (radians, ascending) between the column spans of two
/// matrices with orthonormal columns.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let c = a.transpose() * b;
    let svd = c.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    angles
}

/// Largest principal angle between two subspaces of equal dimension; zero
/// means the subspaces coincide.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.ncols(), b.ncols(), "subspace dimensions differ");
    // acos loses precision near 1; use the sine form through projections.
    let proj = b * (b.transpose() * a);
    let diff = a - proj;
    let s = diff.svd(false, false);
    s.singular_values.iter().fold(0.0f64, |m, v| m.max(*v)).min(1.0).asin()
}

/// Smallest principal angle between two subspaces.
pub fn smallest_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    principal_angles(a, b).first().copied().unwrap_or(std::f64::consts::FRAC_PI_2)
}

/// Distance of a unit vector from the span of orthonormal columns.
pub fn distance_from_span(q: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let proj = q * (q.transpose() * v);
    (v - proj).norm()
}

/// Spectral norm.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.len() == 1 {
        return a[(0, 0)].abs();
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Spectral norm of the explicit inverse, or `None` when singular.
pub fn inverse_norm(a: &DMatrix<f64>) -> Option<f64> {
    if a.len() == 1 {
        let v = a[(0, 0)].abs();
        return if v > 0.0 { Some(1.0 / v) } else { None };
    }
    a.clone().try_inverse().map(|inv| operator_norm(&inv))
}

/// A fixed, seeded, well-conditioned `m x k` frame used to seed subspace
/// iterations. Identical seeds give identical frames.
pub fn generic_frame(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
    orthonormalize(&a)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reproduces_input() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let (q, r) = qr(&a);
        assert!((&q * &r - &a).norm() < 1e-14);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
        assert_eq!(r[(1, 0)], 0.0);
    }

    #[test]
    fn orthonormal_input_is_fixed() {
        let q0 = generic_frame(4, 3, 7);
        let (q, r) = qr(&q0);
        assert!((q - &q0).norm() < 1e-14);
        assert!((r - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn complement_is_orthogonal() {
        let q = generic_frame(4, 1, 3);
        let c = orthogonal_complement(&q);
        assert_eq!(c.shape(), (4, 3));
        assert!((q.transpose() * &c).norm() < 1e-14);
        assert!((c.transpose() * &c - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn angles_between_coordinate_planes() {
        let e12 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let e3 = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        assert!((smallest_angle(&e12, &e3) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let rot = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((subspace_distance(&e12, &rot) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(subspace_distance(&e12, &e12) < 1e-15);
    }

    #[test]
    fn inverse_norm_of_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.25]);
        assert!((inverse_norm(&a).unwrap() - 4.0).abs() < 1e-14);
        assert!((operator_norm(&a) - 2.0).abs() < 1e-14);
    }
}
