//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// `g(a, b)` for a coefficient matrix `g`.
pub fn inner(g: &Matrix, a: &Vector, b: &Vector) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += g[(i, j)] * b[j];
        }
        acc += a[i] * row;
    }
    acc
}

pub fn norm(g: &Matrix, a: &Vector) -> f64 {
    inner(g, a, a).max(0.0).sqrt()
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(g: &Matrix) -> Result<Matrix> {
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular("metric is not positive definite"))
}

/// Lower Cholesky factor `L` with `g = L Lᵀ`.
pub fn cholesky_lower(g: &Matrix) -> Result<Matrix> {
    g.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::Singular("metric is not positive definite"))
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Smallest singular value of a (possibly rectangular) matrix.
pub fn sigma_min(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Gram–Schmidt in the `g` inner product, applied twice per vector.
///
/// Vectors whose residual falls below `skip * |seed|_g` are dropped.
pub fn gram_schmidt(g: &Matrix, seeds: &[Vector], skip: f64, limit: usize) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::with_capacity(limit);
    for seed in seeds {
        if out.len() == limit {
            break;
        }
        let seed_norm = norm(g, seed);
        if seed_norm == 0.0 {
            continue;
        }
        let mut r = seed.clone();
        for _ in 0..2 {
            for e in &out {
                let c = inner(g, e, &r);
                r.axpy(-c, e, 1.0);
            }
        }
        let rn = norm(g, &r);
        if rn < skip * seed_norm {
            continue;
        }
        out.push(r / rn);
    }
    out
}

/// Matrix whose columns are the given vectors.
pub fn columns(vs: &[Vector]) -> Matrix {
    let n = vs.first().map_or(0, |v| v.len());
    Matrix::from_fn(n, vs.len(), |i, j| vs[j][i])
}

/// Surface area of the unit sphere `S^{m-1}` embedded in `R^m`.
pub fn sphere_area(m: usize) -> f64 {
    use std::f64::consts::PI;
    match m {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 2.0) * sphere_area(m - 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_skips_parallel_seeds() {
        let g = Matrix::identity(2, 2);
        let seeds = vec![
            Vector::from_vec(vec![0.0, 2.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::from_vec(vec![1.0, 0.0]),
        ];
        let out = gram_schmidt(&g, &seeds, 1e-8, 2);
        assert_eq!(out.len(), 2);
        assert!((out[1][0] - 1.0).abs() < 1e-15);
    }
}
