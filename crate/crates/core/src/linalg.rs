//! Dense linear-algebra helpers shared by the solvers and the flows.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major). Design matrices are
//! stored N×d with one measurement per row.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// `X · diag(weights) · Xᵀ`.
pub fn weighted_gram(x: &Matrix, weights: &[f64]) -> Matrix {
    let (n, d) = x.shape();
    debug_assert_eq!(weights.len(), d);
    let mut g = Matrix::zeros(n, n);
    for i in 0..d {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let col = x.column(i);
        for b in 0..n {
            let cb = w * col[b];
            if cb == 0.0 {
                continue;
            }
            for a in b..n {
                g[(a, b)] += col[a] * cb;
            }
        }
    }
    for b in 0..n {
        for a in b + 1..n {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

/// Whether `x` (N×d) has full row rank, judged by the Gram matrix spectrum.
pub fn has_full_row_rank(x: &Matrix) -> bool {
    let (n, d) = x.shape();
    if n > d {
        return false;
    }
    let gram = x * x.transpose();
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > max * 1e-12
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen_sorted(a: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(a.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Extreme eigenvalues (min, max) of a symmetric matrix.
pub fn sym_extreme_eigenvalues(a: &Matrix) -> (f64, f64) {
    let (values, _) = sym_eigen_sorted(a);
    (values[0], values[values.len() - 1])
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(a: &Matrix) -> f64 {
    let (lo, hi) = sym_extreme_eigenvalues(a);
    lo.abs().max(hi.abs())
}

/// Singular values (descending) by one-sided Jacobi rotations.
///
/// Columns of a working copy are orthogonalized pairwise until every pair
/// has relative inner product below `1e-15`; the column norms are then the
/// singular values. Accurate to high relative precision, and intended for
/// the small matrices used here (side ≤ a few hundred).
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = m.shape();
    // Work on the orientation with fewer columns.
    let mut a = if cols > rows { m.transpose() } else { m.clone() };
    let n = a.ncols();
    let tol = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..a.nrows() {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `X v` for an N×d design and a length-d vector.
pub fn mat_vec(x: &Matrix, v: &[f64]) -> Vector {
    x * Vector::from_column_slice(v)
}

/// `Xᵀ r` for an N×d design and a length-N vector.
pub fn mat_t_vec(x: &Matrix, r: &[f64]) -> Vector {
    x.tr_mul(&Vector::from_column_slice(r))
}

/// Warm-started power iteration for a symmetric PSD operator given by `apply`.
///
/// `v` carries the iterate between calls. Returns `‖Av‖` after `sweeps`
/// normalized applications, a slight underestimate of the top eigenvalue.
pub fn power_iteration<A>(v: &mut Vec<f64>, sweeps: usize, mut apply: A) -> f64
where
    A: FnMut(&[f64], &mut [f64]),
{
    let n = v.len();
    let reset = |v: &mut Vec<f64>| v.iter_mut().enumerate().for_each(|(i, x)| *x = 1.0 + 0.1 * i as f64);
    let mut w = vec![0.0; n];
    let mut lam = 0.0;
    for _ in 0..sweeps {
        let nv = l2_norm(v);
        if !(nv > 0.0 && nv.is_finite()) {
            reset(v);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        apply(v, &mut w);
        lam = l2_norm(&w);
        std::mem::swap(v, &mut w);
    }
    lam
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let a = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (_, top) = sym_extreme_eigenvalues(&a);
        let mut v = vec![0.0; 3];
        let lam = power_iteration(&mut v, 200, |x, y| y.copy_from_slice((&a * Vector::from_column_slice(x)).as_slice()));
        assert!((lam - top).abs() < 1e-10 * top);
    }

    #[test]
    fn jacobi_matches_eigen_route() {
        let mut rng = SeededRng::new(11);
        for &(r, c) in &[(5, 5), (4, 7), (8, 3)] {
            let m = Matrix::from_fn(r, c, |_, _| rng.normal());
            let sv = jacobi_singular_values(&m);
            let (ev, _) = sym_eigen_sorted(&(m.transpose() * &m));
            let mut from_eig: Vec<f64> = ev.iter().map(|x| x.max(0.0).sqrt()).collect();
            from_eig.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in sv.iter().zip(&from_eig) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn weighted_gram_matches_dense_product() {
        let mut rng = SeededRng::new(5);
        let x = Matrix::from_fn(3, 6, |_, _| rng.normal());
        let w: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
        let dense = &x * Matrix::from_diagonal(&Vector::from_vec(w.clone())) * x.transpose();
        assert!((weighted_gram(&x, &w) - dense).norm() < 1e-12);
    }

    #[test]
    fn rank_detection() {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(!has_full_row_rank(&x));
        let x = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(has_full_row_rank(&x));
    }
}
