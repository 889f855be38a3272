//! Asymmetric matrix factorization `M = UVᵀ` trained on linear measurements
//! `yₙ = ⟨Xₙ, M⟩`, its lifted symmetric form and the tangent-kernel model.

mod completion;
mod flow;
mod kernel;
mod rich;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::linalg::{jacobi_singular_values, Matrix};
use crate::rng::SeededRng;

pub use completion::{
    completion_phase_cell, completion_phase_grid, CompletionCell, CompletionConfig, StepRule, COMPLETION_HEADER,
};
pub use flow::{
    diagonal_closed_form_gap, factorization_gradient, integrate_factorization_flow, integrate_lifted_flow,
    FactorizationMode, FactorizationResult,
};
pub use kernel::{
    integrate_tangent_kernel_flow, kernel_regime_deviation_report, closed_form_bounds, DeviationReport,
    KernelRegimeBoundInputs, TangentKernelFlow, TangentKernelResult,
};
pub use rich::solve_commutative_rich;

/// Largest `‖XₘXₙ − XₙXₘ‖_F` accepted for a commuting set.
pub const COMMUTE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementKind {
    General,
    Diagonal,
    /// Symmetric and pairwise commuting.
    Commuting,
}

/// The measurement matrices `X₁, …, X_N`, all `d×d`.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    d: usize,
    matrices: Vec<Matrix>,
    kind: MeasurementKind,
    completion_mask: Option<Vec<(usize, usize)>>,
}

impl MeasurementSet {
    pub fn new(matrices: Vec<Matrix>, kind: MeasurementKind) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return param("at least one measurement is required");
        };
        let d = first.nrows();
        if d == 0 {
            return param("measurements must be non-empty");
        }
        for (n, x) in matrices.iter().enumerate() {
            if x.shape() != (d, d) {
                return param(format!("measurement {n} has shape {:?}, expected ({d}, {d})", x.shape()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return param(format!("measurement {n} has non-finite entries"));
            }
        }
        match kind {
            MeasurementKind::General => {}
            MeasurementKind::Diagonal => {
                for (n, x) in matrices.iter().enumerate() {
                    let off = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).any(|(i, j)| i != j && x[(i, j)] != 0.0);
                    if off {
                        return param(format!("measurement {n} is not diagonal"));
                    }
                }
            }
            MeasurementKind::Commuting => {
                for (n, x) in matrices.iter().enumerate() {
                    if (x - x.transpose()).norm() > COMMUTE_TOL {
                        return param(format!("commuting measurements must be symmetric; {n} is not"));
                    }
                }
                for (m, a) in matrices.iter().enumerate() {
                    for (n, b) in matrices.iter().enumerate().skip(m + 1) {
                        let c = (a * b - b * a).norm();
                        if c > COMMUTE_TOL {
                            return param(format!("measurements {m} and {n} do not commute (‖[Xₘ, Xₙ]‖_F = {c:e})"));
                        }
                    }
                }
            }
        }
        Ok(Self { d, matrices, kind, completion_mask: None })
    }

    /// Entry indicators `e_i e_jᵀ` for each observed `(i, j)`.
    pub fn entries(d: usize, mask: Vec<(usize, usize)>) -> Result<Self> {
        if mask.is_empty() {
            return param("at least one observed entry is required");
        }
        if let Some(&(i, j)) = mask.iter().find(|&&(i, j)| i >= d || j >= d) {
            return param(format!("entry ({i}, {j}) is outside a {d}×{d} matrix"));
        }
        let mut seen = mask.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != mask.len() {
            return param("observed entries must be distinct");
        }
        let matrices = mask
            .iter()
            .map(|&(i, j)| {
                let mut x = Matrix::zeros(d, d);
                x[(i, j)] = 1.0;
                x
            })
            .collect();
        let kind = if mask.iter().all(|(i, j)| i == j) { MeasurementKind::Diagonal } else { MeasurementKind::General };
        Ok(Self { d, matrices, kind, completion_mask: Some(mask) })
    }

    /// Diagonal measurements whose n-th diagonal is row n of `rows` (N×d).
    pub fn diagonal(rows: &Matrix) -> Result<Self> {
        if rows.ncols() == 0 {
            return param("measurements must be non-empty");
        }
        let matrices = rows.row_iter().map(|r| Matrix::from_diagonal(&r.transpose())).collect();
        Self::new(matrices, MeasurementKind::Diagonal)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn kind(&self) -> MeasurementKind {
        self.kind
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn completion_mask(&self) -> Option<&[(usize, usize)]> {
        self.completion_mask.as_deref()
    }

    /// `[⟨Xₙ, M⟩]ₙ`.
    pub fn measure(&self, m: &Matrix) -> Vec<f64> {
        match &self.completion_mask {
            Some(mask) => mask.iter().map(|&(i, j)| m[(i, j)]).collect(),
            None => self.matrices.iter().map(|x| x.dot(m)).collect(),
        }
    }

    /// `[⟨Xₙ, UVᵀ⟩]ₙ` without forming the product for entry masks.
    pub fn measure_product(&self, u: &Matrix, v: &Matrix) -> Vec<f64> {
        match &self.completion_mask {
            Some(mask) => mask.iter().map(|&(i, j)| u.row(i).dot(&v.row(j))).collect(),
            None => self.measure(&(u * v.transpose())),
        }
    }

    /// `Σₙ cₙ Xₙ`.
    pub fn combine(&self, c: &[f64]) -> Matrix {
        let mut g = Matrix::zeros(self.d, self.d);
        match &self.completion_mask {
            Some(mask) => {
                for (&(i, j), &cn) in mask.iter().zip(c) {
                    g[(i, j)] += cn;
                }
            }
            None => {
                for (x, &cn) in self.matrices.iter().zip(c) {
                    if cn != 0.0 {
                        g += x * cn;
                    }
                }
            }
        }
        g
    }

    /// `[⟨Xₙ, Xₘ⟩]`.
    pub fn gram(&self) -> Matrix {
        let n = self.len();
        Matrix::from_fn(n, n, |a, b| self.matrices[a].dot(&self.matrices[b]))
    }

    /// Gram of the lifted measurements `X̄ₙ = ½[0, Xₙ; Xₙᵀ, 0]`, equal to `½·gram()`.
    pub fn lifted_gram(&self) -> Matrix {
        self.gram() * 0.5
    }

    /// `X̄ₙ`, of size 2d×2d.
    pub fn lifted(&self, n: usize) -> Matrix {
        let d = self.d;
        let mut out = Matrix::zeros(2 * d, 2 * d);
        let x = &self.matrices[n] * 0.5;
        out.view_mut((0, d), (d, d)).copy_from(&x);
        out.view_mut((d, 0), (d, d)).copy_from(&x.transpose());
        out
    }

    /// N×d matrix whose rows are the diagonals of the `Xₙ`.
    pub fn diagonal_design(&self) -> Matrix {
        Matrix::from_fn(self.len(), self.d, |n, i| self.matrices[n][(i, i)])
    }
}

/// `M = UVᵀ` with `U, V` of size d×k.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationModel {
    pub u: Matrix,
    pub v: Matrix,
}

impl FactorizationModel {
    pub fn new(u: Matrix, v: Matrix) -> Result<Self> {
        if u.shape() != v.shape() {
            return param(format!("U is {:?} but V is {:?}", u.shape(), v.shape()));
        }
        if u.nrows() == 0 || u.ncols() == 0 {
            return param("factors must be non-empty");
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return param("factors must be finite");
        }
        Ok(Self { u, v })
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    pub fn product(&self) -> Matrix {
        &self.u * self.v.transpose()
    }

    /// `W = [U; V]`, of size 2d×k.
    pub fn stacked(&self) -> Matrix {
        let (d, k) = self.u.shape();
        let mut w = Matrix::zeros(2 * d, k);
        w.view_mut((0, 0), (d, k)).copy_from(&self.u);
        w.view_mut((d, 0), (d, k)).copy_from(&self.v);
        w
    }

    pub fn from_stacked(w: &Matrix) -> Result<Self> {
        if w.nrows() % 2 != 0 {
            return param("stacked factors need an even number of rows");
        }
        let d = w.nrows() / 2;
        Self::new(w.rows(0, d).into_owned(), w.rows(d, d).into_owned())
    }

    /// `M̄ = WWᵀ = [UUᵀ, UVᵀ; VUᵀ, VVᵀ]`.
    pub fn lifted(&self) -> Matrix {
        let w = self.stacked();
        &w * w.transpose()
    }
}

/// `U = [√2μI, 0]`, `V = [0, √2μI]`: width 2d, `M̄ = 2μ²I`, `M = 0`.
pub fn lifted_identity_init(d: usize, mu: f64) -> Result<FactorizationModel> {
    if d == 0 {
        return param("dimension must be positive");
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return param(format!("mu must be positive and finite, got {mu}"));
    }
    let s = std::f64::consts::SQRT_2 * mu;
    let mut u = Matrix::zeros(d, 2 * d);
    let mut v = Matrix::zeros(d, 2 * d);
    for i in 0..d {
        u[(i, i)] = s;
        v[(i, d + i)] = s;
    }
    Ok(FactorizationModel { u, v })
}

#[derive(Clone, Debug)]
pub struct GaussianInit {
    pub model: FactorizationModel,
    /// `(1/d)‖UVᵀ‖_F`.
    pub sigma: f64,
    /// `α²k`, the scale of the lifted matrix.
    pub lifted_scale: f64,
}

/// i.i.d. `N(0, α²)` entries; U is drawn row by row, then V.
pub fn gaussian_init(d: usize, k: usize, alpha: f64, seed: u64) -> Result<GaussianInit> {
    if d == 0 || k == 0 {
        return param("dimension and width must be positive");
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return param(format!("alpha must be non-negative and finite, got {alpha}"));
    }
    let mut rng = SeededRng::new(seed);
    let mut draw = || Matrix::from_row_iterator(d, k, (0..d * k).map(|_| alpha * rng.normal()).collect::<Vec<_>>());
    let u = draw();
    let v = draw();
    let model = FactorizationModel { u, v };
    let sigma = model.product().norm() / d as f64;
    Ok(GaussianInit { model, sigma, lifted_scale: alpha * alpha * k as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixNorms {
    pub nuclear: f64,
    pub frobenius: f64,
    /// Number of singular values above `1e−8·σ₁`.
    pub rank_eps: usize,
}

pub fn matrix_norms(m: &Matrix) -> Result<MatrixNorms> {
    if m.iter().any(|v| !v.is_finite()) {
        return param("matrix has non-finite entries");
    }
    let s = jacobi_singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    Ok(MatrixNorms {
        nuclear: s.iter().sum(),
        frobenius: m.norm(),
        rank_eps: s.iter().filter(|&&x| top > 0.0 && x > 1e-8 * top).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen_sorted;

    #[test]
    fn lifted_identity_structure() {
        let m = lifted_identity_init(3, 1.0).unwrap();
        assert_eq!(m.width(), 6);
        assert!((m.lifted() - Matrix::identity(6, 6) * 2.0).amax() <= 4.0 * f64::EPSILON);
        assert_eq!(m.product(), Matrix::zeros(3, 3));
        let m = lifted_identity_init(4, 0.7).unwrap();
        let uu = &m.u * m.u.transpose();
        assert!((uu - Matrix::identity(4, 4) * (2.0 * 0.49)).norm() < 1e-15);
        assert!(lifted_identity_init(2, 0.0).is_err());
    }

    #[test]
    fn gaussian_init_scales() {
        let (d, k, alpha) = (10, 100, 0.1);
        let mut sigma = 0.0;
        let mut block = 0.0;
        for seed in 0..50 {
            let g = gaussian_init(d, k, alpha, seed).unwrap();
            sigma += g.sigma / 50.0;
            // Diagonal entries of UUᵀ; (1/d)‖UUᵀ‖_F is smaller by about √d.
            block += (&g.model.u * g.model.u.transpose()).trace() / d as f64 / 50.0;
            assert_eq!(g.lifted_scale, alpha * alpha * k as f64);
        }
        let a2 = alpha * alpha;
        assert!((sigma / (a2 * (k as f64).sqrt()) - 1.0).abs() < 0.2, "{sigma}");
        assert!((block / (a2 * k as f64) - 1.0).abs() < 0.2, "{block}");
        let z = gaussian_init(3, 4, 0.0, 1).unwrap();
        assert!(z.model.u.iter().chain(z.model.v.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn measurement_validation() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        assert!(MeasurementSet::new(vec![a.clone()], MeasurementKind::Diagonal).is_err());
        assert!(MeasurementSet::new(vec![a.clone()], MeasurementKind::Commuting).is_err());
        let sym = &a + a.transpose();
        let diag = Matrix::from_diagonal(&crate::linalg::Vector::from_vec(vec![1.0, 2.0]));
        assert!(MeasurementSet::new(vec![sym.clone(), diag], MeasurementKind::Commuting).is_err());
        assert!(MeasurementSet::new(vec![sym.clone(), Matrix::identity(2, 2)], MeasurementKind::Commuting).is_ok());
        assert!(MeasurementSet::entries(2, vec![(0, 0), (0, 0)]).is_err());
        assert!(MeasurementSet::entries(2, vec![(2, 0)]).is_err());
        assert_eq!(MeasurementSet::entries(3, vec![(0, 0), (2, 2)]).unwrap().kind(), MeasurementKind::Diagonal);
    }

    #[test]
    fn entry_fast_paths_match_dense() {
        let mut rng = SeededRng::new(4);
        let (d, k) = (5, 3);
        let mask = vec![(0, 1), (4, 4), (2, 0), (3, 1)];
        let fast = MeasurementSet::entries(d, mask.clone()).unwrap();
        let dense = MeasurementSet::new(fast.matrices().to_vec(), MeasurementKind::General).unwrap();
        let u = Matrix::from_fn(d, k, |_, _| rng.normal());
        let v = Matrix::from_fn(d, k, |_, _| rng.normal());
        let a = fast.measure_product(&u, &v);
        let b = dense.measure_product(&u, &v);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
        let c = [0.5, -1.0, 2.0, 0.25];
        assert!((fast.combine(&c) - dense.combine(&c)).norm() < 1e-15);
        assert!((fast.lifted_gram() - Matrix::identity(4, 4) * 0.5).norm() < 1e-15);
        let lifted = fast.lifted(0);
        let w = FactorizationModel { u: u.clone(), v: v.clone() };
        assert!((lifted.dot(&w.lifted()) - a[0]).abs() < 1e-13);
    }

    #[test]
    fn norms_examples() {
        let n = matrix_norms(&Matrix::identity(3, 3)).unwrap();
        assert!((n.nuclear - 3.0).abs() < 1e-14 && (n.frobenius - 3f64.sqrt()).abs() < 1e-14 && n.rank_eps == 3);
        let u = crate::linalg::Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = crate::linalg::Vector::from_vec(vec![3.0, 0.0, 1.0]);
        let r1 = &u * v.transpose();
        let n = matrix_norms(&r1).unwrap();
        assert!((n.nuclear - u.norm() * v.norm()).abs() < 1e-13);
        assert_eq!(n.rank_eps, 1);
    }

    #[test]
    fn nuclear_norm_matches_eigen_route() {
        let mut rng = SeededRng::new(21);
        for _ in 0..5 {
            let m = Matrix::from_fn(5, 5, |_, _| rng.normal());
            let (vals, _) = sym_eigen_sorted(&(m.transpose() * &m));
            let eig: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
            assert!((matrix_norms(&m).unwrap().nuclear - eig).abs() < 1e-10);
        }
    }
}
