use crate::data::RegressionDataset;
use crate::error::{param, Error, Result};
use crate::linalg::{spd_solve, sym_extreme_eigenvalues, weighted_gram, Vector};

use super::{finish, ConstrainedSolution, Objective};

/// `argmin βᵀWβ s.t. Xβ = y` with `W = diag(1/w0²)`; unweighted when `shape` is `None`.
///
/// `β = W⁻¹Xᵀ(XW⁻¹Xᵀ)⁻¹y`; the multiplier is `ν = (XW⁻¹Xᵀ)⁻¹y`.
pub fn min_l2(data: &RegressionDataset, shape: Option<&[f64]>) -> Result<ConstrainedSolution> {
    let d = data.d();
    let winv: Vec<f64> = match shape {
        Some(s) if s.len() != d => return param("shape length differs from the data dimension"),
        Some(s) if s.iter().any(|v| !(*v > 0.0)) => return param("shape entries must be positive"),
        Some(s) => s.iter().map(|v| v * v).collect(),
        None => vec![1.0; d],
    };
    let gram = weighted_gram(&data.design, &winv);
    let (lo, hi) = sym_extreme_eigenvalues(&gram);
    if !(lo > hi * 1e-13) {
        return Err(Error::Numerical("Gram matrix of the design is singular".into()));
    }
    let nu = spd_solve(&gram, &data.targets_vec())
        .map_err(|_| Error::Numerical("Gram matrix of the design is singular".into()))?;
    let xtn = data.design.tr_mul(&nu);
    let beta: Vec<f64> = (0..d).map(|i| winv[i] * xtn[i]).collect();
    finish(
        beta,
        Vector::as_slice(&nu).to_vec(),
        1,
        data,
        &Objective::L2 { shape: shape.map(|s| s.to_vec()) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 1.0]], vec![2.0]).unwrap();
        let s = min_l2(&data, None).unwrap();
        assert!((s.beta[0] - 1.0).abs() < 1e-15 && (s.beta[1] - 1.0).abs() < 1e-15);
        let s = min_l2(&data, Some(&[2.0, 1.0])).unwrap();
        assert!((s.beta[0] - 1.6).abs() < 1e-15 && (s.beta[1] - 0.4).abs() < 1e-15);
        assert!((s.dual[0] - 0.4).abs() < 1e-15);
        let u = min_l2(&data, Some(&[1.0, 1.0])).unwrap();
        assert_eq!(u.beta, min_l2(&data, None).unwrap().beta);
    }

    #[test]
    fn singular_gram_is_numerical_error() {
        let data = RegressionDataset::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).unwrap();
        assert!(matches!(min_l2(&data, None), Err(Error::Numerical(_))));
    }
}
