//! Reference solutions of `min Φ(β) s.t. Xβ = y` for the penalties the flows
//! are compared against.

mod basis_pursuit;
mod dual_newton;
mod least_norm;

pub use basis_pursuit::{min_l1, AdmmOptions};
pub use dual_newton::{min_q_depth2, min_q_depth_d};
pub use least_norm::min_l2;

use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::error::Result;
use crate::linalg::{l2_norm, mat_t_vec};
use crate::model::check_scale;
use crate::regularizers::{asinh, h_d_inverse};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedSolution {
    pub beta: Vec<f64>,
    /// KKT multiplier ν with `∇Φ(β) = Xᵀν`.
    pub dual: Vec<f64>,
    pub kkt_residual: f64,
    pub feasibility: f64,
    pub iterations: usize,
    /// ℓ1 only: the dual certificate does not single out this minimizer.
    #[serde(default)]
    pub non_unique: bool,
}

/// The penalty a solution claims to minimize.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    Q2 { alpha: f64, shape: Vec<f64> },
    QD { alpha: f64, depth: u32 },
    L1,
    L2 { shape: Option<Vec<f64>> },
}

/// Recompute `(kkt_residual, feasibility)` from `β` and `ν` alone.
///
/// For ℓ1 the residual measures the subgradient condition: `(Xᵀν)ᵢ = sign βᵢ`
/// on the support and `|Xᵀν|ᵢ ≤ 1` off it. `support_tol` decides membership.
pub fn verify_kkt(sol: &ConstrainedSolution, data: &RegressionDataset, objective: &Objective, support_tol: f64) -> Result<(f64, f64)> {
    let feas = l2_norm(&data.residual(&sol.beta)?);
    let xtn = mat_t_vec(&data.design, &sol.dual);
    let d = data.d();
    let mut worst: f64 = 0.0;
    match objective {
        Objective::Q2 { alpha, shape } => {
            check_scale(*alpha, shape)?;
            for i in 0..d {
                let g = asinh(sol.beta[i] / (2.0 * alpha * alpha * shape[i] * shape[i]));
                worst = worst.max((g - xtn[i]).abs());
            }
        }
        Objective::QD { alpha, depth } => {
            let c = alpha.powi(*depth as i32);
            for i in 0..d {
                let g = h_d_inverse(sol.beta[i] / c, *depth, 1e-15)?.z;
                worst = worst.max((g - xtn[i]).abs());
            }
        }
        Objective::L1 => {
            for i in 0..d {
                let b = sol.beta[i];
                let v = if b.abs() > support_tol {
                    (xtn[i] - b.signum()).abs()
                } else {
                    (xtn[i].abs() - 1.0).max(0.0)
                };
                worst = worst.max(v);
            }
        }
        Objective::L2 { shape } => {
            for i in 0..d {
                let w = shape.as_ref().map_or(1.0, |s| 1.0 / (s[i] * s[i]));
                worst = worst.max((w * sol.beta[i] - xtn[i]).abs());
            }
        }
    }
    Ok((worst, feas))
}

pub(crate) fn finish(beta: Vec<f64>, dual: Vec<f64>, iterations: usize, data: &RegressionDataset, objective: &Objective) -> Result<ConstrainedSolution> {
    let mut sol = ConstrainedSolution { beta, dual, kkt_residual: 0.0, feasibility: 0.0, iterations, non_unique: false };
    let (kkt, feas) = verify_kkt(&sol, data, objective, 0.0)?;
    sol.kkt_residual = kkt;
    sol.feasibility = feas;
    Ok(sol)
}

#[cfg(test)]
pub(crate) fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / l2_norm(b).max(f64::MIN_POSITIVE)
}
