//! Homogeneous linear models: the depth-D diagonal network and the u∘v parametrization.

use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::error::{param, Result};

/// Anything that induces a linear predictor β on ℝᵈ.
pub trait LinearPredictor {
    fn predictor(&self) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalNetwork {
    pub depth: u32,
    pub alpha: f64,
    pub shape: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
}

impl DiagonalNetwork {
    /// Unbiased initialization `w₊ = w₋ = α·w0`.
    pub fn new(depth: u32, alpha: f64, shape: Vec<f64>) -> Result<Self> {
        if depth < 2 {
            return param(format!("depth must be at least 2, got {depth}"));
        }
        check_scale(alpha, &shape)?;
        let w: Vec<f64> = shape.iter().map(|s| alpha * s).collect();
        Ok(Self { depth, alpha, shape, w_plus: w.clone(), w_minus: w })
    }

    pub fn with_weights(depth: u32, alpha: f64, shape: Vec<f64>, w_plus: Vec<f64>, w_minus: Vec<f64>) -> Result<Self> {
        if depth < 2 {
            return param(format!("depth must be at least 2, got {depth}"));
        }
        if w_plus.len() != shape.len() || w_minus.len() != shape.len() {
            return param("weight vectors and shape differ in length");
        }
        Ok(Self { depth, alpha, shape, w_plus, w_minus })
    }

    pub fn dim(&self) -> usize {
        self.w_plus.len()
    }

    /// Multiply every weight by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.w_plus.iter_mut().for_each(|w| *w *= c);
        out.w_minus.iter_mut().for_each(|w| *w *= c);
        out
    }
}

impl LinearPredictor for DiagonalNetwork {
    fn predictor(&self) -> Vec<f64> {
        let d = self.depth as i32;
        self.w_plus.iter().zip(&self.w_minus).map(|(p, m)| p.powi(d) - m.powi(d)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UVNetwork {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl UVNetwork {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return param("u and v differ in length");
        }
        Ok(Self { u, v })
    }
}

impl LinearPredictor for UVNetwork {
    fn predictor(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(a, b)| a * b).collect()
    }
}

pub(crate) fn check_scale(alpha: f64, shape: &[f64]) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return param(format!("alpha must be positive and finite, got {alpha}"));
    }
    if shape.is_empty() {
        return param("shape is empty");
    }
    if let Some(i) = shape.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return param(format!("shape entry {i} is not strictly positive"));
    }
    Ok(())
}

/// Sum of squared residuals, with no 1/N factor.
pub fn loss(model: &impl LinearPredictor, data: &RegressionDataset) -> Result<f64> {
    let r = data.residual(&model.predictor())?;
    Ok(r.iter().map(|v| v * v).sum())
}
