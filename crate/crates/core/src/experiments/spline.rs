//! Univariate two-layer ReLU fits compared to the linear spline through the
//! training points, and the two-dimensional teacher task.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rng::SeededRng;

use super::relu::{grad_distance, init_relu, train_from, GdConfig, GradDistanceForm, InitScheme, LayerScaling, ReluData, ReluSetup};

/// Piecewise-linear interpolant of `points` (sorted by x), held constant
/// outside the data range.
pub fn linear_spline(points: &[(f64, f64)], x: f64) -> f64 {
    let last = points.len() - 1;
    if x <= points[0].0 {
        return points[0].1;
    }
    if x >= points[last].0 {
        return points[last].1;
    }
    let i = points.partition_point(|p| p.0 <= x) - 1;
    let ((x0, y0), (x1, y1)) = (points[i], points[i + 1]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Training points used by the univariate runs.
pub fn default_univariate_points() -> Vec<(f64, f64)> {
    vec![(-1.0, 0.3), (-0.6, -0.4), (-0.2, 0.2), (0.25, 0.6), (0.6, -0.1), (1.0, 0.4)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineReport {
    pub alpha: f64,
    pub width: usize,
    pub scaling: LayerScaling,
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    pub linear_spline: Vec<f64>,
    /// RMS of `fitted − linear_spline` over the grid.
    pub rmse_to_linear_spline: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Long format: one row per grid point.
pub const SPLINE_HEADER: [&str; 8] =
    ["alpha", "width", "scaling", "x", "fitted", "linear_spline", "rmse_to_linear_spline", "converged"];

impl SplineReport {
    pub fn records(&self) -> Vec<Vec<String>> {
        use crate::data::fmt_f64;
        (0..self.grid.len())
            .map(|i| {
                vec![
                    fmt_f64(self.alpha),
                    self.width.to_string(),
                    self.scaling.name().to_string(),
                    fmt_f64(self.grid[i]),
                    fmt_f64(self.fitted[i]),
                    fmt_f64(self.linear_spline[i]),
                    fmt_f64(self.rmse_to_linear_spline),
                    self.converged.to_string(),
                ]
            })
            .collect()
    }
}

/// Number of grid points spanning the training range.
pub const SPLINE_GRID: usize = 201;

/// Train the unbiased two-layer network on `points` from `α·w₀`, `w₀` drawn
/// with first-layer `N(0, 1)` weights and biases and `N(0, 2/k)` output weights.
pub fn univariate_spline_report(
    points: &[(f64, f64)],
    alpha: f64,
    width: usize,
    scaling: LayerScaling,
    config: &GdConfig,
    seed: u64,
) -> Result<SplineReport> {
    if points.len() < 2 {
        return param("need at least two training points");
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return param("training inputs must be distinct");
    }
    let data = ReluData::new(pts.iter().map(|p| vec![p.0]).collect(), pts.iter().map(|p| p.1).collect())?;
    let setup = ReluSetup {
        input_dim: 1,
        depth: 2,
        width,
        alpha,
        scaling,
        init: InitScheme::Gaussian,
        unbiased_twin: true,
        seed,
    };
    let res = train_from(&init_relu(&setup)?, &data, config)?;
    let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
    let grid: Vec<f64> = (0..SPLINE_GRID).map(|i| lo + (hi - lo) * i as f64 / (SPLINE_GRID - 1) as f64).collect();
    let fitted: Vec<f64> = grid.iter().map(|&x| res.net.output(&[x])).collect();
    let spline: Vec<f64> = grid.iter().map(|&x| linear_spline(&pts, x)).collect();
    let rmse = rms_diff(&fitted, &spline);
    Ok(SplineReport {
        alpha,
        width,
        scaling,
        grid,
        fitted,
        linear_spline: spline,
        rmse_to_linear_spline: rmse,
        final_loss: res.final_loss,
        iterations: res.iterations,
        converged: res.converged,
    })
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Points on the unit circle labelled by a random one-hidden-layer teacher
/// with three ReLU units: `(train, test)`.
pub fn circle_teacher_task(n_train: usize, n_test: usize, seed: u64) -> Result<(ReluData, ReluData)> {
    let mut rng = SeededRng::derive(seed, 0);
    let w: Vec<[f64; 2]> = (0..3).map(|_| [rng.normal(), rng.normal()]).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
    let a: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
    let teacher = |x: &[f64]| -> f64 { (0..3).map(|j| a[j] * (w[j][0] * x[0] + w[j][1] * x[1] + b[j]).max(0.0)).sum() };
    let sample = |n: usize, rng: &mut SeededRng| -> Result<ReluData> {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let t = rng.uniform_range(0.0, 2.0 * std::f64::consts::PI);
                vec![t.cos(), t.sin()]
            })
            .collect();
        let ys = xs.iter().map(|x| teacher(x)).collect();
        ReluData::new(xs, ys)
    };
    let mut train_rng = SeededRng::derive(seed, 1);
    let mut test_rng = SeededRng::derive(seed, 2);
    Ok((sample(n_train, &mut train_rng)?, sample(n_test, &mut test_rng)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradDistanceRow {
    pub depth: usize,
    pub alpha: f64,
    /// `α^D`.
    pub alpha_scaled: f64,
    pub seed: u64,
    pub grad_distance: f64,
    pub grad_distance_per_example: f64,
    pub test_error: f64,
    pub train_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const GRAD_DISTANCE_HEADER: [&str; 10] = [
    "depth",
    "alpha",
    "alpha_scaled",
    "seed",
    "grad_distance",
    "grad_distance_per_example",
    "test_error",
    "train_loss",
    "iterations",
    "converged",
];

impl GradDistanceRow {
    pub fn record(&self) -> Vec<String> {
        use crate::data::fmt_f64;
        vec![
            self.depth.to_string(),
            fmt_f64(self.alpha),
            fmt_f64(self.alpha_scaled),
            self.seed.to_string(),
            fmt_f64(self.grad_distance),
            fmt_f64(self.grad_distance_per_example),
            fmt_f64(self.test_error),
            fmt_f64(self.train_loss),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradDistanceSpec {
    pub depths: Vec<usize>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub width: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub unbiased_twin: bool,
    pub config: GdConfig,
}

impl Default for GradDistanceSpec {
    fn default() -> Self {
        Self {
            depths: vec![2],
            alphas: vec![0.25, 1.0, 4.0],
            seeds: vec![0, 1, 2],
            width: 30,
            n_train: 10,
            n_test: 500,
            unbiased_twin: true,
            config: GdConfig::default(),
        }
    }
}

/// Teacher-task runs in `(depth, alpha, seed)` order; each seed fixes both
/// the task and the student's `w₀`, shared across α.
pub fn grad_distance_sweep(spec: &GradDistanceSpec) -> Result<Vec<GradDistanceRow>> {
    if spec.depths.is_empty() || spec.alphas.is_empty() || spec.seeds.is_empty() {
        return param("grad-distance sweep grids must be nonempty");
    }
    let cells: Vec<(usize, f64, u64)> = spec
        .depths
        .iter()
        .flat_map(|&d| spec.alphas.iter().flat_map(move |&a| spec.seeds.iter().map(move |&s| (d, a, s))))
        .collect();
    cells
        .par_iter()
        .map(|&(depth, alpha, seed)| {
            let (train, test) = circle_teacher_task(spec.n_train, spec.n_test, seed)?;
            let setup = ReluSetup {
                input_dim: 2,
                depth,
                width: spec.width,
                alpha,
                scaling: LayerScaling::Standard,
                init: InitScheme::UniformHe,
                unbiased_twin: spec.unbiased_twin,
                seed: SeededRng::derive(seed, 3).next_u64(),
            };
            let res = train_from(&init_relu(&setup)?, &train, &spec.config)?;
            Ok(GradDistanceRow {
                depth,
                alpha,
                alpha_scaled: alpha.powi(depth as i32),
                seed,
                grad_distance: grad_distance(&res.initial, &res.net, &train.inputs, GradDistanceForm::Gram)?,
                grad_distance_per_example: grad_distance(&res.initial, &res.net, &train.inputs, GradDistanceForm::PerExample)?,
                test_error: test.mse(&res.net),
                train_loss: res.final_loss,
                iterations: res.iterations,
                converged: res.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_interpolates() {
        let pts = default_univariate_points();
        for &(x, y) in &pts {
            assert_eq!(linear_spline(&pts, x), y);
        }
        assert!((linear_spline(&pts, -0.8) - (-0.05)).abs() < 1e-15);
        assert_eq!(linear_spline(&pts, -5.0), 0.3);
    }

    #[test]
    fn teacher_task_lies_on_the_circle() {
        let (train, test) = circle_teacher_task(10, 20, 4).unwrap();
        assert_eq!((train.len(), test.len()), (10, 20));
        for x in train.inputs.iter().chain(&test.inputs) {
            assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-15);
        }
        let (again, _) = circle_teacher_task(10, 20, 4).unwrap();
        assert_eq!(again, train);
    }

    #[test]
    fn small_width_report_fits_points() {
        let cfg = GdConfig { loss_tol: 1e-7, ..GdConfig::default() };
        let r = univariate_spline_report(&default_univariate_points(), 1.0, 40, LayerScaling::Standard, &cfg, 1).unwrap();
        assert!(r.converged);
        assert_eq!(r.grid.len(), SPLINE_GRID);
        assert!(r.rmse_to_linear_spline.is_finite());
    }
}
