//! Fixed instances shared by the benchmarks.

use regime::data::generate_sparse_regression;
use regime::RegressionDataset;

/// Planted sparse regression at the sizes used in the sweeps.
pub fn sparse_instance(d: usize, n: usize) -> RegressionDataset {
    generate_sparse_regression(d, n, 5.min(d), 0.0, 17).expect("valid sizes")
}
