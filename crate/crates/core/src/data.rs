//! Regression problem instances and their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::SeededRng;

/// A linear regression problem `y = X β* + noise` with measurement vectors as rows.
#[derive(Clone, Debug)]
pub struct RegressionDataset {
    pub design: Matrix,
    pub targets: Vec<f64>,
    pub planted: Option<Vec<f64>>,
    pub noise_std: f64,
}

/// JSON sidecar written next to a dataset CSV.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub seed: Option<u64>,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub r_star: Option<usize>,
    pub noise_std: f64,
    pub planted: Option<Vec<f64>>,
}

impl RegressionDataset {
    pub fn new(design: Matrix, targets: Vec<f64>, planted: Option<Vec<f64>>, noise_std: f64) -> Result<Self> {
        let (n, d) = design.shape();
        if n == 0 || d == 0 {
            return param("design must have at least one row and one column");
        }
        if targets.len() != n {
            return param(format!("expected {n} targets, got {}", targets.len()));
        }
        if let Some(p) = &planted {
            if p.len() != d {
                return param(format!("planted vector has length {}, expected {d}", p.len()));
            }
        }
        if !(noise_std >= 0.0) {
            return param("noise_std must be nonnegative");
        }
        for i in 0..n {
            if design.row(i).iter().all(|&x| x == 0.0) {
                return param(format!("design row {i} is all zeros"));
            }
        }
        Ok(Self { design, targets, planted, noise_std })
    }

    /// Noiseless instance from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return param("no rows");
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return param("ragged design rows");
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(Matrix::from_row_slice(rows.len(), d, &flat), targets, None, 0.0)
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn targets_vec(&self) -> Vector {
        Vector::from_column_slice(&self.targets)
    }

    /// `Xβ − y`.
    pub fn residual(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.d() {
            return param(format!("predictor has length {}, expected {}", beta.len(), self.d()));
        }
        let xb = &self.design * Vector::from_column_slice(beta);
        Ok(xb.iter().zip(&self.targets).map(|(a, b)| a - b).collect())
    }

    /// Keep the first `n` measurements.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return param(format!("cannot keep {n} of {} rows", self.n()));
        }
        Self::new(
            self.design.rows(0, n).into_owned(),
            self.targets[..n].to_vec(),
            self.planted.clone(),
            self.noise_std,
        )
    }

    pub fn manifest(&self, seed: Option<u64>, r_star: Option<usize>) -> DatasetManifest {
        DatasetManifest {
            seed,
            d: self.d(),
            n: self.n(),
            r_star,
            noise_std: self.noise_std,
            planted: self.planted.clone(),
        }
    }

    /// Write `x_1,…,x_d,y` rows to `path` and the manifest to its sidecar.
    pub fn write(&self, path: &Path, manifest: &DatasetManifest) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.d()).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.design.row(i).iter().map(|v| fmt_f64(*v)).collect();
            rec.push(fmt_f64(self.targets[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        fs::write(sidecar_path(path), serde_json::to_string_pretty(manifest)?)?;
        Ok(())
    }

    /// Read a dataset CSV; the sidecar is optional.
    pub fn read(path: &Path) -> Result<(Self, Option<DatasetManifest>)> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let d = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
            Error::Parameter(format!("{}: need at least one feature column and y", path.display()))
        })?;
        if header.get(d) != Some("y") {
            return param(format!("{}: last column must be `y`", path.display()));
        }
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
            targets.push(vals[d]);
            rows.extend_from_slice(&vals[..d]);
        }
        let n = targets.len();
        let design = Matrix::from_row_slice(n, d, &rows);
        let sidecar = sidecar_path(path);
        let manifest: Option<DatasetManifest> = if sidecar.exists() {
            Some(serde_json::from_str(&fs::read_to_string(&sidecar)?)?)
        } else {
            None
        };
        let (planted, noise) = match &manifest {
            Some(m) => (m.planted.clone(), m.noise_std),
            None => (None, 0.0),
        };
        Ok((Self::new(design, targets, planted, noise)?, manifest))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write a CSV table through a temporary sibling and rename it into place.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let tmp = tmp_sibling(path);
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Atomic counterpart of `fs::write`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Seventeen significant digits: round-trips every double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Gaussian design with a planted `r_star`-sparse predictor on the leading coordinates.
pub fn generate_sparse_regression(
    d: usize,
    n: usize,
    r_star: usize,
    noise_std: f64,
    seed: u64,
) -> Result<RegressionDataset> {
    if d == 0 || n == 0 {
        return param("d and N must be positive");
    }
    if r_star == 0 || r_star > d {
        return param(format!("r_star must lie in 1..={d}, got {r_star}"));
    }
    if !(noise_std >= 0.0) {
        return param("noise_std must be nonnegative");
    }
    let mut rng = SeededRng::new(seed);
    let mut planted = vec![0.0; d];
    let v = 1.0 / (r_star as f64).sqrt();
    for p in planted.iter_mut().take(r_star) {
        *p = v;
    }
    let mut rows = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut y = 0.0;
        for j in 0..d {
            let x = rng.normal();
            y += x * planted[j];
            rows.push(x);
        }
        targets.push(y);
    }
    if noise_std > 0.0 {
        for y in targets.iter_mut() {
            *y += noise_std * rng.normal();
        }
    }
    RegressionDataset::new(Matrix::from_row_slice(n, d, &rows), targets, Some(planted), noise_std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_values() {
        let ds = generate_sparse_regression(4, 2, 4, 0.0, 7).unwrap();
        assert_eq!(ds.planted.as_deref(), Some(&[0.5, 0.5, 0.5, 0.5][..]));
        let r = ds.residual(ds.planted.as_ref().unwrap()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn rejects_empty_support() {
        assert!(matches!(generate_sparse_regression(3, 1, 0, 0.0, 1), Err(Error::Parameter(_))));
        assert!(generate_sparse_regression(3, 1, 4, 0.0, 1).is_err());
    }

    #[test]
    fn target_variance_over_seeds() {
        // Var(y) = ‖β*‖² + σ² = 1.01 for unit-norm β* and σ = 0.1.
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0.0;
        for seed in 0..2000 {
            let ds = generate_sparse_regression(100, 50, 5, 0.1, seed).unwrap();
            for y in &ds.targets {
                sum += y;
                sq += y * y;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let var = sq / count - mean * mean;
        assert!((var - 1.01).abs() < 0.02, "variance {var}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn rejects_zero_rows() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(RegressionDataset::new(x, vec![1.0, 0.0], None, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate_sparse_regression(6, 4, 2, 0.3, 99).unwrap();
        let m = ds.manifest(Some(99), Some(2));
        ds.write(&path, &m).unwrap();
        let (back, mback) = RegressionDataset::read(&path).unwrap();
        assert_eq!(back.design, ds.design);
        assert_eq!(back.targets, ds.targets);
        assert_eq!(mback, Some(m));
        assert_eq!(back.planted, ds.planted);
    }
}
