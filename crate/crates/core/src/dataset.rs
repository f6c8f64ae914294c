//! Raw and standardized regression data.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Covariates and outcome as ingested, before any transform.
#[derive(Debug, Clone)]
pub struct RawDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    row_labels: Vec<String>,
    column_labels: Vec<String>,
}

impl RawDataset {
    /// Validates shape and finiteness. Rows are labelled `1..=n` and columns
    /// `x1..xp` unless labels are attached afterwards.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} covariate rows but {} outcomes",
                y.len()
            )));
        }
        if n < 3 {
            return Err(Error::TooFewObservations(n));
        }
        if p == 0 {
            return Err(Error::DimensionMismatch("no covariate columns".into()));
        }
        for j in 0..p {
            for i in 0..n {
                if !x[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutcome(i));
        }
        Ok(Self {
            x,
            y,
            row_labels: (1..=n).map(|i| i.to_string()).collect(),
            column_labels: (1..=p).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn with_column_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} column labels for {} columns",
                labels.len(),
                self.x.ncols()
            )));
        }
        self.column_labels = labels;
        Ok(self)
    }

    pub fn with_row_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} row labels for {} rows",
                labels.len(),
                self.x.nrows()
            )));
        }
        self.row_labels = labels;
        Ok(self)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    /// Copy without the listed rows (0-based). Labels follow their rows.
    pub fn without_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::IndexOutOfRange { index: bad + 1, len: n });
        }
        let keep: Vec<usize> = (0..n).filter(|i| !rows.contains(i)).collect();
        let x = self.x.select_rows(keep.iter());
        let y = DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.y[i]));
        let labels = keep.iter().map(|&i| self.row_labels[i].clone()).collect();
        RawDataset::new(x, y)?
            .with_column_labels(self.column_labels.clone())?
            .with_row_labels(labels)
    }
}

/// Options for [`standardize`].
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StandardizeOptions {
    /// Also divide the centered outcome by its sample standard deviation.
    pub scale_outcome: bool,
}

/// Column-centered, unit-variance covariates and a centered outcome, plus
/// the affine maps that produced them.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    column_means: DVector<f64>,
    column_scales: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    row_labels: Vec<String>,
    column_labels: Vec<String>,
}

/// Divisor used for every sample standard deviation in this crate.
pub const VARIANCE_DIVISOR: &str = "n-1";

fn mean_and_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

/// Centers every covariate and scales it to unit sample variance (divisor
/// `n - 1`); centers the outcome and optionally scales it.
pub fn standardize(raw: &RawDataset, opts: StandardizeOptions) -> Result<StandardizedDataset> {
    let (n, p) = raw.x.shape();
    let mut x = raw.x.clone();
    let mut column_means = DVector::zeros(p);
    let mut column_scales = DVector::zeros(p);
    for j in 0..p {
        let col = raw.x.column(j);
        let (mean, sd) = mean_and_sd(col.iter().copied(), n);
        // Relative test: a column whose spread is at rounding level of its
        // magnitude is constant for all practical purposes.
        let magnitude = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sd == 0.0 || sd <= 1e-13 * magnitude {
            return Err(Error::ConstantColumn {
                index: j,
                name: raw.column_labels[j].clone(),
            });
        }
        for i in 0..n {
            x[(i, j)] = (raw.x[(i, j)] - mean) / sd;
        }
        column_means[j] = mean;
        column_scales[j] = sd;
    }

    let (y_mean, y_sd) = mean_and_sd(raw.y.iter().copied(), n);
    let y_scale = if opts.scale_outcome && y_sd > 0.0 { y_sd } else { 1.0 };
    let y = raw.y.map(|v| (v - y_mean) / y_scale);

    Ok(StandardizedDataset {
        x,
        y,
        column_means,
        column_scales,
        y_mean,
        y_scale,
        row_labels: raw.row_labels.clone(),
        column_labels: raw.column_labels.clone(),
    })
}

impl StandardizedDataset {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    pub fn column_scales(&self) -> &DVector<f64> {
        &self.column_scales
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    /// Replace the outcome, centering it (and scaling it if this dataset was
    /// built with a scaled outcome). Used when outcomes are simulated for
    /// fixed covariates.
    pub fn with_outcome(&self, y: &DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} outcomes for {} rows",
                y.len(),
                self.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutcome(i));
        }
        let mean = y.mean();
        let mut out = self.clone();
        out.y_mean = mean;
        out.y = y.map(|v| (v - mean) / self.y_scale);
        Ok(out)
    }

    /// Maps raw covariate rows into the standardized space.
    pub fn transform_rows(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns, expected {}",
                raw.ncols(),
                self.p()
            )));
        }
        let mut out = raw.clone();
        for j in 0..self.p() {
            for i in 0..raw.nrows() {
                out[(i, j)] = (raw[(i, j)] - self.column_means[j]) / self.column_scales[j];
            }
        }
        Ok(out)
    }

    /// Inverse of the covariate transform.
    pub fn unstandardize_x(&self) -> DMatrix<f64> {
        let mut out = self.x.clone();
        for j in 0..self.p() {
            for i in 0..self.n() {
                out[(i, j)] = self.x[(i, j)] * self.column_scales[j] + self.column_means[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn raw(x: &[f64], n: usize, y: &[f64]) -> RawDataset {
        let p = x.len() / n;
        RawDataset::new(
            DMatrix::from_row_slice(n, p, x),
            DVector::from_column_slice(y),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_three_points() {
        let d = standardize(&raw(&[1.0, 2.0, 3.0], 3, &[5.0, 5.0, 5.0]), Default::default()).unwrap();
        assert_abs_diff_eq!(d.x()[(0, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.x()[(1, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.x()[(2, 0)], 1.0, epsilon = 1e-15);
        assert!(d.y().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_column_rejected() {
        let r = raw(&[1.0, 4.0, 1.0, 5.0, 1.0, 7.0], 3, &[1.0, 2.0, 3.0]);
        match standardize(&r, Default::default()) {
            Err(Error::ConstantColumn { index: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingestion_rejects_bad_shapes() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(
            RawDataset::new(x, DVector::from_column_slice(&[1.0, 2.0])),
            Err(Error::TooFewObservations(2))
        ));
        let x = DMatrix::from_row_slice(3, 1, &[1.0, f64::NAN, 2.0]);
        assert!(matches!(
            RawDataset::new(x, DVector::from_column_slice(&[1.0, 2.0, 3.0])),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 3.0, 2.0]);
        assert!(matches!(
            RawDataset::new(x, DVector::from_column_slice(&[1.0, f64::INFINITY, 3.0])),
            Err(Error::NonFiniteOutcome(1))
        ));
    }

    #[test]
    fn scale_outcome_flag() {
        let r = raw(&[1.0, 2.0, 4.0, 8.0], 4, &[1.0, 3.0, 5.0, 7.0]);
        let d = standardize(&r, StandardizeOptions { scale_outcome: true }).unwrap();
        let sd = (d.y().iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn round_trip_and_new_rows() {
        let r = raw(
            &[1.0, 10.0, 2.0, 30.0, 4.0, 20.0, 8.0, 70.0],
            4,
            &[0.0, 1.0, 0.0, 1.0],
        );
        let d = standardize(&r, Default::default()).unwrap();
        let back = d.unstandardize_x();
        for (a, b) in back.iter().zip(r.x().iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        let mapped = d.transform_rows(r.x()).unwrap();
        assert!((mapped - d.x()).norm() < 1e-12);
    }

    #[test]
    fn dropping_rows_keeps_labels() {
        let r = raw(&[1.0, 2.0, 3.0, 4.0], 4, &[1.0, 2.0, 3.0, 5.0]);
        let d = r.without_rows(&[1]).unwrap();
        assert_eq!(d.row_labels(), &["1", "3", "4"]);
        assert_eq!(d.y().as_slice(), &[1.0, 3.0, 5.0]);
    }
}
