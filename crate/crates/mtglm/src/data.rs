//! Dataset container: a design matrix with a leading intercept column and a
//! count response.

use nalgebra::{DMatrix, DVector};

use crate::error::MtError;
use crate::Result;

/// A regression dataset.
///
/// The design matrix is `n x (p+1)` with the first column identically one;
/// the response holds nonnegative integer counts stored as `f64`.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from raw covariates (`n x p`, no intercept column)
    /// and a count response; the intercept column is prepended.
    pub fn from_covariates(z: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let n = z.nrows();
        let mut x = DMatrix::zeros(n, z.ncols() + 1);
        x.column_mut(0).fill(1.0);
        x.view_mut((0, 1), (n, z.ncols())).copy_from(&z);
        Self::from_design(x, y)
    }

    /// Builds a dataset from a full design matrix whose first column must
    /// already be the intercept.
    pub fn from_design(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(MtError::Config(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(MtError::DegenerateInput(
                "need at least two observations".into(),
            ));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(MtError::Config(
                "first design column must be identically one".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MtError::Config("design contains non-finite entries".into()));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
                return Err(MtError::Config(format!(
                    "response entry {i} is {v}; counts must be nonnegative integers"
                )));
            }
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of slope coefficients (excludes the intercept).
    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Linear predictors `X beta`.
    pub fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    /// Copies the listed rows into a new dataset (indices may repeat).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(MtError::DegenerateInput(
                "subset must keep at least two rows".into(),
            ));
        }
        let mut x = DMatrix::zeros(rows.len(), self.x.ncols());
        let mut y = Vec::with_capacity(rows.len());
        for (out, &r) in rows.iter().enumerate() {
            x.row_mut(out).copy_from(&self.x.row(r));
            y.push(self.y[r]);
        }
        Ok(Self { x, y })
    }
}
