use nalgebra::{DMatrix, DVectorView};

use crate::datagen::GeneratorSpec;
use crate::error::{Error, Result};

/// `N` observations of dimension `D`.
///
/// Observations are stored as the columns of a `D × N` matrix so that each
/// point is contiguous; [`Dataset::from_rows`] and [`Dataset::to_rows`]
/// convert from/to the conventional `N × D` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: DMatrix<f64>,
    pub provenance: Option<GeneratorSpec>,
}

impl Dataset {
    /// `rows` is `N × D`, one observation per row.
    pub fn from_rows(rows: &DMatrix<f64>) -> Result<Self> {
        Self::from_columns(rows.transpose())
    }

    /// `columns` is `D × N`, one observation per column.
    pub fn from_columns(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() == 0 || columns.nrows() == 0 {
            return Err(Error::InvalidInput("dataset needs N >= 1 and D >= 1".into()));
        }
        if let Some(pos) = columns.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in observation {}",
                pos / columns.nrows()
            )));
        }
        Ok(Dataset {
            points: columns,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, spec: GeneratorSpec) -> Self {
        self.provenance = Some(spec);
        self
    }

    pub fn n(&self) -> usize {
        self.points.ncols()
    }

    pub fn d(&self) -> usize {
        self.points.nrows()
    }

    pub fn point(&self, n: usize) -> DVectorView<'_, f64> {
        self.points.column(n)
    }

    pub fn point_slice(&self, n: usize) -> &[f64] {
        let d = self.d();
        &self.points.as_slice()[n * d..(n + 1) * d]
    }

    /// The `D × N` column matrix.
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn to_rows(&self) -> DMatrix<f64> {
        self.points.transpose()
    }

    /// Sub-dataset of the given points, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let cols = DMatrix::from_fn(self.d(), indices.len(), |r, c| self.points[(r, indices[c])]);
        Dataset {
            points: cols,
            provenance: self.provenance.clone(),
        }
    }

    /// Empirical covariance `(1/N) Σ (y - ȳ)(y - ȳ)ᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.n() as f64;
        let mean = self.points.column_mean();
        let mut centered = self.points.clone();
        for mut c in centered.column_iter_mut() {
            c -= &mean;
        }
        (&centered * centered.transpose()) / n
    }
}
