use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// Smallest standard deviation the normalizer will divide by.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column standardization `(x - mean) / std`.
///
/// An unfitted normalizer is the identity (mean 0, std 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub count: usize,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Replaces the statistics with the population mean and standard
    /// deviation of `data`'s columns, flooring std at [`STD_FLOOR`].
    pub fn fit(&mut self, data: ArrayView2<f64>) -> Result<()> {
        if data.nrows() == 0 {
            return Err(Error::Empty("normalizer fit on zero rows".into()));
        }
        if data.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "normalizer has {} dims, data has {} columns",
                self.dim(),
                data.ncols()
            )));
        }
        let n = data.nrows() as f64;
        let mean = data.sum_axis(Axis(0)) / n;
        let var = data
            .rows()
            .into_iter()
            .fold(Array1::<f64>::zeros(self.dim()), |acc, row| {
                let d = &row - &mean;
                acc + &d * &d
            })
            / n;
        self.std = var.mapv(|v| v.sqrt().max(STD_FLOOR));
        self.mean = mean;
        self.count = data.nrows();
        Ok(())
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "normalizer has {} dims, input has {} columns",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn denormalize(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        Ok(&x * &self.std + &self.mean)
    }
}
