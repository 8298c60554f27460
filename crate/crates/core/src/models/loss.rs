use ndarray::ArrayView2;

use crate::{Error, Result};

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Sum over rows of the squared Euclidean distance between prediction and
/// target. Training divides this by the batch size.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    same_shape(&pred, &target, "mse_loss")?;
    Ok(pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum())
}

/// Gaussian negative log-likelihood with diagonal covariance
/// `diag(exp(logvar))`, summed over rows and dimensions, without the
/// additive `log(2π)` constant:
/// `Σ (μ - s)² exp(-logvar) + logvar`.
pub fn gaussian_nll_loss(mean: ArrayView2<f64>, logvar: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    same_shape(&mean, &target, "gaussian_nll_loss mean/target")?;
    same_shape(&logvar, &target, "gaussian_nll_loss logvar/target")?;
    let mut total = 0.0;
    for ((m, lv), t) in mean.iter().zip(logvar.iter()).zip(target.iter()) {
        if !(m.is_finite() && lv.is_finite() && t.is_finite()) {
            return Err(Error::NonFinite(format!("nll input (mean {m}, logvar {lv}, target {t})")));
        }
        total += (m - t) * (m - t) * (-lv).exp() + lv;
    }
    Ok(total)
}
