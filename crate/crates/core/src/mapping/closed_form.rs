use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use super::MappingModel;
use crate::error::{Error, Result};

/// Least-squares linear map from `inputs` to `targets` (rows are examples).
///
/// Solves `min_W ||inputs W^T - targets||_F` through an SVD, which also
/// yields the minimum-norm solution when `inputs` is rank deficient.
pub fn closed_form_linear_mse(inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<MappingModel> {
    if inputs.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: inputs.ncols(),
            found: targets.ncols(),
        });
    }
    if inputs.nrows() == 0 || inputs.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("least-squares inputs are all zero".into()));
    }
    let (n, d) = inputs.dim();
    let x = DMatrix::from_fn(n, d, |i, j| inputs[[i, j]]);
    let y = DMatrix::from_fn(n, d, |i, j| targets[[i, j]]);
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * f64::EPSILON * n.max(d) as f64;
    // b = W^T
    let b = svd
        .solve(&y, eps)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let w = Array2::from_shape_fn((d, d), |(i, j)| b[(j, i)]);
    MappingModel::linear(w)
}
