//! Mapping objectives and their gradients with respect to predictions.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "lowercase")]
pub enum Objective {
    /// Squared Frobenius distance.
    Mse,
    /// Max-margin ranking against `k` negative targets per example.
    Mm { margin: f64 },
    /// Cosine hinge without negatives.
    Hinge { margin: f64 },
}

impl Objective {
    pub fn needs_negatives(&self) -> bool {
        matches!(self, Objective::Mm { .. })
    }
}

/// How per-example losses are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn scale(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / n as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Negative targets for max-margin training: example `i` is contrasted with
/// rows `indices[i]` of `pool`.
#[derive(Debug, Clone, Copy)]
pub struct Negatives<'a> {
    pub pool: ArrayView2<'a, f64>,
    pub indices: &'a [Vec<usize>],
}

fn check_shapes(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: pred.nrows() * pred.ncols(),
            found: target.nrows() * target.ncols(),
        });
    }
    Ok(())
}

/// Cosine and its gradient with respect to `p`. Zero vectors give cosine 0
/// and a zero gradient; the flag reports that case.
fn cos_and_grad(p: ArrayView1<'_, f64>, t: ArrayView1<'_, f64>) -> (f64, Array1<f64>, bool) {
    let np = p.dot(&p).sqrt();
    let nt = t.dot(&t).sqrt();
    if np == 0.0 || nt == 0.0 {
        return (0.0, Array1::zeros(p.len()), true);
    }
    let c = p.dot(&t) / (np * nt);
    let g = &t / (np * nt) - &p * (c / (np * np));
    (c, g, false)
}

/// Loss value and its gradient with respect to `pred`.
pub fn loss_and_grad(
    objective: &Objective,
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    negatives: Option<&Negatives<'_>>,
    reduction: Reduction,
) -> Result<(f64, Array2<f64>)> {
    check_shapes(pred, target)?;
    let n = pred.nrows();
    if n == 0 {
        return Ok((0.0, Array2::zeros(pred.raw_dim())));
    }
    let scale = reduction.scale(n);
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut loss = 0.0;
    let mut degenerate = 0usize;

    match *objective {
        Objective::Mse => {
            let diff = &pred - &target;
            loss = diff.mapv(|d| d * d).sum();
            grad = diff * 2.0;
        }
        Objective::Hinge { margin } => {
            for i in 0..n {
                let (c, g, zero) = cos_and_grad(pred.row(i), target.row(i));
                degenerate += zero as usize;
                let z = margin - c;
                if z > 0.0 {
                    loss += z;
                    grad.row_mut(i).scaled_add(-1.0, &g);
                }
            }
        }
        Objective::Mm { margin } => {
            let negs = negatives.ok_or_else(|| {
                Error::InvalidConfig("max-margin loss needs negative examples".into())
            })?;
            if negs.indices.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: negs.indices.len(),
                });
            }
            if negs.pool.ncols() != pred.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: pred.ncols(),
                    found: negs.pool.ncols(),
                });
            }
            for i in 0..n {
                let p = pred.row(i);
                let (c_pos, g_pos, zero) = cos_and_grad(p, target.row(i));
                degenerate += zero as usize;
                for &j in &negs.indices[i] {
                    let (c_neg, g_neg, zero) = cos_and_grad(p, negs.pool.row(j));
                    degenerate += zero as usize;
                    let z = margin - c_pos + c_neg;
                    if z > 0.0 {
                        loss += z;
                        let mut row = grad.row_mut(i);
                        row.scaled_add(-1.0, &g_pos);
                        row.scaled_add(1.0, &g_neg);
                    }
                }
            }
        }
    }
    if degenerate > 0 {
        warn!("{degenerate} cosine term(s) involved a zero vector and were treated as 0");
    }
    grad *= scale;
    Ok((loss * scale, grad))
}

/// Squared Frobenius distance, averaged over rows.
pub fn mse_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    loss_and_grad(&Objective::Mse, pred, target, None, Reduction::Mean).map(|(l, _)| l)
}

/// Max-margin ranking loss, averaged over rows.
pub fn mm_loss(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    negatives: &Negatives<'_>,
    margin: f64,
) -> Result<f64> {
    loss_and_grad(&Objective::Mm { margin }, pred, target, Some(negatives), Reduction::Mean).map(|(l, _)| l)
}

/// Cosine hinge loss, averaged over rows.
pub fn hinge_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, margin: f64) -> Result<f64> {
    loss_and_grad(&Objective::Hinge { margin }, pred, target, None, Reduction::Mean).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Axis};

    #[test]
    fn mse_examples() {
        let t = array![[1.0, 2.0]];
        assert_eq!(mse_loss(t.view(), t.view()).unwrap(), 0.0);
        let p = array![[1.3, 2.4]];
        assert!((mse_loss(p.view(), t.view()).unwrap() - 0.25).abs() < 1e-12);
        let p2 = concatenate![Axis(0), p, p];
        let t2 = concatenate![Axis(0), t, t];
        assert!((mse_loss(p2.view(), t2.view()).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        assert!(mse_loss(array![[1.0]].view(), array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn mm_examples() {
        let pool = array![[0.0, 1.0], [1.0, 0.0]];
        let idx = vec![vec![0]];
        let negs = Negatives { pool: pool.view(), indices: &idx };
        // pred == target, negative orthogonal
        let l = mm_loss(array![[1.0, 0.0]].view(), array![[1.0, 0.0]].view(), &negs, 0.6).unwrap();
        assert_eq!(l, 0.0);
        // pred orthogonal to target, negative along pred
        let idx = vec![vec![1]];
        let negs = Negatives { pool: pool.view(), indices: &idx };
        let l = mm_loss(array![[1.0, 0.0]].view(), array![[0.0, 1.0]].view(), &negs, 0.6).unwrap();
        assert!((l - 1.6).abs() < 1e-12);
        // margin 0, negative equals target
        let idx = vec![vec![0]];
        let negs = Negatives { pool: pool.view(), indices: &idx };
        let l = mm_loss(array![[0.3, 0.7]].view(), array![[0.0, 1.0]].view(), &negs, 0.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn hinge_examples() {
        let t = array![[0.0, 2.0]];
        assert_eq!(hinge_loss(array![[0.0, 1.0]].view(), t.view(), 1.0).unwrap(), 0.0);
        assert!((hinge_loss(array![[3.0, 0.0]].view(), t.view(), 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(hinge_loss(array![[1.0, 1.0]].view(), t.view(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_prediction_contributes_the_margin() {
        let t = array![[0.0, 1.0]];
        let (l, g) = loss_and_grad(&Objective::Hinge { margin: 0.6 }, array![[0.0, 0.0]].view(), t.view(), None, Reduction::Mean).unwrap();
        assert!((l - 0.6).abs() < 1e-12);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_reduction_scales_with_batch() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let t = array![[0.0, 0.0], [0.0, 0.0]];
        let (mean, _) = loss_and_grad(&Objective::Mse, p.view(), t.view(), None, Reduction::Mean).unwrap();
        let (sum, _) = loss_and_grad(&Objective::Mse, p.view(), t.view(), None, Reduction::Sum).unwrap();
        assert!((sum - 2.0 * mean).abs() < 1e-12);
    }

    #[test]
    fn mm_requires_negatives() {
        let p = array![[1.0, 0.0]];
        assert!(loss_and_grad(&Objective::Mm { margin: 0.6 }, p.view(), p.view(), None, Reduction::Mean).is_err());
    }
}
