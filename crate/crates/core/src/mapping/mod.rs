//! The global specialisation function `f: R^dim -> R^dim`.
//!
//! A [`MappingModel`] is a stack of dense layers. The linear model is a
//! single bias-free `dim x dim` matrix. The deep feed-forward model has `H`
//! hidden layers with swish activations followed by an affine output layer
//! without activation. Rows are vectors: a layer computes `h W^T + b`.

mod closed_form;
mod format;
mod loss;
mod train;

pub use closed_form::closed_form_linear_mse;
pub use format::{load_model, read_model, save_model, write_model};
pub use loss::{
    hinge_loss, loss_and_grad, mm_loss, mse_loss, Negatives, Objective, Reduction,
};
pub use train::{train_mapping, MapTrainConfig, TrainReport, Trained};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};

/// `x * sigmoid(x)`, i.e. swish with beta fixed to 1.
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// He-normal weights of shape `fan_out x fan_in`, drawn from
/// `Normal(0, 2 / fan_in)`.
pub fn he_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    assert!(fan_in >= 1 && fan_out >= 1, "layer sizes must be positive");
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std dev");
    Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(rng))
}

/// Architecture of a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Dffn { hidden: usize, width: usize },
}

impl ModelKind {
    /// Default deep network: five hidden layers of width 512.
    pub const DEFAULT_DFFN: ModelKind = ModelKind::Dffn {
        hidden: 5,
        width: 512,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut a = h.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            a += b;
        }
        a
    }
}

/// A trained or freshly initialised mapping. Every layer but the last is
/// followed by swish.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingModel {
    kind: ModelKind,
    layers: Vec<Dense>,
}

/// Per-layer parameter gradients, aligned with [`MappingModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Option<Array1<f64>>>,
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl MappingModel {
    /// Freshly initialised model: He-normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(kind: ModelKind, dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimensionality must be at least 1".into()));
        }
        let layers = match kind {
            ModelKind::Linear => vec![Dense {
                weight: he_init(dim, dim, rng),
                bias: None,
            }],
            ModelKind::Dffn { hidden, width } => {
                if hidden > 0 && width == 0 {
                    return Err(Error::InvalidConfig("hidden width must be at least 1".into()));
                }
                let mut layers = Vec::with_capacity(hidden + 1);
                let mut fan_in = dim;
                for _ in 0..hidden {
                    layers.push(Dense {
                        weight: he_init(fan_in, width, rng),
                        bias: Some(Array1::zeros(width)),
                    });
                    fan_in = width;
                }
                layers.push(Dense {
                    weight: he_init(fan_in, dim, rng),
                    bias: Some(Array1::zeros(dim)),
                });
                layers
            }
        };
        Ok(MappingModel { kind, layers })
    }

    /// Builds a model from explicit layers, checking that shapes compose.
    pub fn from_layers(kind: ModelKind, layers: Vec<Dense>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let Some(first) = layers.first() else {
            return bad("a model needs at least one layer".into());
        };
        let dim = first.fan_in();
        let expected_layers = match kind {
            ModelKind::Linear => 1,
            ModelKind::Dffn { hidden, .. } => hidden + 1,
        };
        if layers.len() != expected_layers {
            return bad(format!("{kind:?} needs {expected_layers} layer(s), got {}", layers.len()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return bad(format!("layer {i} outputs {} but layer {} takes {}", w[0].fan_out(), i + 1, w[1].fan_in()));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if let Some(b) = &l.bias {
                if b.len() != l.fan_out() {
                    return bad(format!("layer {i} bias has length {}", b.len()));
                }
            }
            if let ModelKind::Dffn { width, .. } = kind {
                if i + 1 < layers.len() && l.fan_out() != width {
                    return bad(format!("hidden layer {i} has width {}", l.fan_out()));
                }
                if l.bias.is_none() {
                    return bad(format!("layer {i} of a feed-forward model needs a bias"));
                }
            } else if l.bias.is_some() {
                return bad("the linear model has no bias".into());
            }
            let all_finite = l.weight.iter().chain(l.bias.iter().flatten()).all(|v| v.is_finite());
            if !all_finite {
                return bad(format!("layer {i} has non-finite parameters"));
            }
        }
        if layers.last().map(Dense::fan_out) != Some(dim) {
            return bad("output dimensionality differs from input".into());
        }
        Ok(MappingModel { kind, layers })
    }

    /// A linear model with the given `dim x dim` matrix.
    pub fn linear(weight: Array2<f64>) -> Result<Self> {
        Self::from_layers(ModelKind::Linear, vec![Dense { weight, bias: None }])
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.as_ref().map_or(0, |b| b.len()))
            .sum()
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// Maps a single vector.
    pub fn forward_one(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let x = x.insert_axis(Axis(0));
        Ok(self.forward(x)?.index_axis_move(Axis(0), 0))
    }

    /// Maps each row of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(h.view());
            if i < last {
                h.mapv_inplace(swish);
            }
        }
        Ok(h)
    }

    fn forward_traced(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Trace) {
        let last = self.layers.len() - 1;
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.apply(h.view());
            trace.inputs.push(h);
            if i < last {
                h = a.mapv(swish);
                trace.pre.push(a);
            } else {
                h = a;
            }
        }
        (h, trace)
    }

    /// Backpropagates `d_out`, the loss gradient with respect to the model
    /// output for the rows of `x`.
    pub fn backward(&self, x: ArrayView2<'_, f64>, d_out: ArrayView2<'_, f64>) -> Result<Gradients> {
        self.check_dim(x.ncols())?;
        let (out, trace) = self.forward_traced(x);
        if d_out.raw_dim() != out.raw_dim() {
            return Err(Error::DimensionMismatch {
                expected: out.ncols(),
                found: d_out.ncols(),
            });
        }
        Ok(self.backward_traced(&trace, d_out.to_owned()))
    }

    fn backward_traced(&self, trace: &Trace, mut delta: Array2<f64>) -> Gradients {
        let n = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![None; n];
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            weights[i] = delta.t().dot(&trace.inputs[i]);
            if layer.bias.is_some() {
                biases[i] = Some(delta.sum_axis(Axis(0)));
            }
            if i > 0 {
                let mut prev = delta.dot(&layer.weight);
                prev.zip_mut_with(&trace.pre[i - 1], |d, &a| *d *= swish_derivative(a));
                delta = prev;
            }
        }
        Gradients { weights, biases }
    }

    /// Loss value and parameter gradients for one batch.
    pub fn loss_and_gradients(
        &self,
        inputs: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
        objective: &Objective,
        negatives: Option<&Negatives<'_>>,
        reduction: Reduction,
    ) -> Result<(f64, Gradients)> {
        self.check_dim(inputs.ncols())?;
        let (pred, trace) = self.forward_traced(inputs);
        let (loss, d_pred) = loss_and_grad(objective, pred.view(), targets, negatives, reduction)?;
        Ok((loss, self.backward_traced(&trace, d_pred)))
    }

    /// Flat mutable views of every parameter tensor, weights then bias per
    /// layer.
    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            if let Some(b) = &mut l.bias {
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub(crate) fn parameter_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.len());
            if let Some(b) = &l.bias {
                out.push(b.len());
            }
        }
        out
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter().flatten()).all(|v| v.is_finite()))
    }
}

impl Gradients {
    pub(crate) fn flat(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            if let Some(b) = b {
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

/// Applies the mapping to every row of `space`, keeping its vocabulary.
/// Rows are processed in parallel chunks.
pub fn apply_mapping(model: &MappingModel, space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
    const CHUNK: usize = 4096;
    model.check_dim(space.dim())?;
    let x = space.vectors();
    let chunks: Vec<Array2<f64>> = (0..space.len())
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + CHUNK).min(space.len());
            model.forward(x.slice(s![start..end, ..])).expect("dimension checked")
        })
        .collect();
    let mut out = Array2::zeros((space.len(), space.dim()));
    for (i, c) in chunks.into_iter().enumerate() {
        let start = i * CHUNK;
        out.slice_mut(s![start..start + c.nrows(), ..]).assign(&c);
    }
    EmbeddingSpace::new(space.words().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;
    use ndarray::array;

    #[test]
    fn swish_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(1.0) - 0.731059).abs() < 1e-6);
        assert!((swish(-1.0) + 0.268941).abs() < 1e-6);
    }

    #[test]
    fn swish_derivative_matches_differences() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (swish(x + h) - swish(x - h)) / (2.0 * h);
            assert!((fd - swish_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn he_init_statistics() {
        let w = he_init(512, 512, &mut stage_rng(1, "he"));
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0);
        assert!(mean.abs() < 0.01);
        assert!((var - 2.0 / 512.0).abs() < 0.2 * 2.0 / 512.0);
        assert_eq!(w, he_init(512, 512, &mut stage_rng(1, "he")));
    }

    #[test]
    fn identity_linear_model() {
        let m = MappingModel::linear(Array2::eye(3)).unwrap();
        let x = array![[1.0, -2.0, 0.5]];
        assert_eq!(m.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_network_returns_output_bias() {
        let mut m = MappingModel::new(ModelKind::Dffn { hidden: 2, width: 4 }, 3, &mut stage_rng(0, "t")).unwrap();
        for l in &mut m.layers {
            l.weight.fill(0.0);
        }
        m.layers[2].bias = Some(array![0.1, 0.2, 0.3]);
        let y = m.forward_one(array![5.0, 6.0, 7.0].view()).unwrap();
        assert_eq!(y, array![0.1, 0.2, 0.3]);
    }

    #[test]
    fn zero_hidden_layers_is_affine() {
        let m = MappingModel::new(ModelKind::Dffn { hidden: 0, width: 0 }, 2, &mut stage_rng(0, "t")).unwrap();
        assert_eq!(m.layers().len(), 1);
        let f = |x: [f64; 2]| m.forward_one(ArrayView1::from(&x)).unwrap();
        // affine: f(a) + f(b) - f(0) == f(a + b)
        let lhs = f([1.0, 2.0]) + f([-3.0, 0.5]) - f([0.0, 0.0]);
        let rhs = f([-2.0, 2.5]);
        assert!((lhs - rhs).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let m = MappingModel::linear(Array2::eye(3)).unwrap();
        assert!(m.forward(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn from_layers_checks_shapes() {
        let bad = vec![
            Dense { weight: Array2::zeros((4, 3)), bias: Some(Array1::zeros(4)) },
            Dense { weight: Array2::zeros((3, 5)), bias: Some(Array1::zeros(3)) },
        ];
        assert!(MappingModel::from_layers(ModelKind::Dffn { hidden: 1, width: 4 }, bad).is_err());
    }

    #[test]
    fn apply_keeps_vocabulary_and_matches_rowwise() {
        let m = MappingModel::new(ModelKind::Dffn { hidden: 1, width: 5 }, 3, &mut stage_rng(2, "t")).unwrap();
        let space = EmbeddingSpace::new(
            vec!["a".into(), "b".into()],
            array![[1.0, 0.0, 2.0], [0.5, -1.0, 0.0]],
        )
        .unwrap();
        let out = apply_mapping(&m, &space).unwrap();
        assert_eq!(out.words(), space.words());
        for i in 0..2 {
            let one = m.forward_one(space.row(i)).unwrap();
            assert!((&one - &out.row(i)).iter().all(|d| d.abs() < 1e-12));
        }
        let empty = EmbeddingSpace::empty(3).unwrap();
        assert!(apply_mapping(&m, &empty).unwrap().is_empty());
    }
}
