use log::{debug, info};
use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, Negatives, Objective, Reduction};
use super::{MappingModel, ModelKind};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stage_rng, StageRng};

/// Fewest training pairs accepted by [`train_mapping`].
pub const MIN_TRAINING_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapTrainConfig {
    pub objective: Objective,
    /// Negatives per example for the max-margin objective.
    pub k_neg: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub reduction: Reduction,
    pub seed: u64,
}

impl Default for MapTrainConfig {
    fn default() -> Self {
        MapTrainConfig {
            objective: Objective::Mm { margin: 0.6 },
            k_neg: 25,
            epochs: 100,
            validation_fraction: 0.1,
            patience: 10,
            adam: AdamConfig::default(),
            batch_size: 128,
            reduction: Reduction::Mean,
            seed: 0,
        }
    }
}

impl MapTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie strictly between 0 and 1");
        }
        if self.k_neg == 0 {
            return bad("k must be at least 1");
        }
        match self.objective {
            Objective::Mm { margin } | Objective::Hinge { margin } if margin.is_nan() || margin < 0.0 => {
                return bad("margin must be non-negative")
            }
            _ => {}
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be at least 1");
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_pairs: usize,
    pub validation_pairs: usize,
    /// Mean training loss per completed epoch.
    pub train_losses: Vec<f64>,
    /// Validation loss at the end of each completed epoch.
    pub validation_losses: Vec<f64>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    /// 1-based last epoch run.
    pub stop_epoch: usize,
    pub early_stopped: bool,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MappingModel,
    pub report: TrainReport,
}

/// Draws `k` indices uniformly from `0..n` excluding `own`.
fn sample_negatives(rng: &mut StageRng, n: usize, own: usize, k: usize) -> Vec<usize> {
    (0..k)
        .map(|_| {
            let j = rng.random_range(0..n - 1);
            if j >= own {
                j + 1
            } else {
                j
            }
        })
        .collect()
}

/// Trains a mapping from `inputs` to `targets` (aligned rows).
///
/// The pairs are split by a seeded shuffle into training and validation
/// parts; training runs Adam over shuffled mini-batches and keeps the
/// snapshot with the lowest validation loss, stopping once `patience`
/// epochs pass without improvement.
pub fn train_mapping(
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    kind: ModelKind,
    cfg: &MapTrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if inputs.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: inputs.nrows(),
            found: targets.nrows(),
        });
    }
    let n = inputs.nrows();
    if n < MIN_TRAINING_PAIRS {
        return Err(Error::InsufficientData(format!(
            "{n} training pair(s); at least {MIN_TRAINING_PAIRS} required"
        )));
    }
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 2);

    let mut split_rng = stage_rng(cfg.seed, "map-split");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut split_rng);
    let (val_idx, train_idx) = order.split_at(n_val);
    let x_train = inputs.select(Axis(0), train_idx);
    let y_train = targets.select(Axis(0), train_idx);
    let x_val = inputs.select(Axis(0), val_idx);
    let y_val = targets.select(Axis(0), val_idx);
    let n_train = train_idx.len();

    let mut model = MappingModel::new(kind, inputs.ncols(), &mut stage_rng(cfg.seed, "map-init"))?;
    let mut adam = Adam::new(cfg.adam, &model.parameter_sizes());
    let mut rng = stage_rng(cfg.seed, "map-train");
    let mm = cfg.objective.needs_negatives();

    // Validation negatives are drawn once from the training targets.
    let val_negatives: Vec<Vec<usize>> = if mm {
        let mut r = stage_rng(cfg.seed, "map-val-negatives");
        (0..n_val)
            .map(|_| (0..cfg.k_neg).map(|_| r.random_range(0..n_train)).collect())
            .collect()
    } else {
        Vec::new()
    };
    let validation_loss = |model: &MappingModel| -> Result<f64> {
        let pred = model.forward(x_val.view())?;
        let negs = Negatives {
            pool: y_train.view(),
            indices: &val_negatives,
        };
        let (loss, _) = loss_and_grad(
            &cfg.objective,
            pred.view(),
            y_val.view(),
            mm.then_some(&negs),
            Reduction::Mean,
        )?;
        Ok(loss)
    };

    let mut report = TrainReport {
        train_pairs: n_train,
        validation_pairs: n_val,
        best_validation_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = model.clone();
    let mut since_best = 0usize;
    let mut batch_order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=cfg.epochs {
        let negatives: Vec<Vec<usize>> = if mm {
            (0..n_train)
                .map(|i| sample_negatives(&mut rng, n_train, i, cfg.k_neg))
                .collect()
        } else {
            Vec::new()
        };
        batch_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in batch_order.chunks(cfg.batch_size).enumerate() {
            let xb = x_train.select(Axis(0), chunk);
            let yb = y_train.select(Axis(0), chunk);
            let nb: Vec<Vec<usize>> = if mm {
                chunk.iter().map(|&i| negatives[i].clone()).collect()
            } else {
                Vec::new()
            };
            let negs = Negatives {
                pool: y_train.view(),
                indices: &nb,
            };
            let (loss, grads) = model.loss_and_gradients(
                xb.view(),
                yb.view(),
                &cfg.objective,
                mm.then_some(&negs),
                cfg.reduction,
            )?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss became {loss} at epoch {epoch}, batch {b}; last validation losses: {:?}",
                    report.validation_losses.iter().rev().take(3).collect::<Vec<_>>()
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(model.parameters_mut(), grads.flat());
        }
        if !model.all_finite() {
            return Err(Error::Numerical(format!("non-finite weights after epoch {epoch}")));
        }
        let val = validation_loss(&model)?;
        if !val.is_finite() {
            return Err(Error::Numerical(format!("validation loss became {val} at epoch {epoch}")));
        }
        report.train_losses.push(epoch_loss / n_train as f64);
        report.validation_losses.push(val);
        report.stop_epoch = epoch;
        debug!("mapping epoch {epoch}: train {:.6}, validation {val:.6}", epoch_loss / n_train as f64);

        if val < report.best_validation_loss {
            report.best_validation_loss = val;
            report.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                report.early_stopped = true;
                break;
            }
        }
    }
    info!(
        "mapping: best validation loss {:.6} at epoch {} (stopped at {})",
        report.best_validation_loss, report.best_epoch, report.stop_epoch
    );
    Ok(Trained {
        model: best,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = stage_rng(seed, "train-test");
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn negatives_never_hit_own_index() {
        let mut rng = stage_rng(0, "neg");
        for own in 0..5 {
            let s = sample_negatives(&mut rng, 5, own, 200);
            assert!(s.iter().all(|&j| j != own && j < 5));
        }
    }

    #[test]
    fn too_few_pairs() {
        let x = random(9, 3, 0);
        let err = train_mapping(x.view(), x.view(), ModelKind::Linear, &MapTrainConfig::default());
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn identity_task_converges() {
        let x = random(200, 5, 1);
        let cfg = MapTrainConfig {
            objective: Objective::Mse,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..Default::default()
            },
            batch_size: 16,
            ..Default::default()
        };
        let t = train_mapping(x.view(), x.view(), ModelKind::Linear, &cfg).unwrap();
        assert!(t.report.best_validation_loss < 1e-3, "{:?}", t.report.best_validation_loss);
    }

    #[test]
    fn early_stopping_contract() {
        let x = random(60, 4, 2);
        let y = random(60, 4, 3);
        let cfg = MapTrainConfig {
            objective: Objective::Mse,
            patience: 3,
            adam: AdamConfig {
                learning_rate: 5e-2,
                ..Default::default()
            },
            ..Default::default()
        };
        let t = train_mapping(x.view(), y.view(), ModelKind::Dffn { hidden: 2, width: 16 }, &cfg).unwrap();
        let r = &t.report;
        assert!(r.early_stopped);
        assert!(r.stop_epoch < 100);
        assert!(r.best_epoch <= r.stop_epoch);
        let min = r.validation_losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, r.best_validation_loss);
        assert_eq!(r.validation_losses[r.best_epoch - 1], r.best_validation_loss);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = random(40, 3, 4);
        let y = random(40, 3, 5);
        let cfg = MapTrainConfig {
            k_neg: 3,
            epochs: 5,
            ..Default::default()
        };
        let kind = ModelKind::Dffn { hidden: 1, width: 8 };
        let a = train_mapping(x.view(), y.view(), kind, &cfg).unwrap();
        let b = train_mapping(x.view(), y.view(), kind, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.report, b.report);
    }
}
