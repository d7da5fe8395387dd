//! First-order optimisers: sparse row-wise Adagrad for embedding updates and
//! Adam for the mapping network.

use ndarray::{Array2, ArrayView2, Zip};

/// Adagrad over the rows of an embedding matrix. Only rows that receive a
/// gradient have their accumulators touched.
#[derive(Debug, Clone)]
pub struct Adagrad {
    learning_rate: f64,
    epsilon: f64,
    accum: Array2<f64>,
}

impl Adagrad {
    /// Accumulator start value, as in TensorFlow's `AdagradOptimizer`.
    pub const INITIAL_ACCUMULATOR: f64 = 0.1;

    pub fn new(learning_rate: f64, shape: (usize, usize)) -> Self {
        Adagrad {
            learning_rate,
            epsilon: 1e-10,
            accum: Array2::from_elem(shape, Self::INITIAL_ACCUMULATOR),
        }
    }

    /// Applies `grads[i]` to `params[rows[i]]`.
    pub fn step_rows(&mut self, params: &mut Array2<f64>, rows: &[usize], grads: ArrayView2<'_, f64>) {
        for (&r, g) in rows.iter().zip(grads.outer_iter()) {
            let mut acc = self.accum.row_mut(r);
            let mut p = params.row_mut(r);
            Zip::from(&mut p).and(&mut acc).and(&g).for_each(|p, a, &g| {
                *a += g * g;
                *p -= self.learning_rate * g / (a.sqrt() + self.epsilon);
            });
        }
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam state for a fixed list of parameter tensors, each seen as a flat
/// slice.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            cfg,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update. `params` and `grads` follow the order of the sizes given
    /// to [`Adam::new`].
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn adagrad_touches_only_given_rows() {
        let mut p = array![[1.0, 1.0], [2.0, 2.0]];
        let mut opt = Adagrad::new(0.1, (2, 2));
        opt.step_rows(&mut p, &[1], array![[1.0, -1.0]].view());
        assert_eq!(p.row(0), array![1.0, 1.0]);
        let step = 0.1 / (1.1f64.sqrt() + 1e-10);
        assert!((p[[1, 0]] - (2.0 - step)).abs() < 1e-12);
        assert!((p[[1, 1]] - (2.0 + step)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // With bias correction the first step is lr * sign(g).
        let mut p = [0.0, 0.0];
        let mut opt = Adam::new(AdamConfig::default(), &[2]);
        opt.step(vec![&mut p], vec![&[3.0, -0.5]]);
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = [5.0];
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..Default::default()
            },
            &[1],
        );
        for _ in 0..500 {
            let g = [2.0 * p[0]];
            opt.step(vec![&mut p], vec![&g]);
        }
        assert!(p[0].abs() < 1e-2);
    }
}
