//! Learn a mapping between two spaces with each objective and compare the
//! linear-mse fit against the closed-form least-squares solution.

use ndarray::Array2;
use postspec::embedding::cosine;
use postspec::mapping::{closed_form_linear_mse, train_mapping, MapTrainConfig, ModelKind, Objective};
use postspec::optim::AdamConfig;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> postspec::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut gauss = |shape| Array2::<f64>::from_shape_fn(shape, |_| StandardNormal.sample(&mut rng));
    let x = gauss((400, 8));
    let a = gauss((8, 8));
    // A mildly nonlinear target.
    let y = x.dot(&a).mapv(|v| v + 0.3 * v.tanh());

    let mean_cos = |pred: &Array2<f64>| {
        pred.outer_iter().zip(y.outer_iter()).map(|(p, t)| cosine(p, t).unwrap()).sum::<f64>() / y.nrows() as f64
    };

    let closed = closed_form_linear_mse(x.view(), y.view())?;
    println!("closed form      mean cosine {:.4}", mean_cos(&closed.forward(x.view())?));

    let runs = [
        ("linear-mse", ModelKind::Linear, Objective::Mse),
        ("nonlinear-mse", ModelKind::Dffn { hidden: 2, width: 32 }, Objective::Mse),
        ("nonlinear-mm", ModelKind::Dffn { hidden: 2, width: 32 }, Objective::Mm { margin: 0.6 }),
        ("nonlinear-hinge", ModelKind::Dffn { hidden: 2, width: 32 }, Objective::Hinge { margin: 1.0 }),
    ];
    for (name, kind, objective) in runs {
        let cfg = MapTrainConfig {
            objective,
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() },
            ..MapTrainConfig::default()
        };
        let t = train_mapping(x.view(), y.view(), kind, &cfg)?;
        println!(
            "{name:16} mean cosine {:.4} (best epoch {}, stopped at {})",
            mean_cos(&t.model.forward(x.view())?),
            t.report.best_epoch,
            t.report.stop_epoch
        );
    }
    Ok(())
}
