//! The full post-specialisation pipeline on a synthetic vocabulary, saving
//! the final space and the trained mapping.
//!
//! cargo run --release --example pipeline [-- vectors.txt attract.txt repel.txt]

use ndarray::Array2;
use postspec::constraints::{load_constraints, ConstraintSet};
use postspec::embedding::{load_embeddings, save_embeddings, EmbeddingSpace};
use postspec::mapping::{save_model, ModelKind};
use postspec::pipeline::{run_pipeline, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

fn synthetic() -> postspec::Result<(EmbeddingSpace, ConstraintSet)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let words: Vec<String> = (0..500).map(|i| format!("w{i}")).collect();
    let space = EmbeddingSpace::new(words.clone(), Array2::from_shape_fn((500, 16), |_| StandardNormal.sample(&mut rng)))?;
    let mut pairs = |k| -> Vec<(String, String)> {
        (0..k).map(|_| (words[rng.random_range(0..200)].clone(), words[rng.random_range(0..200)].clone())).collect()
    };
    let (att, rep) = (pairs(400), pairs(300));
    Ok((space, ConstraintSet::from_pairs(att, rep).0))
}

fn main() -> postspec::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (space, cs) = match args.as_slice() {
        [v, a, r] => (load_embeddings(v, None)?, load_constraints(a, r)?),
        _ => synthetic()?,
    };

    let mut cfg = PipelineConfig::default().with_seed(42);
    cfg.model = ModelKind::Dffn { hidden: 2, width: 64 };
    cfg.map.epochs = 30;
    let out = run_pipeline(&space, &cs, &cfg)?;
    let r = &out.report;
    println!(
        "{} words: {} seen, {} unseen ({:.1}% coverage)",
        r.vocabulary,
        r.seen,
        r.unseen,
        100.0 * r.coverage
    );
    println!(
        "mapping: best validation loss {:.4} at epoch {}; timings {:?}",
        r.training.best_validation_loss, r.training.best_epoch, r.timings
    );

    let dir = std::env::temp_dir().join("postspec-pipeline");
    std::fs::create_dir_all(&dir).map_err(|e| postspec::Error::Io { path: dir.clone(), source: e })?;
    save_embeddings(&out.space, dir.join("final.txt"))?;
    save_model(&out.model, dir.join("mapping.txt"))?;
    println!("wrote final.txt and mapping.txt to {}", dir.display());
    Ok(())
}
