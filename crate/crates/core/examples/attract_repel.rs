//! Specialise a small random space with ATTRACT-REPEL and watch the
//! constrained cosines move.

use ndarray::Array2;
use postspec::attract_repel::{ar_specialise, ArConfig};
use postspec::constraints::ConstraintSet;
use postspec::embedding::{cosine, EmbeddingSpace};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> postspec::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let space = EmbeddingSpace::new(words.clone(), Array2::from_shape_fn((40, 10), |_| StandardNormal.sample(&mut rng)))?;

    let att: Vec<_> = (0..20).step_by(2).map(|i| (words[i].clone(), words[i + 1].clone())).collect();
    let rep: Vec<_> = (0..10).map(|i| (words[i].clone(), words[i + 10].clone())).collect();
    let (cs, _) = ConstraintSet::from_pairs(att.clone(), rep.clone());

    let cfg = ArConfig { epochs: 10, ..ArConfig::default() };
    let out = ar_specialise(&space, &cs, &cfg)?;
    for (e, stats) in out.report.epochs.iter().enumerate() {
        println!("epoch {:2}: cost {:.4} over {} batches", e + 1, stats.cost, stats.batches);
    }

    let mean = |s: &EmbeddingSpace, pairs: &[(String, String)]| {
        pairs.iter().map(|(a, b)| cosine(s.vector(a).unwrap(), s.vector(b).unwrap()).unwrap()).sum::<f64>()
            / pairs.len() as f64
    };
    println!("attract mean cosine {:.3} -> {:.3}", mean(&space, &att), mean(&out.space, &att));
    println!("repel   mean cosine {:.3} -> {:.3}", mean(&space, &rep), mean(&out.space, &rep));
    println!("w39 untouched: {}", out.space.vector("w39") == space.vector("w39"));
    Ok(())
}
