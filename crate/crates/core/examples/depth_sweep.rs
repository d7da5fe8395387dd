//! Pipeline runs over several mapping depths, three seeds each, scored on a
//! synthetic similarity dataset whose words are all unseen.

use ndarray::Array2;
use postspec::constraints::ConstraintSet;
use postspec::embedding::EmbeddingSpace;
use postspec::evaluation::{depth_sweep, EvalDataset};
use postspec::pipeline::PipelineConfig;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

fn main() -> postspec::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let n = 300;
    let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    let x = Array2::from_shape_fn((n, 12), |_| StandardNormal.sample(&mut rng));
    // Ratings come from a hidden squashed projection of the vectors.
    let hidden = x.dot(&Array2::from_shape_fn((12, 12), |_| StandardNormal.sample(&mut rng))).mapv(f64::tanh);
    let sim = |i: usize, j: usize| hidden.row(i).dot(&hidden.row(j));

    let mut pairs = |lo: usize, hi: usize, k: usize| -> Vec<(usize, usize)> {
        (0..k).map(|_| (rng.random_range(lo..hi), rng.random_range(lo..hi))).collect()
    };
    let candidates = pairs(0, 150, 3000);
    let mut ranked: Vec<_> = candidates.iter().filter(|(i, j)| i != j).map(|&(i, j)| (sim(i, j), i, j)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let name = |(_, i, j): &(f64, usize, usize)| (words[*i].clone(), words[*j].clone());
    let attract = ranked[..300].iter().map(name).collect::<Vec<_>>();
    let repel = ranked[ranked.len() - 300..].iter().map(name).collect::<Vec<_>>();
    let cs = ConstraintSet::from_pairs(attract, repel).0;

    let eval = pairs(150, n, 200)
        .into_iter()
        .filter(|(i, j)| i != j)
        .map(|(i, j)| (words[i].clone(), words[j].clone(), sim(i, j)))
        .collect();
    let datasets = vec![EvalDataset::new("synthetic", eval)?];
    let space = EmbeddingSpace::new(words, x)?;

    let mut base = PipelineConfig::default();
    base.map.epochs = 40;
    let rows = depth_sweep(&space, &cs, &datasets, &[0, 1, 2, 3], 64, 3, &base)?;
    for row in rows {
        let c = &row.cells[0];
        println!("H={} rho mean {:.4} (min {:.4}, max {:.4})", row.hidden, c.mean, c.min, c.max);
    }
    Ok(())
}
