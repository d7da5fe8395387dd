//! Spearman's rho of a space against word-similarity ratings.
//!
//! cargo run --example evaluate [-- vectors.txt simlex.txt ...]

use std::path::Path;

use ndarray::array;
use postspec::embedding::{load_embeddings, EmbeddingSpace};
use postspec::evaluation::{evaluate_all, load_eval, read_eval};

fn main() -> postspec::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (space, datasets) = if args.len() >= 2 {
        let datasets = args[1..].iter().map(load_eval).collect::<postspec::Result<Vec<_>>>()?;
        (load_embeddings(&args[0], None)?, datasets)
    } else {
        let words = ["cheap", "inexpensive", "expensive", "car", "automobile"].map(String::from).to_vec();
        let space = EmbeddingSpace::new(
            words,
            array![[1.0, 0.1, 0.0], [0.9, 0.2, 0.0], [0.7, -0.3, 0.1], [0.0, 1.0, 0.2], [0.1, 0.9, 0.3]],
        )?;
        let ratings = "word1\tword2\tscore\ncheap\tinexpensive\t9.0\ncar\tautomobile\t8.9\ncheap\texpensive\t0.8\ncar\tcheap\t1.5\nunicorn\tcar\t2.0\n";
        (space, vec![read_eval(ratings.as_bytes(), Path::new("toy"), "toy")?])
    };
    for r in evaluate_all(&space, &datasets)? {
        println!("{}\trho {:.4}\t{}/{} pairs covered", r.dataset, r.rho, r.covered, r.total);
    }
    Ok(())
}
