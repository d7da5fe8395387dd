//! Load a word-vector text file, normalise it and query cosines.
//!
//! cargo run --example load_vectors [-- path/to/vectors.txt]

use postspec::embedding::{cosine, load_embeddings_with, LoadOptions};

fn main() -> postspec::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.path().join("toy.txt");
            std::fs::write(
                &p,
                "4 3\ncheap 1.0 0.2 0.0\ninexpensive 0.9 0.3 0.1\nexpensive -0.8 0.1 0.2\ntable 0.0 0.0 1.0\n",
            )
            .expect("write toy file");
            p
        }
    };

    let (space, stats) = load_embeddings_with(&path, LoadOptions { limit: Some(100_000) })?;
    println!("{} words, dim {} (header {:?}, {} duplicates)", space.len(), space.dim(), stats.header, stats.duplicates);

    let unit = space.unit_normalize().space;
    let words = unit.words();
    for a in words.iter().take(4) {
        for b in words.iter().take(4) {
            if a < b {
                let c = cosine(unit.vector(a).unwrap(), unit.vector(b).unwrap())?;
                println!("cos({a}, {b}) = {c:.3}");
            }
        }
    }
    Ok(())
}
