//! Retrofitting as an alternative post-processor: seen words move towards
//! the average of their synonyms, repel pairs are ignored.

use ndarray::array;
use postspec::attract_repel::retrofit_specialise;
use postspec::constraints::ConstraintSet;
use postspec::embedding::EmbeddingSpace;

fn main() -> postspec::Result<()> {
    let words = ["a", "b", "c", "d"].map(String::from).to_vec();
    let space = EmbeddingSpace::new(words, array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.5, 0.5]])?;
    let (cs, _) = ConstraintSet::from_pairs(
        vec![("a".to_string(), "b".to_string()), ("b".to_string(), "c".to_string())],
        vec![("a".to_string(), "c".to_string())],
    );
    for iterations in [1, 5, 20] {
        let out = retrofit_specialise(&space, &cs, iterations)?;
        println!("after {iterations:2} round(s):");
        for w in out.words() {
            println!("  {w}: {}", out.vector(w).unwrap());
        }
    }
    Ok(())
}
