//! Build a constraint set, split the vocabulary into seen and unseen words,
//! and hold out an evaluation vocabulary.

use std::collections::HashSet;

use ndarray::Array2;
use postspec::constraints::{holdout_filter, partition_vocab, ConstraintSet};
use postspec::embedding::EmbeddingSpace;

fn main() -> postspec::Result<()> {
    let words = ["cheap", "inexpensive", "expensive", "costly", "table", "chair", "sofa"];
    let space = EmbeddingSpace::new(words.iter().map(|w| w.to_string()).collect(), Array2::eye(7))?;

    let pair = |a: &str, b: &str| (a.to_string(), b.to_string());
    let (cs, stats) = ConstraintSet::from_pairs(
        vec![pair("cheap", "inexpensive"), pair("expensive", "costly"), pair("inexpensive", "cheap"), pair("chair", "sofa")],
        vec![pair("cheap", "expensive"), pair("chair", "sofa")],
    );
    println!("{} attract, {} repel pairs; dropped {stats:?}", cs.attract.len(), cs.repel.len());

    let part = partition_vocab(&cs, &space);
    println!("seen   {:?}", part.seen_words(&space));
    println!("unseen {:?}", part.unseen_words(&space));
    println!("coverage {:.2}", part.coverage());

    let eval: HashSet<String> = ["cheap".to_string()].into();
    let (kept, removed) = holdout_filter(&cs, &eval);
    let part = partition_vocab(&kept, &space);
    println!("hold-out removed {removed} pair(s); unseen now {:?}", part.unseen_words(&space));
    Ok(())
}
