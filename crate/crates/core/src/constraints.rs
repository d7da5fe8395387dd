//! Attract/repel constraint sets and the seen/unseen vocabulary split.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{info, warn};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};

/// An unordered word pair, stored with its members in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordPair {
    first: String,
    second: String,
}

impl WordPair {
    /// Returns `None` for a self pair.
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Option<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(WordPair { first: a, second: b }),
            std::cmp::Ordering::Greater => Some(WordPair { first: b, second: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn first(&self) -> &str {
        &self.first
    }

    pub fn second(&self) -> &str {
        &self.second
    }

    pub fn contains(&self, word: &str) -> bool {
        self.first == word || self.second == word
    }
}

/// Synonym (attract) and antonym (repel) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub attract: BTreeSet<WordPair>,
    pub repel: BTreeSet<WordPair>,
}

/// Counts of pairs discarded while building a [`ConstraintSet`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_pairs: usize,
    pub duplicates: usize,
    /// Pairs present in both sets; each is removed from both.
    pub conflicts: usize,
}

impl ConstraintSet {
    /// Builds a canonical set from raw pairs, dropping self pairs, duplicates
    /// and pairs that occur as both attract and repel.
    pub fn from_pairs<I, J, S>(attract: I, repel: J) -> (Self, BuildStats)
    where
        I: IntoIterator<Item = (S, S)>,
        J: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut stats = BuildStats::default();
        let attract = collect_pairs(attract, &mut stats);
        let repel = collect_pairs(repel, &mut stats);
        let mut set = ConstraintSet { attract, repel };
        stats.conflicts = set.drop_conflicts();
        (set, stats)
    }

    pub fn is_empty(&self) -> bool {
        self.attract.is_empty() && self.repel.is_empty()
    }

    pub fn len(&self) -> usize {
        self.attract.len() + self.repel.len()
    }

    fn drop_conflicts(&mut self) -> usize {
        let both: Vec<WordPair> = self.attract.intersection(&self.repel).cloned().collect();
        for p in &both {
            self.attract.remove(p);
            self.repel.remove(p);
        }
        both.len()
    }

    /// Every token that occurs in some pair.
    pub fn words(&self) -> BTreeSet<&str> {
        self.attract
            .iter()
            .chain(&self.repel)
            .flat_map(|p| [p.first(), p.second()])
            .collect()
    }

    fn retain(&self, keep: impl Fn(&WordPair) -> bool) -> Self {
        ConstraintSet {
            attract: self.attract.iter().filter(|p| keep(p)).cloned().collect(),
            repel: self.repel.iter().filter(|p| keep(p)).cloned().collect(),
        }
    }
}

fn collect_pairs<S: Into<String>>(
    pairs: impl IntoIterator<Item = (S, S)>,
    stats: &mut BuildStats,
) -> BTreeSet<WordPair> {
    let mut out = BTreeSet::new();
    for (a, b) in pairs {
        match WordPair::new(a, b) {
            None => stats.self_pairs += 1,
            Some(p) => {
                if !out.insert(p) {
                    stats.duplicates += 1;
                }
            }
        }
    }
    out
}

/// Loader options.
#[derive(Debug, Clone, Default)]
pub struct ConstraintOptions {
    /// Fixed prefix removed from every token, e.g. a language tag like `en_`.
    pub strip_prefix: Option<String>,
}

pub fn load_constraints(attract_path: impl AsRef<Path>, repel_path: impl AsRef<Path>) -> Result<ConstraintSet> {
    load_constraints_with(attract_path, repel_path, &ConstraintOptions::default()).map(|(cs, _)| cs)
}

pub fn load_constraints_with(
    attract_path: impl AsRef<Path>,
    repel_path: impl AsRef<Path>,
    opts: &ConstraintOptions,
) -> Result<(ConstraintSet, BuildStats)> {
    let attract = read_pair_file(attract_path.as_ref(), opts)?;
    let repel = read_pair_file(repel_path.as_ref(), opts)?;
    let (cs, stats) = ConstraintSet::from_pairs(attract, repel);
    if stats.self_pairs + stats.conflicts > 0 {
        warn!(
            "constraints: dropped {} self pair(s) and {} attract/repel conflict(s)",
            stats.self_pairs, stats.conflicts
        );
    }
    info!(
        "constraints: {} attract, {} repel pairs",
        cs.attract.len(),
        cs.repel.len()
    );
    Ok((cs, stats))
}

fn read_pair_file(path: &Path, opts: &ConstraintOptions) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file), path, opts)
}

/// Parses one pair per line. Blank lines are skipped.
pub fn read_pairs<R: BufRead>(
    reader: R,
    origin: &Path,
    opts: &ConstraintOptions,
) -> Result<Vec<(String, String)>> {
    let strip = |t: &str| -> String {
        match &opts.strip_prefix {
            Some(p) => t.strip_prefix(p.as_str()).unwrap_or(t).to_owned(),
            None => t.to_owned(),
        }
    };
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [a, b] => pairs.push((strip(a), strip(b))),
            _ => {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected 2 tokens, found {}", fields.len()),
                ))
            }
        }
    }
    Ok(pairs)
}

/// Keeps pairs whose members are both in the space vocabulary.
pub fn filter_to_vocab(cs: &ConstraintSet, space: &EmbeddingSpace) -> ConstraintSet {
    cs.retain(|p| space.contains(p.first()) && space.contains(p.second()))
}

/// Removes every pair that mentions an evaluation word. Returns the
/// filtered set and the number of pairs removed.
pub fn holdout_filter(cs: &ConstraintSet, eval_words: &HashSet<String>) -> (ConstraintSet, usize) {
    let kept = cs.retain(|p| !eval_words.contains(p.first()) && !eval_words.contains(p.second()));
    let removed = cs.len() - kept.len();
    (kept, removed)
}

/// The split of a space's vocabulary into words that occur in constraints
/// (seen) and the rest (unseen). Both lists are row indices in vocabulary
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabularyPartition {
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
}

impl VocabularyPartition {
    pub fn vocab_size(&self) -> usize {
        self.seen.len() + self.unseen.len()
    }

    /// Fraction of the vocabulary that is seen, in `[0, 1]`.
    pub fn coverage(&self) -> f64 {
        if self.vocab_size() == 0 {
            0.0
        } else {
            self.seen.len() as f64 / self.vocab_size() as f64
        }
    }

    pub fn seen_words<'a>(&self, space: &'a EmbeddingSpace) -> Vec<&'a str> {
        self.seen.iter().map(|&i| space.words()[i].as_str()).collect()
    }

    pub fn unseen_words<'a>(&self, space: &'a EmbeddingSpace) -> Vec<&'a str> {
        self.unseen.iter().map(|&i| space.words()[i].as_str()).collect()
    }
}

/// Splits the vocabulary. `cs` is expected to be vocabulary-filtered; tokens
/// outside the space are ignored.
pub fn partition_vocab(cs: &ConstraintSet, space: &EmbeddingSpace) -> VocabularyPartition {
    let words = cs.words();
    let (seen, unseen) = (0..space.len()).partition(|&i| words.contains(space.words()[i].as_str()));
    VocabularyPartition { seen, unseen }
}
