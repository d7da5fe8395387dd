//! ATTRACT-REPEL fine-tuning of the seen subspace, and a retrofitting
//! baseline.
//!
//! Training works on mini-batches of constraint pairs. Each batch is turned
//! into a small local matrix holding the distinct words it mentions; negative
//! examples are picked among those rows, and the hinge costs plus the
//! distributional regulariser are differentiated with respect to every row.

use std::collections::HashMap;

use log::{debug, info, warn};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::constraints::{filter_to_vocab, partition_vocab, ConstraintSet, WordPair};
use crate::embedding::{cosine_unchecked, normalize_rows, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::optim::Adagrad;
use crate::rng::stage_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArConfig {
    pub delta_att: f64,
    pub delta_rep: f64,
    pub lambda_reg: f64,
    pub batch_att: usize,
    pub batch_rep: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ArConfig {
    fn default() -> Self {
        ArConfig {
            delta_att: 0.6,
            delta_rep: 0.0,
            lambda_reg: 1e-9,
            batch_att: 50,
            batch_rep: 50,
            epochs: 5,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

impl ArConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.delta_att >= 0.0 && self.delta_rep >= 0.0) {
            return bad("margins must be non-negative");
        }
        if self.lambda_reg.is_nan() || self.lambda_reg < 0.0 {
            return bad("lambda_reg must be non-negative");
        }
        if self.batch_att == 0 || self.batch_rep == 0 {
            return bad("batch sizes must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    Attract,
    Repel,
}

/// Pairs of one kind in batch-local coordinates.
///
/// `words` maps local row `i` to a row of the matrix being trained; `pairs`
/// index local rows; `negatives[i]` is the negative pair `(t_l, t_r)` for
/// `pairs[i]`, or `None` when the batch had no eligible candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub kind: PairKind,
    pub words: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub negatives: Vec<Option<(usize, usize)>>,
}

impl MiniBatch {
    /// Builds the local word list from pairs given in global row indices.
    /// Negatives are left unassigned.
    pub fn from_global_pairs(kind: PairKind, global: &[(usize, usize)]) -> Self {
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut words = Vec::new();
        let mut id = |g: usize| {
            *local.entry(g).or_insert_with(|| {
                words.push(g);
                words.len() - 1
            })
        };
        let pairs: Vec<(usize, usize)> = global.iter().map(|&(l, r)| (id(l), id(r))).collect();
        let negatives = vec![None; pairs.len()];
        MiniBatch {
            kind,
            words,
            pairs,
            negatives,
        }
    }

    /// Number of pairs without a negative example.
    pub fn skipped(&self) -> usize {
        self.negatives.iter().filter(|n| n.is_none()).count()
    }
}

/// Picks in-batch negatives for every pair.
///
/// `vectors` holds the batch rows (local order). For attract pairs the
/// negative of `x_l` is the candidate with the highest cosine to `x_l`; for
/// repel pairs the lowest. Candidates exclude the pair's own two words and
/// zero vectors. Ties go to the lowest local index.
pub fn select_negatives(
    vectors: ArrayView2<'_, f64>,
    pairs: &[(usize, usize)],
    kind: PairKind,
) -> Vec<Option<(usize, usize)>> {
    let nonzero: Vec<bool> = vectors
        .outer_iter()
        .map(|r| r.iter().any(|&v| v != 0.0))
        .collect();
    let pick = |anchor: usize, exclude: (usize, usize)| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..vectors.nrows() {
            if c == exclude.0 || c == exclude.1 || !nonzero[c] {
                continue;
            }
            let sim = cosine_unchecked(vectors.row(anchor), vectors.row(c));
            let better = match (best, kind) {
                (None, _) => true,
                (Some((_, b)), PairKind::Attract) => sim > b,
                (Some((_, b)), PairKind::Repel) => sim < b,
            };
            if better {
                best = Some((c, sim));
            }
        }
        best.map(|(c, _)| c)
    };
    pairs
        .iter()
        .map(|&(l, r)| Some((pick(l, (l, r))?, pick(r, (l, r))?)))
        .collect()
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b)
}

/// Attract hinge cost of a batch, summed over pairs with negatives.
pub fn attract_cost(
    vectors: ArrayView2<'_, f64>,
    pairs: &[(usize, usize)],
    negatives: &[Option<(usize, usize)>],
    delta_att: f64,
) -> f64 {
    pairs
        .iter()
        .zip(negatives)
        .filter_map(|(&(l, r), n)| n.map(|(tl, tr)| (l, r, tl, tr)))
        .map(|(l, r, tl, tr)| {
            let (xl, xr) = (vectors.row(l), vectors.row(r));
            let pair = dot(xl, xr);
            relu(delta_att + dot(xl, vectors.row(tl)) - pair)
                + relu(delta_att + dot(xr, vectors.row(tr)) - pair)
        })
        .sum()
}

/// Repel hinge cost of a batch, summed over pairs with negatives.
pub fn repel_cost(
    vectors: ArrayView2<'_, f64>,
    pairs: &[(usize, usize)],
    negatives: &[Option<(usize, usize)>],
    delta_rep: f64,
) -> f64 {
    pairs
        .iter()
        .zip(negatives)
        .filter_map(|(&(l, r), n)| n.map(|(tl, tr)| (l, r, tl, tr)))
        .map(|(l, r, tl, tr)| {
            let (xl, xr) = (vectors.row(l), vectors.row(r));
            let pair = dot(xl, xr);
            relu(delta_rep + pair - dot(xl, vectors.row(tl)))
                + relu(delta_rep + pair - dot(xr, vectors.row(tr)))
        })
        .sum()
}

/// Distributional regulariser: `lambda_reg` times the (unsquared) Euclidean
/// distance of each row from its original vector.
pub fn reg_cost(current: ArrayView2<'_, f64>, original: ArrayView2<'_, f64>, lambda_reg: f64) -> f64 {
    current
        .outer_iter()
        .zip(original.outer_iter())
        .map(|(x, x0)| lambda_reg * (&x0 - &x).mapv(|v| v * v).sum().sqrt())
        .sum()
}

/// Total cost of one batch and its gradient with respect to every local row.
///
/// `negatives` are taken as fixed indices, so the gradient is that of a
/// piecewise-smooth function; at hinge kinks the zero subgradient is used,
/// and likewise for the regulariser at zero displacement.
pub fn batch_cost_and_grad(
    vectors: ArrayView2<'_, f64>,
    original: ArrayView2<'_, f64>,
    batch: &MiniBatch,
    cfg: &ArConfig,
) -> (f64, Array2<f64>) {
    let mut grad = Array2::<f64>::zeros(vectors.raw_dim());
    let mut cost = 0.0;
    let add = |grad: &mut Array2<f64>, row: usize, v: ArrayView1<'_, f64>, scale: f64| {
        grad.row_mut(row).scaled_add(scale, &v);
    };

    for (&(l, r), neg) in batch.pairs.iter().zip(&batch.negatives) {
        let Some((tl, tr)) = *neg else { continue };
        let (xl, xr) = (vectors.row(l), vectors.row(r));
        let (t_l, t_r) = (vectors.row(tl), vectors.row(tr));
        let pair = dot(xl, xr);
        match batch.kind {
            PairKind::Attract => {
                let z1 = cfg.delta_att + dot(xl, t_l) - pair;
                if z1 > 0.0 {
                    cost += z1;
                    add(&mut grad, l, t_l, 1.0);
                    add(&mut grad, l, xr, -1.0);
                    add(&mut grad, tl, xl, 1.0);
                    add(&mut grad, r, xl, -1.0);
                }
                let z2 = cfg.delta_att + dot(xr, t_r) - pair;
                if z2 > 0.0 {
                    cost += z2;
                    add(&mut grad, r, t_r, 1.0);
                    add(&mut grad, r, xl, -1.0);
                    add(&mut grad, tr, xr, 1.0);
                    add(&mut grad, l, xr, -1.0);
                }
            }
            PairKind::Repel => {
                let z1 = cfg.delta_rep + pair - dot(xl, t_l);
                if z1 > 0.0 {
                    cost += z1;
                    add(&mut grad, l, xr, 1.0);
                    add(&mut grad, l, t_l, -1.0);
                    add(&mut grad, r, xl, 1.0);
                    add(&mut grad, tl, xl, -1.0);
                }
                let z2 = cfg.delta_rep + pair - dot(xr, t_r);
                if z2 > 0.0 {
                    cost += z2;
                    add(&mut grad, l, xr, 1.0);
                    add(&mut grad, r, xl, 1.0);
                    add(&mut grad, r, t_r, -1.0);
                    add(&mut grad, tr, xr, -1.0);
                }
            }
        }
    }

    if cfg.lambda_reg > 0.0 {
        for (i, (x, x0)) in vectors.outer_iter().zip(original.outer_iter()).enumerate() {
            let diff = &x - &x0;
            let norm = diff.dot(&diff).sqrt();
            cost += cfg.lambda_reg * norm;
            if norm > 0.0 {
                grad.row_mut(i).scaled_add(cfg.lambda_reg / norm, &diff);
            }
        }
    }
    (cost, grad)
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub cost: f64,
    pub batches: usize,
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArReport {
    pub seen_words: usize,
    pub attract_pairs: usize,
    pub repel_pairs: usize,
    pub zero_vectors: usize,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct Specialised {
    pub space: EmbeddingSpace,
    pub report: ArReport,
}

/// Seen-word working set: rows of the trained matrix and pair lists in those
/// coordinates.
struct SeenSubspace {
    rows: Vec<usize>,
    attract: Vec<(usize, usize)>,
    repel: Vec<(usize, usize)>,
}

impl SeenSubspace {
    fn new(space: &EmbeddingSpace, cs: &ConstraintSet) -> Self {
        let part = partition_vocab(cs, space);
        let local: HashMap<usize, usize> =
            part.seen.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let to_local = |pairs: &std::collections::BTreeSet<WordPair>| -> Vec<(usize, usize)> {
            pairs
                .iter()
                .map(|p| {
                    let l = space.index_of(p.first()).expect("filtered");
                    let r = space.index_of(p.second()).expect("filtered");
                    (local[&l], local[&r])
                })
                .collect()
        };
        SeenSubspace {
            attract: to_local(&cs.attract),
            repel: to_local(&cs.repel),
            rows: part.seen,
        }
    }
}

/// Batch schedule for one epoch: attract and repel batches alternate; the
/// shorter list is cycled until the longer one is used up.
fn interleave(attract: Vec<Vec<(usize, usize)>>, repel: Vec<Vec<(usize, usize)>>) -> Vec<(PairKind, Vec<(usize, usize)>)> {
    let n = attract.len().max(repel.len());
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        if !attract.is_empty() {
            out.push((PairKind::Attract, attract[i % attract.len()].clone()));
        }
        if !repel.is_empty() {
            out.push((PairKind::Repel, repel[i % repel.len()].clone()));
        }
    }
    out
}

fn run_batch(
    params: &mut Array2<f64>,
    original: &Array2<f64>,
    kind: PairKind,
    pairs: &[(usize, usize)],
    cfg: &ArConfig,
    opt: Option<&mut Adagrad>,
) -> (f64, usize) {
    let mut batch = MiniBatch::from_global_pairs(kind, pairs);
    let local = params.select(Axis(0), &batch.words);
    let local_orig = original.select(Axis(0), &batch.words);
    batch.negatives = select_negatives(local.view(), &batch.pairs, kind);
    let (cost, grad) = batch_cost_and_grad(local.view(), local_orig.view(), &batch, cfg);
    if let Some(opt) = opt {
        opt.step_rows(params, &batch.words, grad.view());
    }
    (cost, batch.skipped())
}

/// Runs ATTRACT-REPEL and returns the space with seen rows specialised.
///
/// Seen vectors are unit-normalised before training and after every epoch;
/// the normalised starting vectors serve as the regularisation anchors.
/// Unseen rows are returned bit-for-bit unchanged.
pub fn ar_specialise(space: &EmbeddingSpace, cs: &ConstraintSet, cfg: &ArConfig) -> Result<Specialised> {
    cfg.validate()?;
    let cs = filter_to_vocab(cs, space);
    if cs.is_empty() {
        warn!("attract-repel: no in-vocabulary constraints, returning input unchanged");
        return Ok(Specialised {
            space: space.clone(),
            report: ArReport::default(),
        });
    }
    let sub = SeenSubspace::new(space, &cs);
    let mut params = space.vectors().select(Axis(0), &sub.rows);
    let zero_vectors = normalize_rows(&mut params).len();
    if zero_vectors > 0 {
        warn!("attract-repel: {zero_vectors} seen word(s) have zero vectors");
    }
    let original = params.clone();
    let mut opt = Adagrad::new(cfg.learning_rate, params.dim());
    let mut rng = stage_rng(cfg.seed, "attract-repel");
    let mut report = ArReport {
        seen_words: sub.rows.len(),
        attract_pairs: sub.attract.len(),
        repel_pairs: sub.repel.len(),
        zero_vectors,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    info!(
        "attract-repel: {} seen words, {} attract / {} repel pairs",
        report.seen_words, report.attract_pairs, report.repel_pairs
    );

    let mut attract = sub.attract.clone();
    let mut repel = sub.repel.clone();
    for epoch in 0..cfg.epochs {
        attract.shuffle(&mut rng);
        repel.shuffle(&mut rng);
        let schedule = interleave(
            attract.chunks(cfg.batch_att).map(<[_]>::to_vec).collect(),
            repel.chunks(cfg.batch_rep).map(<[_]>::to_vec).collect(),
        );
        let mut stats = EpochStats::default();
        for (kind, pairs) in &schedule {
            let (cost, skipped) = run_batch(&mut params, &original, *kind, pairs, cfg, Some(&mut opt));
            stats.cost += cost;
            stats.skipped_pairs += skipped;
            stats.batches += 1;
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "attract-repel diverged in epoch {}",
                epoch + 1
            )));
        }
        normalize_rows(&mut params);
        debug!(
            "attract-repel epoch {}: cost {:.6}, {} batches, {} pairs without negatives",
            epoch + 1,
            stats.cost,
            stats.batches,
            stats.skipped_pairs
        );
        report.epochs.push(stats);
    }

    let space = space.with_rows_replaced(&sub.rows, params.view())?;
    Ok(Specialised { space, report })
}

/// Total ATTRACT-REPEL cost of `current` against anchors `original`, over a
/// fixed, unshuffled batching of the constraints.
///
/// Both spaces must share a vocabulary. Vectors are used as given.
pub fn constraint_cost(
    current: &EmbeddingSpace,
    original: &EmbeddingSpace,
    cs: &ConstraintSet,
    cfg: &ArConfig,
) -> Result<f64> {
    if current.words() != original.words() {
        return Err(Error::InvalidSpace("spaces do not share a vocabulary".into()));
    }
    let cs = filter_to_vocab(cs, current);
    let sub = SeenSubspace::new(current, &cs);
    let mut params = current.vectors().select(Axis(0), &sub.rows);
    let anchors = original.vectors().select(Axis(0), &sub.rows);
    let schedule = interleave(
        sub.attract.chunks(cfg.batch_att).map(<[_]>::to_vec).collect(),
        sub.repel.chunks(cfg.batch_rep).map(<[_]>::to_vec).collect(),
    );
    Ok(schedule
        .iter()
        .map(|(kind, pairs)| run_batch(&mut params, &anchors, *kind, pairs, cfg, None).0)
        .sum())
}

/// Iterative retrofitting over attract pairs only.
///
/// Each round updates every word with at least one attract neighbour to the
/// average of its neighbours' current vectors and its original vector, all
/// words at once. Repel pairs are ignored.
pub fn retrofit_specialise(space: &EmbeddingSpace, cs: &ConstraintSet, iterations: usize) -> Result<EmbeddingSpace> {
    let cs = filter_to_vocab(cs, space);
    let mut neighbours: HashMap<usize, Vec<usize>> = HashMap::new();
    for p in &cs.attract {
        let a = space.index_of(p.first()).expect("filtered");
        let b = space.index_of(p.second()).expect("filtered");
        neighbours.entry(a).or_default().push(b);
        neighbours.entry(b).or_default().push(a);
    }
    let mut rows: Vec<usize> = neighbours.keys().copied().collect();
    rows.sort_unstable();
    let original = space.vectors();
    let mut current = original.to_owned();
    for _ in 0..iterations {
        let mut next = current.clone();
        for &i in &rows {
            let nb = &neighbours[&i];
            let mut acc = original.row(i).to_owned();
            for &j in nb {
                acc += &current.row(j);
            }
            acc /= (nb.len() + 1) as f64;
            next.row_mut(i).assign(&acc);
        }
        current = next;
    }
    let updated = current.select(Axis(0), &rows);
    space.with_rows_replaced(&rows, updated.view())
}
