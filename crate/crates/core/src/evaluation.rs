//! Word-similarity evaluation with Spearman's rank correlation.

use std::collections::{HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSet, WordPair};
use crate::embedding::{cosine_unchecked, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::mapping::ModelKind;
use crate::pipeline::{run_pipeline, PipelineConfig};

/// Scored word pairs such as SimLex-999 or SimVerb-3500.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset {
    pub name: String,
    pub pairs: Vec<(String, String, f64)>,
}

impl EvalDataset {
    /// Builds a dataset, dropping repeated unordered pairs (first kept).
    pub fn new(name: impl Into<String>, pairs: Vec<(String, String, f64)>) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(pairs.len());
        for (a, b, s) in pairs {
            if !s.is_finite() {
                return Err(Error::InvalidConfig(format!("{name}: non-finite score for ({a}, {b})")));
            }
            let key = WordPair::new(a.clone(), b.clone()).map(|p| (p.first().to_owned(), p.second().to_owned()));
            let key = key.unwrap_or_else(|| (a.clone(), b.clone()));
            if seen.insert(key) {
                out.push((a, b, s));
            } else {
                warn!("{name}: duplicate pair ({a}, {b}) ignored");
            }
        }
        Ok(EvalDataset { name, pairs: out })
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().flat_map(|(a, b, _)| [a.as_str(), b.as_str()])
    }
}

/// Union of all words in the given datasets, e.g. for the hold-out filter.
pub fn eval_vocabulary<'a>(datasets: impl IntoIterator<Item = &'a EvalDataset>) -> HashSet<String> {
    datasets
        .into_iter()
        .flat_map(|d| d.words().map(str::to_owned).collect::<Vec<_>>())
        .collect()
}

pub fn load_eval(path: impl AsRef<Path>) -> Result<EvalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    read_eval(BufReader::new(file), path, name)
}

/// Parses `word1 word2 score` lines. A first line whose third column is not
/// numeric is treated as a header.
pub fn read_eval<R: BufRead>(reader: R, origin: &Path, name: impl Into<String>) -> Result<EvalDataset> {
    let mut pairs = Vec::new();
    let mut first_content = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let is_first = std::mem::replace(&mut first_content, false);
        if fields.len() < 3 {
            return Err(Error::parse(origin, i + 1, format!("expected 3 columns, found {}", fields.len())));
        }
        match fields[2].parse::<f64>() {
            Ok(score) if score.is_finite() => pairs.push((fields[0].to_owned(), fields[1].to_owned(), score)),
            _ if is_first => continue,
            _ => {
                return Err(Error::parse(origin, i + 1, format!("score is not a number: {:?}", fields[2])));
            }
        }
    }
    EvalDataset::new(name, pairs)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman_rho(gold: &[f64], pred: &[f64]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    if gold.len() < 2 {
        return Err(Error::InsufficientData("Spearman's rho needs at least 2 pairs".into()));
    }
    pearson(&average_ranks(gold), &average_ranks(pred))
        .ok_or_else(|| Error::Degenerate("a ranking has zero variance; rho is undefined".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub rho: f64,
    pub covered: usize,
    pub total: usize,
    /// How out-of-vocabulary pairs were handled.
    pub oov: String,
    /// Free-form description of the evaluated configuration.
    pub config: Option<String>,
}

/// Scores every in-vocabulary pair by cosine and correlates with the gold
/// ratings. Pairs with an out-of-vocabulary word are skipped and counted.
pub fn evaluate_space(space: &EmbeddingSpace, ds: &EvalDataset) -> Result<EvalReport> {
    let mut gold = Vec::with_capacity(ds.pairs.len());
    let mut pred = Vec::with_capacity(ds.pairs.len());
    for (a, b, score) in &ds.pairs {
        if let (Some(u), Some(v)) = (space.vector(a), space.vector(b)) {
            gold.push(*score);
            pred.push(cosine_unchecked(u, v));
        }
    }
    if gold.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: only {} of {} pairs are in the vocabulary",
            ds.name,
            gold.len(),
            ds.pairs.len()
        )));
    }
    let rho = spearman_rho(&gold, &pred).map_err(|e| match e {
        Error::Degenerate(m) => Error::Degenerate(format!("{}: {m}", ds.name)),
        other => other,
    })?;
    Ok(EvalReport {
        dataset: ds.name.clone(),
        rho,
        covered: gold.len(),
        total: ds.pairs.len(),
        oov: "skip".into(),
        config: None,
    })
}

/// Evaluates several datasets in parallel, preserving their order.
pub fn evaluate_all(space: &EmbeddingSpace, datasets: &[EvalDataset]) -> Result<Vec<EvalReport>> {
    datasets.par_iter().map(|d| evaluate_space(space, d)).collect()
}

/// Aggregated correlations of one dataset over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub dataset: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub rhos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hidden: usize,
    pub cells: Vec<SweepCell>,
}

/// Model used for depth `hidden`: zero hidden layers means the linear map.
pub fn sweep_model(hidden: usize, width: usize) -> ModelKind {
    if hidden == 0 {
        ModelKind::Linear
    } else {
        ModelKind::Dffn { hidden, width }
    }
}

/// Runs the pipeline for each depth with `runs` seeds (`base.map.seed`,
/// `+1`, ...) and summarises the resulting correlations.
pub fn depth_sweep(
    space: &EmbeddingSpace,
    cs: &ConstraintSet,
    datasets: &[EvalDataset],
    hidden: &[usize],
    width: usize,
    runs: usize,
    base: &PipelineConfig,
) -> Result<Vec<SweepRow>> {
    if runs == 0 {
        return Err(Error::InvalidConfig("a sweep needs at least one run".into()));
    }
    let mut rows = Vec::with_capacity(hidden.len());
    for &h in hidden {
        let mut per_dataset: Vec<Vec<f64>> = vec![Vec::with_capacity(runs); datasets.len()];
        for r in 0..runs {
            let mut cfg = base.with_seed(base.map.seed.wrapping_add(r as u64));
            cfg.model = sweep_model(h, width);
            let out = run_pipeline(space, cs, &cfg)?;
            for (i, rep) in evaluate_all(&out.space, datasets)?.into_iter().enumerate() {
                per_dataset[i].push(rep.rho);
            }
        }
        let cells = datasets
            .iter()
            .zip(per_dataset)
            .map(|(d, rhos)| SweepCell {
                dataset: d.name.clone(),
                mean: rhos.iter().sum::<f64>() / rhos.len() as f64,
                min: rhos.iter().cloned().fold(f64::INFINITY, f64::min),
                max: rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                rhos,
            })
            .collect();
        let row = SweepRow { hidden: h, cells };
        info!("sweep H={h}: {:?}", row.cells.iter().map(|c| (&c.dataset, c.mean)).collect::<Vec<_>>());
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spearman_examples() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 3.0, 4.0]).unwrap(), 0.8);
    }

    #[test]
    fn spearman_errors() {
        assert!(spearman_rho(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
        assert!(matches!(spearman_rho(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn parses_with_header() {
        let text = "word1\tword2\tscore\nold new 1.58\n";
        let d = read_eval(text.as_bytes(), Path::new("sl"), "sl").unwrap();
        assert_eq!(d.pairs, vec![("old".into(), "new".into(), 1.58)]);
    }

    #[test]
    fn non_numeric_score_is_an_error() {
        let text = "old new 1.58\nbad pair x\n";
        match read_eval(text.as_bytes(), Path::new("sl"), "sl") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_unordered_pairs_are_dropped() {
        let d = EvalDataset::new("d", vec![("a".into(), "b".into(), 1.0), ("b".into(), "a".into(), 2.0)]).unwrap();
        assert_eq!(d.pairs.len(), 1);
    }

    fn space() -> EmbeddingSpace {
        // cos(a,b)=1, cos(a,c)=0.8, cos(a,d)=0, cos(b,c)=0.8
        EmbeddingSpace::new(
            ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect(),
            array![[1.0, 0.0], [1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn oov_pairs_are_skipped_and_counted() {
        let d = EvalDataset::new(
            "d",
            vec![
                ("a".into(), "c".into(), 8.0),
                ("a".into(), "d".into(), 1.0),
                ("a".into(), "zzz".into(), 5.0),
            ],
        )
        .unwrap();
        let r = evaluate_space(&space(), &d).unwrap();
        assert_eq!((r.covered, r.total), (2, 3));
    }

    #[test]
    fn matching_ranks_give_one() {
        let d = EvalDataset::new(
            "d",
            vec![
                ("a".into(), "b".into(), 10.0),
                ("a".into(), "c".into(), 7.0),
                ("c".into(), "d".into(), 5.0),
                ("a".into(), "d".into(), 0.5),
            ],
        )
        .unwrap();
        assert!((evaluate_space(&space(), &d).unwrap().rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_vectors_everywhere_is_degenerate() {
        let d = EvalDataset::new(
            "d",
            vec![("a".into(), "b".into(), 1.0), ("a".into(), "e".into(), 2.0), ("b".into(), "e".into(), 3.0)],
        )
        .unwrap();
        assert!(matches!(evaluate_space(&space(), &d), Err(Error::Degenerate(_))));
    }
}
