//! Dense word-vector spaces: text I/O, normalisation and cosine similarity.
//!
//! The on-disk format is the plain text layout shared by GloVe, fastText and
//! word2vec text exports: one token per line followed by its components,
//! with an optional `count dim` header line.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::io::write_atomically;

/// An ordered vocabulary with one dense row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl EmbeddingSpace {
    /// Builds a space, checking that tokens are unique, the row count matches
    /// the vocabulary and every component is finite.
    pub fn new(words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if words.len() != vectors.nrows() {
            return Err(Error::InvalidSpace(format!(
                "{} words but {} rows",
                words.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::InvalidSpace("dimensionality must be at least 1".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate token {w:?}")));
            }
        }
        if let Some((row, _)) = vectors
            .outer_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidSpace(format!(
                "non-finite component in row for {:?}",
                words[row]
            )));
        }
        Ok(EmbeddingSpace {
            words,
            index,
            vectors,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), Array2::zeros((0, dim)))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(word).map(|i| self.vectors.row(i))
    }

    /// Returns a copy with the rows at `rows` replaced by `values`.
    ///
    /// `values` has one row per entry of `rows`, in the same order.
    pub fn with_rows_replaced(&self, rows: &[usize], values: ArrayView2<'_, f64>) -> Result<Self> {
        if values.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: values.ncols(),
            });
        }
        if values.nrows() != rows.len() {
            return Err(Error::InvalidSpace(format!(
                "{} replacement rows for {} indices",
                values.nrows(),
                rows.len()
            )));
        }
        let mut vectors = self.vectors.clone();
        for (&r, v) in rows.iter().zip(values.outer_iter()) {
            vectors.row_mut(r).assign(&v);
        }
        Self::new(self.words.clone(), vectors)
    }

    /// Subspace holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        EmbeddingSpace::new(
            rows.iter().map(|&r| self.words[r].clone()).collect(),
            self.vectors.select(Axis(0), rows),
        )
        .expect("a subset of a valid space is valid")
    }

    pub fn into_parts(self) -> (Vec<String>, Array2<f64>) {
        (self.words, self.vectors)
    }

    /// Rescales every nonzero row to unit Euclidean norm.
    ///
    /// Zero rows are kept as zero and reported in [`Normalized::zero_rows`].
    pub fn unit_normalize(&self) -> Normalized {
        let mut vectors = self.vectors.clone();
        let zero_rows = normalize_rows(&mut vectors);
        if !zero_rows.is_empty() {
            warn!("{} zero vector(s) left unnormalised", zero_rows.len());
        }
        Normalized {
            space: EmbeddingSpace {
                words: self.words.clone(),
                index: self.index.clone(),
                vectors,
            },
            zero_rows,
        }
    }
}

/// Result of [`EmbeddingSpace::unit_normalize`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub space: EmbeddingSpace,
    /// Row indices of zero vectors, which cannot be normalised.
    pub zero_rows: Vec<usize>,
}

/// Normalises rows in place and returns the indices of zero rows.
pub(crate) fn normalize_rows(m: &mut Array2<f64>) -> Vec<usize> {
    let mut zero_rows = Vec::new();
    for (i, mut row) in m.outer_iter_mut().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        } else {
            zero_rows.push(i);
        }
    }
    zero_rows
}

/// Cosine similarity, clamped to `[-1, 1]`. A zero vector has similarity 0
/// with everything.
pub fn cosine(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(cosine_unchecked(u, v))
}

pub(crate) fn cosine_unchecked(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Options for [`load_embeddings_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Keep at most this many distinct words.
    pub limit: Option<usize>,
}

/// Summary of what the loader skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub header: Option<(usize, usize)>,
    pub duplicates: usize,
}

pub fn load_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<EmbeddingSpace> {
    load_embeddings_with(path, LoadOptions { limit }).map(|(space, _)| space)
}

pub fn load_embeddings_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<(EmbeddingSpace, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path, opts)
}

/// Parses the text format from any reader. `origin` is only used in errors.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    origin: &Path,
    opts: LoadOptions,
) -> Result<(EmbeddingSpace, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut dim: Option<usize> = None;
    let mut words = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut data: Vec<f64> = Vec::new();
    let limit = opts.limit.unwrap_or(usize::MAX);

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 {
            if let (Ok(count), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                if d < 1 {
                    return Err(Error::parse(origin, lineno, "header declares dimensionality 0"));
                }
                stats.header = Some((count, d));
                dim = Some(d);
                continue;
            }
        }
        if words.len() >= limit {
            break;
        }
        let found = fields.len() - 1;
        let d = *dim.get_or_insert(found);
        if d < 1 {
            return Err(Error::parse(origin, lineno, "line has a token but no components"));
        }
        if found != d {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected {d} components, found {found}"),
            ));
        }
        let word = fields[0];
        if seen.contains(word) {
            stats.duplicates += 1;
            continue;
        }
        for (c, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::parse(origin, lineno, format!("component {} is not a number: {f:?}", c + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(origin, lineno, format!("non-finite component {f:?}")));
            }
            data.push(v);
        }
        seen.insert(word.to_owned());
        words.push(word.to_owned());
    }

    if stats.duplicates > 0 {
        warn!(
            "{}: {} duplicate token(s) ignored, first occurrence kept",
            origin.display(),
            stats.duplicates
        );
    }
    let dim = dim.ok_or_else(|| Error::parse(origin, 0, "no vectors and no header"))?;
    let vectors = Array2::from_shape_vec((words.len(), dim), data)
        .expect("row lengths were checked while parsing");
    let space = EmbeddingSpace::new(words, vectors)?;
    Ok((space, stats))
}

/// Writes the space with a `count dim` header. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_embeddings<W: Write>(space: &EmbeddingSpace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", space.len(), space.dim())?;
    for (word, row) in space.words.iter().zip(space.vectors.outer_iter()) {
        out.write_all(word.as_bytes())?;
        for v in row {
            write!(out, " {v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Saves via a temporary file in the target directory, renamed into place.
pub fn save_embeddings(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    write_atomically(path.as_ref(), |w| {
        let mut out = BufWriter::new(w);
        write_embeddings(space, &mut out)?;
        out.flush()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(text: &str) -> Result<(EmbeddingSpace, LoadStats)> {
        read_embeddings(text.as_bytes(), Path::new("mem"), LoadOptions::default())
    }

    #[test]
    fn parses_plain_rows() {
        let (s, _) = parse("a 1 0\nb 0 1\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.vector("b").unwrap(), array![0.0, 1.0]);
    }

    #[test]
    fn first_duplicate_wins() {
        let (s, stats) = parse("a 1 0\nb 0 1\na 9 9\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.vector("a").unwrap(), array![1.0, 0.0]);
        assert_eq!(stats.duplicates, 1);
    }

    #[test]
    fn detects_header() {
        let (s, stats) = parse("2 3\na 1 2 3\nb 4 5 6\n").unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.len(), 2);
        assert_eq!(stats.header, Some((2, 3)));
    }

    #[test]
    fn limit_ignores_later_rows() {
        let text = "a 1 0\nb 0 1\nc 1 1 1\n";
        let (s, _) =
            read_embeddings(text.as_bytes(), Path::new("mem"), LoadOptions { limit: Some(2) })
                .unwrap();
        assert_eq!(s.words(), ["a", "b"]);
    }

    #[test]
    fn inconsistent_columns_name_the_line() {
        match parse("a 1 0\nb 0 1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn token_without_components_is_rejected() {
        assert!(parse("a\n").is_err());
        assert!(parse("2 0\n").is_err());
    }

    #[test]
    fn empty_space_round_trips_through_header() {
        let s = EmbeddingSpace::empty(4).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0 4\n");
        let (back, _) = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.dim(), 4);
        assert!(back.is_empty());
    }

    #[test]
    fn single_value_line() {
        let s = EmbeddingSpace::new(vec!["a".into()], array![[0.5]]).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l == "a 0.5"));
    }

    #[test]
    fn normalises_and_flags_zero_rows() {
        let s = EmbeddingSpace::new(
            vec!["x".into(), "y".into(), "z".into()],
            array![[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]],
        )
        .unwrap();
        let n = s.unit_normalize();
        assert!((n.space.row(0)[0] - 0.6).abs() < 1e-12);
        assert!((n.space.row(0)[1] - 0.8).abs() < 1e-12);
        assert_eq!(n.space.row(1), array![1.0, 0.0]);
        assert_eq!(n.space.row(2), array![0.0, 0.0]);
        assert_eq!(n.zero_rows, vec![2]);
    }

    #[test]
    fn cosine_examples() {
        let c = |a: [f64; 2], b: [f64; 2]| {
            cosine(ArrayView1::from(&a), ArrayView1::from(&b)).unwrap()
        };
        assert_eq!(c([1.0, 0.0], [0.0, 1.0]), 0.0);
        assert!((c([2.0, 2.0], [1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert!((c([1.0, 0.0], [1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(c([0.0, 0.0], [1.0, 1.0]), 0.0);
    }

    #[test]
    fn cosine_rejects_length_mismatch() {
        let a = [1.0, 0.0];
        let b = [1.0];
        assert!(cosine(ArrayView1::from(&a), ArrayView1::from(&b)).is_err());
    }

    #[test]
    fn rejects_non_finite_rows() {
        assert!(EmbeddingSpace::new(vec!["a".into()], array![[f64::NAN]]).is_err());
        assert!(parse("a inf 1\n").is_err());
    }
}
