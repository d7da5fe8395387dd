//! Text container for mapping models.
//!
//! ```text
//! postspec-mapping 1
//! kind dffn 2 16
//! dim 10
//! activation swish 1
//! layer 16 10 bias
//! <16 lines of 10 weights, row-major>
//! bias <16 values>
//! ...
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the identical `f64`, so a save/load round trip is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dense, MappingModel, ModelKind};
use crate::error::{Error, Result};
use crate::io::write_atomically;

const MAGIC: &str = "postspec-mapping";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &MappingModel, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {VERSION}")?;
    match model.kind() {
        ModelKind::Linear => writeln!(out, "kind linear")?,
        ModelKind::Dffn { hidden, width } => writeln!(out, "kind dffn {hidden} {width}")?,
    }
    writeln!(out, "dim {}", model.dim())?;
    writeln!(out, "activation swish 1")?;
    for layer in model.layers() {
        let tag = if layer.bias.is_some() { "bias" } else { "nobias" };
        writeln!(out, "layer {} {} {tag}", layer.fan_out(), layer.fan_in())?;
        for row in layer.weight.outer_iter() {
            write_values(&mut out, None, row.iter())?;
        }
        if let Some(b) = &layer.bias {
            write_values(&mut out, Some("bias"), b.iter())?;
        }
    }
    Ok(())
}

fn write_values<'a, W: Write>(out: &mut W, prefix: Option<&str>, values: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    let mut first = true;
    if let Some(p) = prefix {
        out.write_all(p.as_bytes())?;
        first = false;
    }
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    out.write_all(b"\n")
}

pub fn save_model(model: &MappingModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomically(path.as_ref(), |f| {
        let mut out = BufWriter::new(f);
        write_model(model, &mut out)?;
        out.flush()
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MappingModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file), path)
}

struct Lines<'p, R> {
    inner: std::io::Lines<R>,
    origin: &'p Path,
    line: usize,
}

impl<R: BufRead> Lines<'_, R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::io(self.origin, e)),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.origin, self.line, msg)
    }

    fn expect_fields(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut f = l.split_whitespace().map(str::to_owned);
        match f.next() {
            Some(k) if k == key => Ok(f.collect()),
            _ => Err(self.err(format!("expected `{key}` line"))),
        }
    }

    fn parse_usize(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("not a non-negative integer: {s:?}")))
    }

    fn floats(&self, fields: &[&str], expected: usize) -> Result<Vec<f64>> {
        if fields.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| self.err(format!("not a number: {s:?}"))))
            .collect()
    }
}

pub fn read_model<R: BufRead>(reader: R, origin: &Path) -> Result<MappingModel> {
    let mut lines = Lines {
        inner: reader.lines(),
        origin,
        line: 0,
    };
    let header = lines.expect_fields(MAGIC)?;
    if header != [VERSION.to_string()] {
        return Err(Error::ModelFormat(format!("unsupported version {header:?}")));
    }
    let kind_fields = lines.expect_fields("kind")?;
    let kind = match kind_fields.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["linear"] => ModelKind::Linear,
        ["dffn", h, w] => ModelKind::Dffn {
            hidden: lines.parse_usize(h)?,
            width: lines.parse_usize(w)?,
        },
        other => return Err(lines.err(format!("unknown model kind {other:?}"))),
    };
    let dim_fields = lines.expect_fields("dim")?;
    let _dim = lines.parse_usize(dim_fields.first().ok_or_else(|| lines.err("missing dim"))?)?;
    let act = lines.expect_fields("activation")?;
    if act != ["swish", "1"] {
        return Err(Error::ModelFormat(format!("unsupported activation {act:?}")));
    }
    let n_layers = match kind {
        ModelKind::Linear => 1,
        ModelKind::Dffn { hidden, .. } => hidden + 1,
    };
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let f = lines.expect_fields("layer")?;
        if f.len() != 3 {
            return Err(lines.err("layer line needs `out in bias|nobias`"));
        }
        let (out, inp) = (lines.parse_usize(&f[0])?, lines.parse_usize(&f[1])?);
        let has_bias = match f[2].as_str() {
            "bias" => true,
            "nobias" => false,
            other => return Err(lines.err(format!("unknown bias flag {other:?}"))),
        };
        let mut data = Vec::with_capacity(out * inp);
        for _ in 0..out {
            let l = lines.next()?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            data.extend(lines.floats(&fields, inp)?);
        }
        let weight = Array2::from_shape_vec((out, inp), data).expect("sizes checked");
        let bias = if has_bias {
            let l = lines.next()?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.first() != Some(&"bias") {
                return Err(lines.err("expected `bias` line"));
            }
            Some(Array1::from(lines.floats(&fields[1..], out)?))
        } else {
            None
        };
        layers.push(Dense { weight, bias });
    }
    MappingModel::from_layers(kind, layers).map_err(|e| Error::ModelFormat(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;

    fn round_trip(m: &MappingModel) -> MappingModel {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        read_model(buf.as_slice(), Path::new("mem")).unwrap()
    }

    #[test]
    fn exact_round_trip() {
        for kind in [ModelKind::Linear, ModelKind::Dffn { hidden: 2, width: 7 }, ModelKind::Dffn { hidden: 0, width: 0 }] {
            let m = MappingModel::new(kind, 5, &mut stage_rng(3, "fmt")).unwrap();
            assert_eq!(round_trip(&m), m);
        }
    }

    #[test]
    fn rejects_truncated_file() {
        let m = MappingModel::new(ModelKind::Dffn { hidden: 1, width: 3 }, 2, &mut stage_rng(3, "fmt")).unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 10);
        assert!(read_model(buf.as_slice(), Path::new("mem")).is_err());
    }

    #[test]
    fn rejects_other_versions() {
        let text = "postspec-mapping 2\nkind linear\n";
        assert!(read_model(text.as_bytes(), Path::new("mem")).is_err());
    }
}
