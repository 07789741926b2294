//! Reading and writing feature tables.
//!
//! Two formats are supported:
//!
//! * **CSV**: comma separated, one sample per line. An optional single header
//!   line is allowed; if its last field is `label`, the last column of every
//!   row is an integer class label.
//! * **OTSF**: the bytes `OTSF`, then little-endian `u32 n`, `u32 d`,
//!   `u8 has_labels`, `n * d` row-major `f64` values and, if `has_labels` is
//!   non-zero, `n` `i32` labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::FeatureTable;
use crate::error::{Error, Location, Result};

pub const OTSF_MAGIC: &[u8; 4] = b"OTSF";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Otsf,
}

impl Format {
    /// Picks the format from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("otsf") => Format::Otsf,
            _ => Format::Csv,
        }
    }
}

pub fn load_features(path: impl AsRef<Path>, format: Format) -> Result<FeatureTable> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    match format {
        Format::Csv => read_csv(reader),
        Format::Otsf => read_otsf(reader),
    }
}

pub fn save_features(path: impl AsRef<Path>, table: &FeatureTable, format: Format) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    match format {
        Format::Csv => write_csv(&mut writer, table)?,
        Format::Otsf => write_otsf(&mut writer, table)?,
    }
    writer.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: Location::Line(line),
        message: message.into(),
    }
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(',').map(str::trim)
}

fn is_header(line: &str) -> bool {
    split_fields(line).any(|f| f.parse::<f64>().is_err())
}

/// Rows of floats from CSV text plus the optional label column.
fn read_csv_rows(reader: impl BufRead) -> Result<(Vec<f64>, usize, Option<Vec<i64>>)> {
    let mut values = Vec::new();
    let mut labels: Option<Vec<i64>> = None;
    let mut width: Option<usize> = None;
    let mut header_seen = false;
    let mut has_labels = false;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if width.is_none() && !header_seen && is_header(line) {
            header_seen = true;
            let last = split_fields(line).last().unwrap_or("");
            // a lone `label` header names a label column, not a label marker
            has_labels = last.eq_ignore_ascii_case("label") && split_fields(line).count() > 1;
            if has_labels {
                labels = Some(Vec::new());
            }
            let cols = split_fields(line).count();
            width = Some(cols);
            continue;
        }
        let fields: Vec<&str> = split_fields(line).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(parse_err(
                lineno,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let feature_fields = if has_labels {
            &fields[..fields.len() - 1]
        } else {
            &fields[..]
        };
        if feature_fields.is_empty() {
            return Err(parse_err(lineno, "row has no feature columns"));
        }
        for (col, field) in feature_fields.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("column {}: `{field}` is not a number", col + 1)))?;
            values.push(v);
        }
        if let Some(labels) = labels.as_mut() {
            let field = fields[fields.len() - 1];
            let label: i64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("label `{field}` is not an integer")))?;
            labels.push(label);
        }
    }
    let width = width.unwrap_or(0);
    let d = if has_labels { width.saturating_sub(1) } else { width };
    Ok((values, d, labels))
}

fn checked_labels(labels: Vec<i64>) -> Result<Vec<usize>> {
    labels
        .into_iter()
        .enumerate()
        .map(|(index, l)| {
            usize::try_from(l).map_err(|_| Error::LabelOutOfRange {
                index,
                label: l,
                num_classes: 0,
            })
        })
        .collect()
}

pub fn read_csv(reader: impl BufRead) -> Result<FeatureTable> {
    let (values, d, labels) = read_csv_rows(reader)?;
    if d == 0 || values.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let n = values.len() / d;
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| Error::invalid(e.to_string()))?;
    match labels {
        Some(labels) => FeatureTable::with_labels(features, checked_labels(labels)?),
        None => FeatureTable::new(features),
    }
}

/// Writes a header line only when the table carries labels.
pub fn write_csv(mut w: impl Write, table: &FeatureTable) -> Result<()> {
    if table.labels().is_some() {
        let header: Vec<String> = (0..table.dim()).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},label", header.join(","))?;
    }
    for (i, row) in table.rows().enumerate() {
        let mut line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        if let Some(labels) = table.labels() {
            line.push(',');
            line.push_str(&labels[i].to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

struct ByteCursor<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> ByteCursor<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Parse {
            location: Location::Offset(self.offset),
            message: format!("truncated file while reading {what}"),
        })?;
        self.offset += N;
        Ok(buf)
    }
}

pub fn read_otsf(reader: impl Read) -> Result<FeatureTable> {
    let mut cur = ByteCursor {
        inner: reader,
        offset: 0,
    };
    let magic = cur.take::<4>("magic")?;
    if &magic != OTSF_MAGIC {
        return Err(Error::Parse {
            location: Location::Offset(0),
            message: "bad magic, expected OTSF".into(),
        });
    }
    let n = u32::from_le_bytes(cur.take::<4>("n")?) as usize;
    let d = u32::from_le_bytes(cur.take::<4>("d")?) as usize;
    let flag_offset = cur.offset;
    let has_labels = match cur.take::<1>("label flag")?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Parse {
                location: Location::Offset(flag_offset),
                message: format!("label flag must be 0 or 1, got {other}"),
            })
        }
    };
    let mut values = Vec::with_capacity(n.saturating_mul(d).min(1 << 24));
    for _ in 0..n * d {
        values.push(f64::from_le_bytes(cur.take::<8>("feature value")?));
    }
    let labels = if has_labels {
        let mut labels = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            labels.push(i32::from_le_bytes(cur.take::<4>("label")?) as i64);
        }
        Some(checked_labels(labels)?)
    } else {
        None
    };
    let mut rest = [0u8; 1];
    if cur.inner.read(&mut rest)? != 0 {
        return Err(Error::Parse {
            location: Location::Offset(cur.offset),
            message: "trailing bytes after table".into(),
        });
    }
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| Error::invalid(e.to_string()))?;
    match labels {
        Some(labels) => FeatureTable::with_labels(features, labels),
        None => FeatureTable::new(features),
    }
}

pub fn write_otsf(mut w: impl Write, table: &FeatureTable) -> Result<()> {
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in u32")))
    };
    w.write_all(OTSF_MAGIC)?;
    w.write_all(&to_u32(table.n_samples())?.to_le_bytes())?;
    w.write_all(&to_u32(table.dim())?.to_le_bytes())?;
    w.write_all(&[u8::from(table.labels().is_some())])?;
    for v in table.features().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = table.labels() {
        for &l in labels {
            let l = i32::try_from(l).map_err(|_| Error::invalid(format!("label {l} does not fit in i32")))?;
            w.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

/// A single column of numbers, one per line, with an optional header line.
pub fn read_column(reader: impl BufRead) -> Result<Vec<f64>> {
    let (values, d, labels) = read_csv_rows(reader)?;
    if labels.is_some() || d != 1 {
        return Err(parse_err(1, format!("expected a single column, found {d}")));
    }
    Ok(values)
}

pub fn load_column(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_column(BufReader::new(File::open(path.as_ref())?))
}

/// A single column of non-negative integer labels.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let values = load_column(path)?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(parse_err(i + 1, format!("`{v}` is not a class label")))
            }
        })
        .collect()
}

pub fn write_column(mut w: impl Write, name: &str, values: &[f64]) -> Result<()> {
    writeln!(w, "{name}")?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// An `n × k` numeric matrix without labels (e.g. class probabilities).
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let (values, d, labels) = read_csv_rows(BufReader::new(File::open(path.as_ref())?))?;
    if labels.is_some() {
        return Err(parse_err(1, "unexpected label column"));
    }
    if d == 0 || values.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let n = values.len() / d;
    Array2::from_shape_vec((n, d), values).map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_plain() {
        let t = read_csv("1.0,2.0\n3.0,4.0".as_bytes()).unwrap();
        assert_eq!(t.features(), &array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(t.labels().is_none());
    }

    #[test]
    fn csv_with_label_header() {
        let t = read_csv("x0,x1,label\n1.0,2.0,0\n3.0,4.0,1\n".as_bytes()).unwrap();
        assert_eq!(t.features(), &array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(t.labels(), Some(&[0usize, 1][..]));
    }

    #[test]
    fn csv_header_without_labels() {
        let t = read_csv("a,b\n1,2\n".as_bytes()).unwrap();
        assert_eq!(t.dim(), 2);
        assert!(t.labels().is_none());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = read_csv("1.0,2.0\n3.0,oops\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                location: Location::Line(2),
                ..
            }
        ));
        let err = read_csv("1.0,2.0\n3.0\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                location: Location::Line(2),
                ..
            }
        ));
    }

    #[test]
    fn csv_non_finite_names_the_row() {
        let err = read_csv("1.0,2.0\n3.0,4.0\nNaN,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 2, column: 0 }));
    }

    #[test]
    fn csv_negative_label_rejected() {
        let err = read_csv("x,label\n1.0,-1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { index: 0, .. }));
    }

    #[test]
    fn otsf_roundtrip() {
        let t = FeatureTable::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, -6.5]]).unwrap();
        let mut buf = Vec::new();
        write_otsf(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 1 + 6 * 8);
        let back = read_otsf(&buf[..]).unwrap();
        assert_eq!(back.n_samples(), 3);
        assert_eq!(back.dim(), 2);
        assert_eq!(back, t);
    }

    #[test]
    fn otsf_truncated_reports_offset() {
        let t = FeatureTable::new(array![[1.0, 2.0]]).unwrap();
        let mut buf = Vec::new();
        write_otsf(&mut buf, &t).unwrap();
        buf.truncate(20);
        match read_otsf(&buf[..]) {
            Err(Error::Parse {
                location: Location::Offset(13),
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_otsf(&b"NOPE"[..]).is_err());
    }

    #[test]
    fn column_and_labels() {
        assert_eq!(read_column("loss\n0\n1\n0.5\n".as_bytes()).unwrap(), vec![0.0, 1.0, 0.5]);
        assert!(read_column("1,2\n".as_bytes()).is_err());
    }
}
