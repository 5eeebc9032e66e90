//! Dataset files.
//!
//! Text variant:
//!
//! ```text
//! WFCDATA v1 n=2 d=3 classes=2 groups=2
//! # class_names=nurse,surgeon
//! 0.25,-1.5,3,1,0
//! 0.5,0.125,-2,0,1
//! ```
//!
//! Each row holds `d` features followed by `y` and `s`. Lines starting with
//! `#` are comments; `# class_names=` and `# group_names=` carry optional
//! comma-separated names.
//!
//! Binary variant: the same header line with a trailing `format=binary`
//! token, then `n·d` little-endian `f64` features (row-major), `n`
//! little-endian `u32` labels and `n` little-endian `u32` attributes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DATA_MAGIC: &str = "WFCDATA v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Text,
    Binary,
}

struct Header {
    n: usize,
    d: usize,
    classes: usize,
    groups: usize,
    format: DatasetFormat,
}

fn parse_header(line: &str) -> Result<Header> {
    let rest = line
        .strip_prefix(DATA_MAGIC)
        .ok_or_else(|| Error::data(format!("line 1: expected `{DATA_MAGIC}` header, found `{line}`")))?;
    let (mut n, mut d, mut classes, mut groups) = (None, None, None, None);
    let mut format = DatasetFormat::Text;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::data(format!("line 1: malformed header token `{token}`")))?;
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::data(format!("line 1: `{key}` must be a non-negative integer, got `{value}`")))
        };
        match key {
            "n" => n = Some(number()?),
            "d" => d = Some(number()?),
            "classes" => classes = Some(number()?),
            "groups" => groups = Some(number()?),
            "format" => {
                format = match value {
                    "text" => DatasetFormat::Text,
                    "binary" => DatasetFormat::Binary,
                    other => return Err(Error::data(format!("line 1: unknown format `{other}`"))),
                }
            }
            other => return Err(Error::data(format!("line 1: unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::data(format!("line 1: header lacks `{k}=`"));
    Ok(Header {
        n: n.ok_or_else(|| missing("n"))?,
        d: d.ok_or_else(|| missing("d"))?,
        classes: classes.ok_or_else(|| missing("classes"))?,
        groups: groups.ok_or_else(|| missing("groups"))?,
        format,
    })
}

pub fn write_dataset<T: Scalar, W: Write>(ds: &EmbeddingDataset<T>, format: DatasetFormat, mut out: W) -> Result<()> {
    write!(
        out,
        "{DATA_MAGIC} n={} d={} classes={} groups={}",
        ds.len(),
        ds.dim(),
        ds.n_classes(),
        ds.n_groups()
    )?;
    match format {
        DatasetFormat::Text => {
            writeln!(out)?;
            if let Some(names) = ds.class_names() {
                writeln!(out, "# class_names={}", names.join(","))?;
            }
            if let Some(names) = ds.group_names() {
                writeln!(out, "# group_names={}", names.join(","))?;
            }
            for i in 0..ds.len() {
                for v in ds.features().row(i) {
                    // `{:?}` prints the shortest representation that parses back exactly
                    write!(out, "{:?},", v.as_f64())?;
                }
                writeln!(out, "{},{}", ds.labels()[i], ds.groups()[i])?;
            }
        }
        DatasetFormat::Binary => {
            writeln!(out, " format=binary")?;
            for v in ds.features().as_slice() {
                out.write_all(&v.as_f64().to_le_bytes())?;
            }
            for &y in ds.labels() {
                out.write_all(&(y as u32).to_le_bytes())?;
            }
            for &s in ds.groups() {
                out.write_all(&(s as u32).to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads either variant; the header line decides which.
pub fn read_dataset<T: Scalar, R: BufRead>(mut input: R) -> Result<EmbeddingDataset<T>> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header = parse_header(line.trim_end())?;
    if header.n == 0 || header.d == 0 {
        return Err(Error::data("line 1: n and d must be positive"));
    }
    match header.format {
        DatasetFormat::Text => read_text(input, &header),
        DatasetFormat::Binary => read_binary(input, &header),
    }
}

fn read_text<T: Scalar, R: BufRead>(input: R, h: &Header) -> Result<EmbeddingDataset<T>> {
    let mut features = Vec::with_capacity(h.n * h.d);
    let mut labels = Vec::with_capacity(h.n);
    let mut groups = Vec::with_capacity(h.n);
    let mut class_names = None;
    let mut group_names = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("class_names=") {
                class_names = Some(v.split(',').map(str::to_owned).collect());
            } else if let Some(v) = comment.strip_prefix("group_names=") {
                group_names = Some(v.split(',').map(str::to_owned).collect());
            }
            continue;
        }
        if labels.len() == h.n {
            return Err(Error::data(format!("line {line_no}: more than the declared {} rows", h.n)));
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != h.d + 2 {
            return Err(Error::data(format!(
                "line {line_no}: expected {} fields ({} features, y, s), found {}",
                h.d + 2,
                h.d,
                fields.len()
            )));
        }
        for f in &fields[..h.d] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::data(format!("line {line_no}: bad feature value `{f}`")))?;
            features.push(T::of(v));
        }
        let y = parse_index(fields[h.d], h.classes, "label", line_no)?;
        let s = parse_index(fields[h.d + 1], h.groups, "sensitive attribute", line_no)?;
        labels.push(y);
        groups.push(s);
    }
    if labels.len() != h.n {
        return Err(Error::data(format!(
            "header declares {} rows, file has {}",
            h.n,
            labels.len()
        )));
    }
    let x = Matrix::from_vec(h.n, h.d, features)?;
    EmbeddingDataset::new(x, labels, groups, h.classes, h.groups)?.with_names(class_names, group_names)
}

fn parse_index(field: &str, bound: usize, what: &str, line_no: usize) -> Result<usize> {
    let v: usize = field
        .parse()
        .map_err(|_| Error::data(format!("line {line_no}: bad {what} `{field}`")))?;
    if v >= bound {
        return Err(Error::data(format!(
            "line {line_no}: {what} {v} outside [0, {bound})"
        )));
    }
    Ok(v)
}

fn read_binary<T: Scalar, R: BufRead>(mut input: R, h: &Header) -> Result<EmbeddingDataset<T>> {
    let mut raw = vec![0u8; h.n * h.d * 8 + h.n * 8];
    input
        .read_exact(&mut raw)
        .map_err(|_| Error::data(format!("binary payload shorter than {} bytes", raw.len())))?;
    let (feat, rest) = raw.split_at(h.n * h.d * 8);
    let features = feat
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    let ints: Vec<usize> = rest
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let (labels, groups) = ints.split_at(h.n);
    let x = Matrix::from_vec(h.n, h.d, features)?;
    EmbeddingDataset::new(x, labels.to_vec(), groups.to_vec(), h.classes, h.groups)
}

pub fn save_dataset<T: Scalar>(ds: &EmbeddingDataset<T>, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
    write_dataset(ds, format, BufWriter::new(File::create(path)?))
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingDataset<T>> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "WFCDATA v1 n=2 d=3 classes=2 groups=2\n\
        # class_names=nurse,surgeon\n\
        0.25,-1.5,3,1,0\n\
        0.5,0.125,-2e-3,0,1\n";

    #[test]
    fn hand_written_text_file() {
        let ds: EmbeddingDataset<f64> = read_dataset(FIXTURE.as_bytes()).unwrap();
        let expected = EmbeddingDataset::new(
            Matrix::from_f64_rows(&[&[0.25, -1.5, 3.0], &[0.5, 0.125, -0.002]]).unwrap(),
            vec![1, 0],
            vec![0, 1],
            2,
            2,
        )
        .unwrap()
        .with_names(Some(vec!["nurse".into(), "surgeon".into()]), None)
        .unwrap();
        assert_eq!(ds, expected);
    }

    #[test]
    fn out_of_range_label_names_the_line() {
        let text = "WFCDATA v1 n=1 d=1 classes=28 groups=2\n0.5,28,0\n";
        let err = read_dataset::<f64, _>(text.as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("line 2")), "{err}");
    }

    #[test]
    fn malformed_files_are_rejected() {
        for text in [
            "WFCDATA v2 n=1 d=1 classes=2 groups=2\n0.5,1,0\n",
            "WFCDATA v1 n=1 d=1 classes=2\n0.5,1,0\n",
            "WFCDATA v1 n=1 d=2 classes=2 groups=2\n0.5,1,0\n",
            "WFCDATA v1 n=2 d=1 classes=2 groups=2\n0.5,1,0\n",
            "WFCDATA v1 n=1 d=1 classes=2 groups=2\nabc,1,0\n",
            "WFCDATA v1 n=1 d=1 classes=2 groups=2 colour=red\n0.5,1,0\n",
        ] {
            assert!(matches!(read_dataset::<f64, _>(text.as_bytes()), Err(Error::Data(_))), "{text}");
        }
    }

    #[test]
    fn binary_payload_is_sniffed_from_header() {
        let ds: EmbeddingDataset<f64> = read_dataset(FIXTURE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, DatasetFormat::Binary, &mut buf).unwrap();
        assert!(buf.starts_with(b"WFCDATA v1 n=2 d=3 classes=2 groups=2 format=binary\n"));
        let back: EmbeddingDataset<f64> = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert!(read_dataset::<f64, _>(&buf[..buf.len() - 1]).is_err());
    }
}
