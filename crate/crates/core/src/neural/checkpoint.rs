//! Model checkpoint container.
//!
//! ```text
//! WFCMODEL v1
//! layers=4,3,2
//! activation=tanh
//! offsets=0,96,120,168
//! data_bytes=184
//! end
//! <data_bytes of little-endian f64: W0, b0, W1, b1, ...>
//! ```
//!
//! Offsets are byte positions of each array relative to the first byte
//! after the `end` line. Weight matrices are row-major (outputs × inputs).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &str = "WFCMODEL v1";

pub fn write_model<T: Scalar, W: Write>(model: &Mlp<T>, mut out: W) -> Result<()> {
    let lengths: Vec<usize> = model.tensors().map(|t| t.len()).collect();
    let mut offsets = Vec::with_capacity(lengths.len());
    let mut pos = 0usize;
    for len in &lengths {
        offsets.push(pos);
        pos += len * 8;
    }
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(out, "layers={}", join(model.layer_sizes()))?;
    writeln!(out, "activation={}", model.activation())?;
    writeln!(out, "offsets={}", join(&offsets))?;
    writeln!(out, "data_bytes={pos}")?;
    writeln!(out, "end")?;
    for v in model.tensors().flatten() {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_model<T: Scalar, R: BufRead>(mut input: R) -> Result<Mlp<T>> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    if line.trim_end() != MODEL_MAGIC {
        return Err(Error::data(format!(
            "not a model checkpoint: expected `{MODEL_MAGIC}`, found `{}`",
            line.trim_end()
        )));
    }
    let mut layers = None;
    let mut activation = None;
    let mut offsets = None;
    let mut data_bytes = None;
    let mut line_no = 1;
    loop {
        line.clear();
        line_no += 1;
        if input.read_line(&mut line)? == 0 {
            return Err(Error::data("checkpoint header ends without `end` line"));
        }
        let entry = line.trim_end();
        if entry == "end" {
            break;
        }
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| Error::data(format!("checkpoint line {line_no}: expected key=value")))?;
        match key {
            "layers" => layers = Some(parse_list(value, line_no)?),
            "activation" => activation = Some(value.parse::<Activation>().map_err(|e| {
                Error::data(format!("checkpoint line {line_no}: {e}"))
            })?),
            "offsets" => offsets = Some(parse_list(value, line_no)?),
            "data_bytes" => {
                data_bytes = Some(value.parse::<usize>().map_err(|_| {
                    Error::data(format!("checkpoint line {line_no}: bad data_bytes `{value}`"))
                })?)
            }
            other => {
                return Err(Error::data(format!(
                    "checkpoint line {line_no}: unknown header key `{other}`"
                )))
            }
        }
    }
    let missing = |k: &str| Error::data(format!("checkpoint header lacks `{k}`"));
    let layers = layers.ok_or_else(|| missing("layers"))?;
    let activation = activation.ok_or_else(|| missing("activation"))?;
    let offsets = offsets.ok_or_else(|| missing("offsets"))?;
    let data_bytes = data_bytes.ok_or_else(|| missing("data_bytes"))?;
    if layers.len() < 2 || layers.contains(&0) {
        return Err(Error::data(format!("invalid layer sizes {layers:?}")));
    }

    let mut expected = Vec::new();
    let mut pos = 0;
    for pair in layers.windows(2) {
        expected.push(pos);
        pos += pair[0] * pair[1] * 8;
        expected.push(pos);
        pos += pair[1] * 8;
    }
    if offsets != expected || data_bytes != pos {
        return Err(Error::data(format!(
            "offsets {offsets:?} / data_bytes {data_bytes} do not match layers {layers:?}"
        )));
    }

    let mut raw = vec![0u8; data_bytes];
    input
        .read_exact(&mut raw)
        .map_err(|_| Error::data(format!("checkpoint truncated: expected {data_bytes} data bytes")))?;
    let mut values = raw.chunks_exact(8).map(|c| {
        let v = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
        T::of(v)
    });
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layers.windows(2) {
        let w: Vec<T> = values.by_ref().take(pair[0] * pair[1]).collect();
        weights.push(Matrix::from_vec(pair[1], pair[0], w)?);
        biases.push(values.by_ref().take(pair[1]).collect());
    }
    let model = Mlp::from_parts(weights, biases, activation)?;
    if !model.all_finite() {
        return Err(Error::data("checkpoint contains non-finite parameters"));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &Mlp<T>, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Mlp<T>> {
    read_model(BufReader::new(File::open(path)?))
}

fn join(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list(value: &str, line_no: usize) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::data(format!("checkpoint line {line_no}: bad integer `{s}`")))
        })
        .collect()
}
