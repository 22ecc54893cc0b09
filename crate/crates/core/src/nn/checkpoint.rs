//! Plain-text parameter dump.
//!
//! ```text
//! params kind=<lstm|blstm|gru> h_source=<candidate|cell> width=<w> input=<d>
//! tensor <path> <dim>...
//! <row-major values separated by single spaces>
//! ...
//! end params
//! ```
//!
//! Tensor paths follow [`ModelParams::named_tensors`], for example
//! `layer1.U_f`, `layer2.bwd.W_c` or `dense.b`, and appear in that order.
//! Values use Rust's shortest round-trip float formatting, so reading a dump
//! back reproduces the parameters bit for bit.

use std::io::Write;

use super::cell::HSource;
use super::model::{ModelKind, ModelParams};
use crate::error::{Error, Result};

pub fn write_params<W: Write>(p: &ModelParams, out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "params kind={} h_source={} width={} input={}",
        p.kind(),
        p.h_source.as_str(),
        p.width(),
        p.input()
    )?;
    for (name, t) in p.named_tensors() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        writeln!(out, "tensor {name} {}", dims.join(" "))?;
        let vals: Vec<String> = t.data().iter().map(f64::to_string).collect();
        writeln!(out, "{}", vals.join(" "))?;
    }
    writeln!(out, "end params")
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| bad(format!("missing `{key}` in `{line}`")))
}

/// Read one params block from a line iterator positioned at its header.
pub fn read_params<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<ModelParams> {
    let header = lines.next().ok_or_else(|| bad("missing params header"))?;
    if !header.starts_with("params ") {
        return Err(bad(format!("expected params header, got `{header}`")));
    }
    let kind: ModelKind = field(header, "kind")?.parse()?;
    let h_source: HSource = field(header, "h_source")?.parse()?;
    let width: usize = field(header, "width")?.parse().map_err(|_| bad("width"))?;
    let input: usize = field(header, "input")?.parse().map_err(|_| bad("input"))?;
    let mut p = ModelParams::zeros(kind, width, input, h_source);
    let names: Vec<(String, Vec<usize>)> = p
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    for ((name, shape), t) in names.into_iter().zip(p.tensors_mut()) {
        let head = lines.next().ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("tensor") || parts.next() != Some(name.as_str()) {
            return Err(bad(format!("expected tensor {name}, got `{head}`")));
        }
        let dims: Vec<usize> = parts
            .map(|s| s.parse().map_err(|_| bad(format!("bad dim in `{head}`"))))
            .collect::<Result<_>>()?;
        if dims != shape {
            return Err(bad(format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
        }
        let body = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
        let vals: Vec<f64> = body
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad(format!("bad value `{s}` in {name}"))))
            .collect::<Result<_>>()?;
        if vals.len() != t.len() {
            return Err(bad(format!(
                "tensor {name} has {} values, expected {}",
                vals.len(),
                t.len()
            )));
        }
        t.data_mut().copy_from_slice(&vals);
    }
    match lines.next() {
        Some("end params") => Ok(p),
        other => Err(bad(format!("expected `end params`, got {other:?}"))),
    }
}
