//! Plain-text parameter checkpoints.
//!
//! ```text
//! # rgg-transfer checkpoint v1
//! layers 2
//! nonlinearity leaky_relu 0.1
//! squash sigmoid
//! 0 0 0.25
//! 0 1 -1.5
//! ...
//! ```
//!
//! One `l k h_lk` line per tap. Values are written with Rust's shortest
//! round-trip formatting, so a read after a write is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{FilterTaps, GnnParams, Nonlinearity, OutputSquash};
use crate::error::{Error, Result};

const HEADER: &str = "# rgg-transfer checkpoint v1";

pub fn checkpoint_to_string(params: &GnnParams) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "layers {}", params.depth()).unwrap();
    match params.nonlinearity {
        Nonlinearity::Relu => writeln!(out, "nonlinearity relu").unwrap(),
        Nonlinearity::LeakyRelu(a) => writeln!(out, "nonlinearity leaky_relu {a:?}").unwrap(),
        Nonlinearity::AbsValue => writeln!(out, "nonlinearity abs").unwrap(),
    }
    let squash = match params.output_squash {
        OutputSquash::Sigmoid => "sigmoid",
        OutputSquash::None => "none",
    };
    writeln!(out, "squash {squash}").unwrap();
    for (l, taps) in params.layers.iter().enumerate() {
        for (k, h) in taps.coeffs().iter().enumerate() {
            writeln!(out, "{l} {k} {h:?}").unwrap();
        }
    }
    out
}

pub fn checkpoint_from_str(text: &str) -> std::result::Result<GnnParams, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(HEADER) {
        return Err("missing checkpoint header".into());
    }
    let mut depth = None;
    let mut nonlinearity = None;
    let mut squash = None;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["layers", d] => depth = Some(d.parse::<usize>().map_err(|e| e.to_string())?),
            ["nonlinearity", "relu"] => nonlinearity = Some(Nonlinearity::Relu),
            ["nonlinearity", "abs"] => nonlinearity = Some(Nonlinearity::AbsValue),
            ["nonlinearity", "leaky_relu", a] => {
                nonlinearity = Some(Nonlinearity::LeakyRelu(
                    a.parse().map_err(|e| format!("{e}"))?,
                ))
            }
            ["squash", "sigmoid"] => squash = Some(OutputSquash::Sigmoid),
            ["squash", "none"] => squash = Some(OutputSquash::None),
            [l, k, h] => entries.push((
                l.parse().map_err(|e| format!("layer index: {e}"))?,
                k.parse().map_err(|e| format!("tap index: {e}"))?,
                h.parse().map_err(|e| format!("tap value: {e}"))?,
            )),
            _ => return Err(format!("unrecognized line: {line}")),
        }
    }
    let depth = depth.ok_or("missing layer count")?;
    let mut layers: Vec<Vec<Option<f64>>> = vec![Vec::new(); depth];
    for (l, k, h) in entries {
        let taps = layers
            .get_mut(l)
            .ok_or_else(|| format!("layer {l} out of range"))?;
        if taps.len() <= k {
            taps.resize(k + 1, None);
        }
        if taps[k].replace(h).is_some() {
            return Err(format!("duplicate entry for layer {l} tap {k}"));
        }
    }
    let layers = layers
        .into_iter()
        .enumerate()
        .map(|(l, taps)| {
            taps.into_iter()
                .enumerate()
                .map(|(k, h)| h.ok_or_else(|| format!("missing layer {l} tap {k}")))
                .collect::<std::result::Result<Vec<f64>, String>>()
                .map(FilterTaps)
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    GnnParams::new(
        layers,
        nonlinearity.ok_or("missing nonlinearity")?,
        squash.ok_or("missing squash")?,
    )
    .map_err(|e| e.to_string())
}

pub fn write_checkpoint(path: &Path, params: &GnnParams) -> Result<()> {
    fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<GnnParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text).map_err(|msg| Error::Format {
        path: path.into(),
        msg,
    })
}
