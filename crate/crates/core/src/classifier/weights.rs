//! Plain-text weight files.
//!
//! ```text
//! layers 10 15 15 1
//! w 0 <15 rows of 10 numbers, one row per line>
//! b 0 <15 numbers>
//! ...
//! ```
//!
//! Every number is written with 17 significant digits, so a saved model
//! reloads bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::model::MlpModel;
use crate::error::{Error, Result};

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn weights_to_string(model: &MlpModel) -> String {
    let mut out = String::from("layers");
    for s in model.sizes() {
        write!(out, " {s}").expect("string write");
    }
    out.push('\n');
    for (l, (w, b)) in model.weights().iter().zip(model.biases()).enumerate() {
        for r in 0..w.nrows() {
            write!(out, "w {l}").expect("string write");
            for x in w.row(r).iter() {
                write!(out, " {}", real(*x)).expect("string write");
            }
            out.push('\n');
        }
        write!(out, "b {l}").expect("string write");
        for x in b.iter() {
            write!(out, " {}", real(*x)).expect("string write");
        }
        out.push('\n');
    }
    out
}

fn bad(line: usize, what: impl Into<String>) -> Error {
    Error::Config(format!("weights line {line}: {}", what.into()))
}

pub fn weights_from_str(text: &str) -> Result<MlpModel> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("weights file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("layers") {
        return Err(bad(1, "expected a `layers` header"));
    }
    let sizes = head
        .map(|t| t.parse::<usize>().map_err(|e| bad(1, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 {
        return Err(bad(1, "need at least two layer sizes"));
    }
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); sizes.len() - 1];
    let mut biases: Vec<Option<Vec<f64>>> = vec![None; sizes.len() - 1];
    for (n, line) in lines {
        let mut tok = line.split_whitespace();
        let tag = tok.next().unwrap_or_default();
        let layer: usize = tok
            .next()
            .ok_or_else(|| bad(n + 1, "missing layer index"))?
            .parse()
            .map_err(|_| bad(n + 1, "bad layer index"))?;
        if layer >= rows.len() {
            return Err(bad(n + 1, format!("layer {layer} does not exist")));
        }
        let values = tok
            .map(|t| t.parse::<f64>().map_err(|e| bad(n + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        match tag {
            "w" if values.len() == sizes[layer] => rows[layer].push(values),
            "b" if values.len() == sizes[layer + 1] && biases[layer].is_none() => biases[layer] = Some(values),
            "w" | "b" => return Err(bad(n + 1, "wrong number of values")),
            other => return Err(bad(n + 1, format!("unknown tag `{other}`"))),
        }
    }
    let mut weights = Vec::with_capacity(rows.len());
    let mut bias_vecs = Vec::with_capacity(rows.len());
    for (l, (r, b)) in rows.into_iter().zip(biases).enumerate() {
        if r.len() != sizes[l + 1] {
            return Err(Error::Config(format!(
                "weights: layer {l} has {} rows, expected {}",
                r.len(),
                sizes[l + 1]
            )));
        }
        let b = b.ok_or_else(|| Error::Config(format!("weights: layer {l} has no bias row")))?;
        weights.push(DMatrix::from_fn(sizes[l + 1], sizes[l], |i, j| r[i][j]));
        bias_vecs.push(DVector::from_vec(b));
    }
    MlpModel::from_parameters(weights, bias_vecs)
}

pub fn save_weights(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, weights_to_string(model))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<MlpModel> {
    weights_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MlpModel::new(&[10, 15, 15, 1], &mut rng).unwrap();
        let text = weights_to_string(&m);
        assert!(text.starts_with("layers 10 15 15 1\n"));
        let back = weights_from_str(&text).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.biases(), m.biases());
        assert_eq!(weights_to_string(&back), text);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = MlpModel::new(&[4, 3, 1], &mut rng).unwrap();
        save_weights(&m, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap().weights(), m.weights());
    }

    #[test]
    fn malformed_files() {
        assert!(weights_from_str("").is_err());
        assert!(weights_from_str("layers 2 1\nw 0 1.0\nb 0 0.0\n").is_err());
        assert!(weights_from_str("layers 2 1\nw 0 1.0 2.0\n").is_err());
        assert!(weights_from_str("layers 2 1\nw 0 1.0 2.0\nb 0 0.0\nq 0 1\n").is_err());
        assert!(weights_from_str("layers 2 1\nw 3 1.0 2.0\nb 0 0.0\n").is_err());
        assert!(weights_from_str("layers 2 1\nw 0 1.0 nan\nb 0 0.0\n").is_err());
        assert!(weights_from_str("layers 2 1\nw 0 1.0 2.0\nb 0 0.5\n").is_ok());
    }
}
