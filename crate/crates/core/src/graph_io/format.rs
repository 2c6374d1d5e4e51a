//! Text formats for datasets and condensed graphs.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! save/load cycle reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Encoder, EncoderSpec};
use crate::tensor::Matrix;

use super::{CondensedGraph, Graph, Setting};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
    setting: Setting,
}

#[derive(Debug, Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CondensedMeta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
    gamma: Option<f64>,
    encoder: EncoderSpec,
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(file: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(file, e.line(), e.to_string()))
}

fn parse_matrix(file: &str, text: &str, rows: usize, cols: Option<usize>) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut width = cols;
    let mut count = 0;
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(file, ln + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(file, ln + 1, "non-finite value"));
            }
            data.push(v);
        }
        let got = data.len() - before;
        match width {
            Some(w) if w != got => {
                return Err(Error::parse(
                    file,
                    ln + 1,
                    format!("ragged row: expected {w} values, found {got}"),
                ))
            }
            None => width = Some(got),
            _ => {}
        }
        count += 1;
    }
    if count != rows {
        return Err(Error::invalid(
            file,
            format!("expected {rows} rows, found {count}"),
        ));
    }
    let w = width.unwrap_or(0);
    Ok(Matrix::from_shape_vec((rows, w), data).expect("row widths checked"))
}

fn parse_labels(file: &str, text: &str, n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(n);
    for (ln, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let y = s
            .parse()
            .map_err(|_| Error::parse(file, ln + 1, format!("not a label: {s:?}")))?;
        out.push(y);
    }
    if out.len() != n {
        return Err(Error::invalid(
            file,
            format!("expected {n} labels, found {}", out.len()),
        ));
    }
    Ok(out)
}

fn format_matrix(m: &Matrix) -> String {
    let mut s = String::with_capacity(m.len() * 8);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{v:?}").expect("string write");
        }
        s.push('\n');
    }
    s
}

fn format_labels(labels: &[usize]) -> String {
    let mut s = String::with_capacity(labels.len() * 2);
    for y in labels {
        writeln!(s, "{y}").expect("string write");
    }
    s
}

/// Loads and validates a dataset directory.
pub fn load_graph(dir: &Path) -> Result<Graph> {
    let meta: DatasetMeta = parse_json("meta.json", &read(dir, "meta.json")?)?;
    let n = meta.num_nodes;

    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (ln, line) in read(dir, "edges.txt")?.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let mut parts = s.split_whitespace();
        let mut next = || -> Result<usize> {
            parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| {
                Error::parse("edges.txt", ln + 1, format!("expected \"u v\", got {s:?}"))
            })
        };
        let (u, v) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(Error::parse("edges.txt", ln + 1, "trailing fields"));
        }
        if u == v {
            return Err(Error::parse(
                "edges.txt",
                ln + 1,
                format!("self-loop-in-input: {u} {v}"),
            ));
        }
        if u >= n || v >= n {
            return Err(Error::parse(
                "edges.txt",
                ln + 1,
                format!("index out of range: {u} {v} with {n} nodes"),
            ));
        }
        let e = (u.min(v), u.max(v));
        if !seen.insert(e) {
            return Err(Error::parse(
                "edges.txt",
                ln + 1,
                format!("duplicate edge {u} {v}"),
            ));
        }
        edges.push(e);
    }

    let features = parse_matrix(
        "features.csv",
        &read(dir, "features.csv")?,
        n,
        Some(meta.num_features),
    )?;
    let labels = parse_labels("labels.txt", &read(dir, "labels.txt")?, n)?;
    let splits: Splits = parse_json("splits.json", &read(dir, "splits.json")?)?;
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };

    let graph = Graph {
        num_nodes: n,
        num_features: meta.num_features,
        num_classes: meta.num_classes,
        edges,
        features,
        labels,
        train_idx: sorted(splits.train),
        val_idx: sorted(splits.val),
        test_idx: sorted(splits.test),
        setting: meta.setting,
    };
    graph.validate()?;
    Ok(graph)
}

/// Writes a dataset directory in the format [`load_graph`] reads.
pub fn save_graph(graph: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        num_nodes: graph.num_nodes,
        num_features: graph.num_features,
        num_classes: graph.num_classes,
        setting: graph.setting,
    };
    write_atomic(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    let mut edges = String::new();
    for (u, v) in &graph.edges {
        writeln!(edges, "{u} {v}").expect("string write");
    }
    write_atomic(&dir.join("edges.txt"), edges.as_bytes())?;
    write_atomic(
        &dir.join("features.csv"),
        format_matrix(&graph.features).as_bytes(),
    )?;
    write_atomic(
        &dir.join("labels.txt"),
        format_labels(&graph.labels).as_bytes(),
    )?;
    let splits = Splits {
        train: graph.train_idx.clone(),
        val: graph.val_idx.clone(),
        test: graph.test_idx.clone(),
    };
    write_atomic(
        &dir.join("splits.json"),
        serde_json::to_string(&splits)?.as_bytes(),
    )
}

/// Writes a condensed graph and its feature condenser.
pub fn save_condensed(cg: &CondensedGraph, phi: &Encoder, dir: &Path) -> Result<()> {
    cg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = CondensedMeta {
        num_nodes: cg.num_nodes(),
        num_features: cg.num_features(),
        num_classes: cg.num_classes,
        gamma: cg.gamma,
        encoder: phi.spec(),
    };
    write_atomic(
        &dir.join("features.csv"),
        format_matrix(&cg.x_hat).as_bytes(),
    )?;
    write_atomic(
        &dir.join("adjacency.csv"),
        format_matrix(&cg.a_hat).as_bytes(),
    )?;
    write_atomic(&dir.join("labels.txt"), format_labels(&cg.y_hat).as_bytes())?;
    write_atomic(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    write_atomic(
        &dir.join("params.json"),
        serde_json::to_string(&phi.params().to_json())?.as_bytes(),
    )
}

pub fn load_condensed(dir: &Path) -> Result<(CondensedGraph, Encoder)> {
    let meta: CondensedMeta = parse_json("meta.json", &read(dir, "meta.json")?)?;
    let n = meta.num_nodes;
    let x_hat = parse_matrix(
        "features.csv",
        &read(dir, "features.csv")?,
        n,
        Some(meta.num_features),
    )?;
    let a_hat = parse_matrix("adjacency.csv", &read(dir, "adjacency.csv")?, n, Some(n))?;
    let y_hat = parse_labels("labels.txt", &read(dir, "labels.txt")?, n)?;
    let params: serde_json::Value = parse_json("params.json", &read(dir, "params.json")?)?;
    let cg = CondensedGraph {
        x_hat,
        a_hat,
        y_hat,
        num_classes: meta.num_classes,
        gamma: meta.gamma,
    };
    cg.validate()?;
    let phi = Encoder::from_json(meta.encoder, &params)?;
    Ok((cg, phi))
}
