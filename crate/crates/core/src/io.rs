//! Plain-text graph and rotation files.
//!
//! ```text
//! rotsync-graph v1 n=<n> m=<m>
//! i j r11 r12 r13 r21 r22 r23 r31 r32 r33      (m lines, 0-based, i < j)
//!
//! rotsync-rots v1 n=<n>
//! i r11 r12 r13 r21 r22 r23 r31 r32 r33        (n lines, any order)
//! ```
//!
//! Matrices are row-major with 17 significant digits, which round-trips
//! `f64` exactly. Matrices within 1e-6 of SO(3) are projected onto it on
//! read; anything further off, including reflections, is rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Matrix3;

use crate::graph::ViewGraph;
use crate::so3::{is_rotation, project_to_so3, Rotation};
use crate::{Error, Result};

const GRAPH_MAGIC: &str = "rotsync-graph";
const ROTS_MAGIC: &str = "rotsync-rots";
const VERSION: &str = "v1";
/// Largest deviation from SO(3) accepted on read.
pub const READ_TOLERANCE: f64 = 1e-6;

fn write_matrix<W: Write>(out: &mut W, r: &Rotation) -> std::io::Result<()> {
    let m = r.matrix();
    for row in 0..3 {
        for col in 0..3 {
            write!(out, " {:.16e}", m[(row, col)])?;
        }
    }
    writeln!(out)
}

pub fn write_graph_to<W: Write>(mut out: W, g: &ViewGraph) -> Result<()> {
    writeln!(out, "{GRAPH_MAGIC} {VERSION} n={} m={}", g.node_count(), g.edge_count())?;
    for e in g.edges() {
        write!(out, "{} {}", e.i, e.j)?;
        write_matrix(&mut out, &e.rotation)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rotations_to<W: Write>(mut out: W, rotations: &[Rotation]) -> Result<()> {
    writeln!(out, "{ROTS_MAGIC} {VERSION} n={}", rotations.len())?;
    for (i, r) in rotations.iter().enumerate() {
        write!(out, "{i}")?;
        write_matrix(&mut out, r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_graph(path: impl AsRef<Path>, g: &ViewGraph) -> Result<()> {
    write_graph_to(BufWriter::new(File::create(path)?), g)
}

pub fn write_rotations(path: impl AsRef<Path>, rotations: &[Rotation]) -> Result<()> {
    write_rotations_to(BufWriter::new(File::create(path)?), rotations)
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<ViewGraph> {
    read_graph_from(BufReader::new(File::open(path)?))
}

pub fn read_rotations(path: impl AsRef<Path>) -> Result<Vec<Rotation>> {
    read_rotations_from(BufReader::new(File::open(path)?))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Numbered lines with trailing blank lines dropped.
fn content_lines<R: BufRead>(input: R) -> Result<Vec<(usize, String)>> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(k, l)| l.map(|l| (k + 1, l)))
        .collect::<std::io::Result<Vec<_>>>()?;
    while lines.last().is_some_and(|(_, l)| l.trim().is_empty()) {
        lines.pop();
    }
    if let Some((no, _)) = lines.iter().find(|(_, l)| l.trim().is_empty()) {
        return Err(parse_err(*no, "blank line inside the file"));
    }
    Ok(lines)
}

/// Parses `<magic> v1 key=<usize>...` and returns the values in `keys` order.
fn parse_header(line: Option<&(usize, String)>, magic: &str, keys: &[&str]) -> Result<Vec<usize>> {
    let Some((no, text)) = line else {
        return Err(parse_err(1, "empty file"));
    };
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some(magic) {
        return Err(parse_err(*no, format!("expected `{magic}` header")));
    }
    if tokens.next() != Some(VERSION) {
        return Err(parse_err(*no, format!("unsupported version, expected {VERSION}")));
    }
    let values = keys
        .iter()
        .map(|key| {
            let token = tokens
                .next()
                .ok_or_else(|| parse_err(*no, format!("missing `{key}=`")))?;
            token
                .strip_prefix(key)
                .and_then(|t| t.strip_prefix('='))
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(*no, format!("bad header field `{token}`, expected `{key}=<count>`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = tokens.next() {
        return Err(parse_err(*no, format!("unexpected header field `{extra}`")));
    }
    Ok(values)
}

fn parse_index(token: &str, line: usize, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} `{token}`")))
}

fn parse_rotation(tokens: &[&str], line: usize) -> Result<Rotation> {
    let mut values = [0.0f64; 9];
    for (v, t) in values.iter_mut().zip(tokens) {
        *v = t.parse().map_err(|_| parse_err(line, format!("bad number `{t}`")))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite entry `{t}`")));
        }
    }
    let m = Matrix3::from_row_slice(&values);
    if m.determinant() < 0.0 {
        return Err(parse_err(line, "matrix is a reflection (det < 0)"));
    }
    if is_rotation(&m, Rotation::TOLERANCE) {
        return Ok(Rotation::from_matrix_unchecked(m));
    }
    if !is_rotation(&m, READ_TOLERANCE) {
        return Err(parse_err(
            line,
            format!("matrix is not a rotation within {READ_TOLERANCE:e}"),
        ));
    }
    project_to_so3(&m).map_err(|e| parse_err(line, e.to_string()))
}

fn split_record(text: &str, line: usize, fields: usize) -> Result<Vec<&str>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != fields {
        return Err(parse_err(
            line,
            format!("expected {fields} fields, found {}", tokens.len()),
        ));
    }
    Ok(tokens)
}

pub fn read_graph_from<R: BufRead>(input: R) -> Result<ViewGraph> {
    let lines = content_lines(input)?;
    let header = parse_header(lines.first(), GRAPH_MAGIC, &["n", "m"])?;
    let (n, m) = (header[0], header[1]);
    let body = lines.get(1..).unwrap_or_default();
    if body.len() != m {
        let at = body.last().map_or(1, |(no, _)| *no);
        return Err(parse_err(
            at,
            format!("header declares {m} edges, found {}", body.len()),
        ));
    }
    let mut seen = std::collections::HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    for (no, text) in body {
        let tokens = split_record(text, *no, 11)?;
        let i = parse_index(tokens[0], *no, "node index")?;
        let j = parse_index(tokens[1], *no, "node index")?;
        if i >= j {
            return Err(parse_err(*no, format!("edge ({i}, {j}) must satisfy i < j")));
        }
        if j >= n {
            return Err(parse_err(*no, format!("node {j} out of range for n={n}")));
        }
        if !seen.insert((i, j)) {
            return Err(parse_err(*no, format!("duplicate edge ({i}, {j})")));
        }
        edges.push((i, j, parse_rotation(&tokens[2..], *no)?));
    }
    ViewGraph::new(n, edges)
}

pub fn read_rotations_from<R: BufRead>(input: R) -> Result<Vec<Rotation>> {
    let lines = content_lines(input)?;
    let n = parse_header(lines.first(), ROTS_MAGIC, &["n"])?[0];
    let mut slots: Vec<Option<Rotation>> = vec![None; n];
    for (no, text) in lines.get(1..).unwrap_or_default() {
        let tokens = split_record(text, *no, 10)?;
        let i = parse_index(tokens[0], *no, "node index")?;
        let slot = slots
            .get_mut(i)
            .ok_or_else(|| parse_err(*no, format!("node {i} out of range for n={n}")))?;
        if slot.is_some() {
            return Err(parse_err(*no, format!("duplicate node {i}")));
        }
        *slot = Some(parse_rotation(&tokens[1..], *no)?);
    }
    let last = lines.len().max(1);
    slots
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| parse_err(last, format!("missing node {i}"))))
        .collect()
}
