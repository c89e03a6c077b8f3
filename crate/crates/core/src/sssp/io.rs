//! Text edge-list format.
//!
//! ```text
//! n m
//! u v w      (m lines, 0 <= u < v < n, 0 < w <= 1)
//! ```
//!
//! Weights are written in fixed point with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::io::{BufRead, Write};

use super::Graph;
use crate::error::{Error, Result};

pub fn write_graph<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", graph.node_count(), graph.edge_count())?;
    for (u, v, w) in graph.edges() {
        writeln!(out, "{u} {v} {}", format_weight(w))?;
    }
    out.flush()?;
    Ok(())
}

fn format_weight(w: f64) -> String {
    let decimals = (16 - w.log10().floor() as i32).max(0) as usize;
    format!("{w:.decimals$}")
}

pub fn read_graph<R: BufRead>(input: R) -> Result<Graph> {
    let mut lines = input.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let bad = |line: usize, msg: String| Error::GraphFormat { line, msg };

    let (line_no, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let header = header?;
    let (n, m) = match parse_fields::<2>(&header) {
        Some([n, m]) => (
            n.parse::<usize>().map_err(|e| bad(line_no, format!("node count: {e}")))?,
            m.parse::<usize>().map_err(|e| bad(line_no, format!("edge count: {e}")))?,
        ),
        None => return Err(bad(line_no, "header must be `n m`".into())),
    };
    if n == 0 || n > u32::MAX as usize {
        return Err(bad(line_no, format!("node count {n} out of range")));
    }

    let mut edges = Vec::with_capacity(m);
    for (line_no, line) in lines {
        let line = line?;
        let [u, v, w] = parse_fields::<3>(&line).ok_or_else(|| bad(line_no, "edge must be `u v w`".into()))?;
        let u: u32 = u.parse().map_err(|e| bad(line_no, format!("source: {e}")))?;
        let v: u32 = v.parse().map_err(|e| bad(line_no, format!("target: {e}")))?;
        let w: f64 = w.parse().map_err(|e| bad(line_no, format!("weight: {e}")))?;
        if u >= v || v as usize >= n {
            return Err(bad(line_no, format!("need 0 <= u < v < {n}, got {u} {v}")));
        }
        if !(w > 0.0 && w <= 1.0) {
            return Err(bad(line_no, format!("weight {w} outside (0, 1]")));
        }
        edges.push((u, v, w));
    }
    if edges.len() != m {
        return Err(bad(line_no, format!("header announces {m} edges, found {}", edges.len())));
    }
    Graph::from_edges(n, &edges)
}

fn parse_fields<const N: usize>(line: &str) -> Option<[&str; N]> {
    let mut it = line.split_whitespace();
    let mut out = [""; N];
    for slot in &mut out {
        *slot = it.next()?;
    }
    it.next().is_none().then_some(out)
}
