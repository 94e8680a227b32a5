//! Line-oriented text format.
//!
//! ```text
//! graph 3
//! v 0 interior 0 [x1 x2 ...]
//! v 1 interior 0
//! v 2 cemetery 0
//! e 0 1 1.5
//! e 1 2 0.25
//! root 0
//! beta 0 3.25
//! ```
//!
//! Trailing integers on a `v` line are lattice coordinates. Floats are written
//! in shortest round-trip form, so parse(write(g)) == g.

use std::fmt::Write as _;

use super::{VertexClass, WeightedGraph};
use crate::error::{Error, Result};

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_graph(g: &WeightedGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "graph {}", g.num_vertices());
    for v in 0..g.num_vertices() {
        let _ = write!(s, "v {v} {} {}", g.class(v), fmt_f64(g.eta(v)));
        if let Some(x) = g.coords(v) {
            for c in x {
                let _ = write!(s, " {c}");
            }
        }
        s.push('\n');
    }
    for (u, v, c) in g.edges() {
        let _ = writeln!(s, "e {u} {v} {}", fmt_f64(c));
    }
    if let Some(r) = g.root() {
        let _ = writeln!(s, "root {r}");
    }
    s
}

/// Graph text followed by one `beta <id> <value>` line per entry.
pub fn write_beta_dump(g: &WeightedGraph, beta: &[f64]) -> String {
    let mut s = write_graph(g);
    for (v, b) in beta.iter().enumerate() {
        let _ = writeln!(s, "beta {v} {}", fmt_f64(*b));
    }
    s
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| perr(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| perr(line, format!("bad {what}")))
}

pub fn parse_graph(text: &str) -> Result<WeightedGraph> {
    parse_beta_dump(text).map(|(g, _)| g)
}

/// Parse a graph with optional `beta` lines. The returned vector is empty
/// when no `beta` line is present.
pub fn parse_beta_dump(text: &str) -> Result<(WeightedGraph, Vec<f64>)> {
    let mut g = WeightedGraph::new();
    let mut declared = None;
    let mut beta: Vec<Option<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let kind = toks.next().unwrap_or_default();
        match kind {
            "graph" => {
                if declared.is_some() {
                    return Err(perr(ln, "duplicate header"));
                }
                let n: usize = field(toks.next(), ln, "vertex count")?;
                declared = Some(n);
                beta = vec![None; n];
            }
            "v" => {
                let id: usize = field(toks.next(), ln, "vertex id")?;
                if id != g.num_vertices() {
                    return Err(perr(ln, format!("vertex ids must be consecutive, expected {}", g.num_vertices())));
                }
                let class: VertexClass = toks
                    .next()
                    .ok_or_else(|| perr(ln, "missing class"))?
                    .parse()
                    .map_err(|e: Error| perr(ln, e.to_string()))?;
                let eta: f64 = field(toks.next(), ln, "eta")?;
                let coords: Vec<i64> = toks
                    .map(|t| t.parse().map_err(|_| perr(ln, "bad coordinate")))
                    .collect::<Result<_>>()?;
                let v = g.add_vertex(class, eta).map_err(|e| perr(ln, e.to_string()))?;
                if !coords.is_empty() {
                    g.set_coords(v, Some(coords)).map_err(|e| perr(ln, e.to_string()))?;
                }
            }
            "e" => {
                let u: usize = field(toks.next(), ln, "endpoint")?;
                let v: usize = field(toks.next(), ln, "endpoint")?;
                let c: f64 = field(toks.next(), ln, "conductance")?;
                g.add_conductance(u, v, c).map_err(|e| perr(ln, e.to_string()))?;
            }
            "root" => {
                let r: usize = field(toks.next(), ln, "root")?;
                g.set_root(Some(r)).map_err(|e| perr(ln, e.to_string()))?;
            }
            "beta" => {
                let v: usize = field(toks.next(), ln, "vertex id")?;
                let b: f64 = field(toks.next(), ln, "beta value")?;
                let slot = beta.get_mut(v).ok_or_else(|| perr(ln, "beta vertex out of range"))?;
                *slot = Some(b);
            }
            other => return Err(perr(ln, format!("unknown record '{other}'"))),
        }
    }
    let n = declared.ok_or_else(|| perr(0, "missing header"))?;
    if n != g.num_vertices() {
        return Err(perr(0, format!("header declares {n} vertices, found {}", g.num_vertices())));
    }
    let beta = if beta.iter().all(Option::is_none) {
        Vec::new()
    } else {
        beta.into_iter()
            .enumerate()
            .map(|(v, b)| b.ok_or_else(|| perr(0, format!("missing beta for vertex {v}"))))
            .collect::<Result<_>>()?
    };
    Ok((g, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_halfspace_box, build_toy_chain};

    #[test]
    fn round_trip_is_exact() {
        let g = build_halfspace_box(2, 3, 2, 0.1).unwrap();
        let back = parse_graph(&write_graph(&g)).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn beta_dump_round_trip() {
        let g = build_toy_chain(2, 1.0 / 3.0, 2.5).unwrap();
        let beta = vec![1.0 / 7.0, 2.0e-300, 12345.678, 0.0];
        let (h, b) = parse_beta_dump(&write_beta_dump(&g, &beta)).unwrap();
        assert_eq!(g, h);
        assert_eq!(b, beta);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_graph("graph 1\nv 0 nowhere 0\n").is_err());
        assert!(parse_graph("graph 2\nv 0 plain 0\n").is_err());
        assert!(parse_graph("graph 1\nv 0 plain 0\ne 0 1 1\n").is_err());
        assert!(parse_graph("v 0 plain 0\n").is_err());
        match parse_graph("graph 1\nv 0 plain -1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
