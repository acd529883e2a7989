//! Heatmap text format: `n <N> edges <E>` followed by `src dst prob` lines.

use std::fmt::Write as _;
use std::path::Path;

use edgegae_core::Heatmap;

use crate::error::{read_to_string, write_atomic, Error, Result};

pub fn heatmap_to_string(h: &Heatmap) -> String {
    let mut out = format!("n {} edges {}\n", h.n, h.edges.len());
    for (&(s, d), &p) in h.edges.iter().zip(&h.probs) {
        writeln!(out, "{s} {d} {p}").unwrap();
    }
    out
}

pub fn write_heatmap(path: &Path, h: &Heatmap) -> Result<()> {
    write_atomic(path, heatmap_to_string(h).as_bytes())
}

pub fn parse_heatmap(text: &str) -> Result<Heatmap> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Format("empty heatmap file".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let (n, e) = match head.as_slice() {
        ["n", n, "edges", e] => (
            n.parse::<usize>().map_err(|_| Error::Format(format!("line 1: bad node count '{n}'")))?,
            e.parse::<usize>().map_err(|_| Error::Format(format!("line 1: bad edge count '{e}'")))?,
        ),
        _ => return Err(Error::Format("line 1: expected 'n <N> edges <E>'".into())),
    };
    let mut edges = Vec::with_capacity(e);
    let mut probs = Vec::with_capacity(e);
    for (lineno, line) in lines {
        let bad = || Error::Format(format!("line {lineno}: expected 'src dst prob'"));
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(bad());
        }
        let s: usize = t[0].parse().map_err(|_| bad())?;
        let d: usize = t[1].parse().map_err(|_| bad())?;
        let p: f64 = t[2].parse().map_err(|_| bad())?;
        edges.push((s, d));
        probs.push(p);
    }
    if edges.len() != e {
        return Err(Error::Format(format!("header declares {e} edges, found {}", edges.len())));
    }
    Heatmap::new(n, edges, probs).map_err(|err| Error::Format(err.to_string()))
}

pub fn read_heatmap(path: &Path) -> Result<Heatmap> {
    parse_heatmap(&read_to_string(path)?)
}
