//! Dataset text format, one instance per line:
//! `x1 y1 ... xN yN output i1 ... iN i1` with 1-based tour indices.

use std::fmt::Write as _;
use std::path::Path;

use edgegae_core::tsp::{Instance, Point, MIN_CITIES};

use crate::error::{read_to_string, write_atomic, Error, Result};

const MIN_SIGNIFICANT: usize = 12;

/// Shortest round-trip decimal for `x`, zero-padded to at least 12
/// significant digits.
pub fn format_coord(x: f64) -> String {
    let mut s = format!("{x}");
    let digits = s.trim_start_matches(['-', '0', '.']).bytes().filter(u8::is_ascii_digit).count();
    if digits < MIN_SIGNIFICANT {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', MIN_SIGNIFICANT - digits));
    }
    s
}

pub fn dataset_to_string(instances: &[Instance]) -> Result<String> {
    let mut out = String::new();
    for inst in instances {
        let tour = inst
            .optimal_tour
            .as_ref()
            .ok_or_else(|| Error::Usage(format!("instance {} has no tour to write", inst.id)))?;
        for p in &inst.coords {
            write!(out, "{} {} ", format_coord(p.x), format_coord(p.y)).unwrap();
        }
        out.push_str("output");
        for &v in tour.order.iter().chain(tour.order.first()) {
            write!(out, " {}", v + 1).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, instances: &[Instance]) -> Result<()> {
    write_atomic(path, dataset_to_string(instances)?.as_bytes())
}

/// Parses a dataset; instance ids are their 0-based position in the file.
/// Blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Format(format!("line {lineno}: {msg}"));
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let sep = tokens
            .iter()
            .position(|&t| t == "output")
            .ok_or_else(|| bad("missing 'output' separator".into()))?;
        let coords = parse_points(&tokens[..sep]).map_err(bad)?;
        let n = coords.len();
        let mut order = Vec::with_capacity(n + 1);
        for t in &tokens[sep + 1..] {
            let v: usize = t.parse().map_err(|_| bad(format!("bad tour index '{t}'")))?;
            if v == 0 || v > n {
                return Err(bad(format!("tour index {v} outside 1..={n}")));
            }
            order.push(v - 1);
        }
        if order.len() == n + 1 && order[0] == order[n] {
            order.pop();
        }
        if order.len() != n {
            return Err(bad(format!("tour has {} indices for {} cities", order.len(), n)));
        }
        let inst = Instance::new(out.len() as u64, coords)
            .and_then(|i| i.with_tour(order))
            .map_err(|e| bad(e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Instance>> {
    parse_dataset(&read_to_string(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_points(tokens: &[&str]) -> std::result::Result<Vec<Point>, String> {
    if !tokens.len().is_multiple_of(2) {
        return Err(format!("odd number of coordinate values ({})", tokens.len()));
    }
    let vals = tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad coordinate '{t}'")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let pts: Vec<Point> = vals.chunks(2).map(|c| Point { x: c[0], y: c[1] }).collect();
    if pts.len() < MIN_CITIES {
        return Err(format!("{} cities, at least {MIN_CITIES} required", pts.len()));
    }
    Ok(pts)
}

/// Coordinates of a single instance: whitespace-separated `x y` values over
/// any number of lines. Anything from an `output` token on is ignored.
pub fn parse_coordinates(text: &str) -> Result<Vec<Point>> {
    let tokens: Vec<&str> = text.split_whitespace().take_while(|&t| t != "output").collect();
    parse_points(&tokens).map_err(Error::Format)
}
