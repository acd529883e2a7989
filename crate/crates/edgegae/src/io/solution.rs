//! Solution lines: `<id> <length> <gap> <i1 ... iN>` with 0-based indices.
//! The gap is a percentage, `NA` when no reference exists, or prefixed with
//! `~` when measured against a heuristic reference.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gap {
    None,
    Exact(f64),
    Approximate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionLine {
    pub id: u64,
    pub length: f64,
    pub gap: Gap,
    pub tour: Vec<usize>,
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gap::None => f.write_str("NA"),
            Gap::Exact(g) => write!(f, "{g}"),
            Gap::Approximate(g) => write!(f, "~{g}"),
        }
    }
}

impl fmt::Display for SolutionLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.id, self.length, self.gap)?;
        for v in &self.tour {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        let mut s = SolutionLine { id: 0, length: 4.0, gap: Gap::None, tour: vec![0, 1, 2, 3] };
        assert_eq!(s.to_string(), "0 4 NA 0 1 2 3");
        s.gap = Gap::Approximate(0.5);
        assert_eq!(s.to_string(), "0 4 ~0.5 0 1 2 3");
        s.gap = Gap::Exact(0.0);
        assert_eq!(s.to_string(), "0 4 0 0 1 2 3");
    }
}
