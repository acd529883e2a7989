//! Instances, tours, k-NN sparsification and edge labels.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::math;
use crate::rng::rng_from_seed;

/// Smallest supported city count.
pub const MIN_CITIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance. Every length in the crate goes through this.
    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        math::sqrt(dx * dx + dy * dy)
    }
}

/// Checks that `order` is a permutation of `0..n`.
pub fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(invalid!("tour has {} entries, expected {}", order.len(), n));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n {
            return Err(invalid!("tour index {} out of range 0..{}", v, n));
        }
        if core::mem::replace(&mut seen[v], true) {
            return Err(invalid!("tour visits node {} twice", v));
        }
    }
    Ok(())
}

/// Closed-cycle Euclidean length of `order` over `points`.
pub fn tour_length(points: &[Point], order: &[usize]) -> Result<f64> {
    check_permutation(order, points.len())?;
    Ok(cycle_length(points, order))
}

/// Same as [`tour_length`] without the permutation check.
pub(crate) fn cycle_length(points: &[Point], order: &[usize]) -> f64 {
    let n = order.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = points[order[n - 1]].dist(&points[order[0]]);
    for w in order.windows(2) {
        total += points[w[0]].dist(&points[w[1]]);
    }
    total
}

/// A Hamiltonian cycle with its cached length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn new(points: &[Point], order: Vec<usize>) -> Result<Self> {
        let length = tour_length(points, &order)?;
        Ok(Self { order, length })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Rotates the tour to start at node 0 and picks the direction whose
    /// second node has the smaller index.
    pub fn canonicalize(&mut self) {
        canonicalize_order(&mut self.order);
    }

    pub fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// For every node, its predecessor and successor on the cycle.
    pub fn neighbours(&self) -> Vec<[usize; 2]> {
        let n = self.order.len();
        let mut adj = vec![[0usize; 2]; n];
        for (pos, &v) in self.order.iter().enumerate() {
            adj[v] = [self.order[(pos + n - 1) % n], self.order[(pos + 1) % n]];
        }
        adj
    }
}

pub(crate) fn canonicalize_order(order: &mut [usize]) {
    let n = order.len();
    if n < 3 {
        return;
    }
    if let Some(start) = order.iter().position(|&v| v == 0) {
        order.rotate_left(start);
    }
    if order[1] > order[n - 1] {
        order[1..].reverse();
    }
}

/// A TSP instance with cities in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u64,
    pub coords: Vec<Point>,
    pub optimal_tour: Option<Tour>,
}

impl Instance {
    pub fn new(id: u64, coords: Vec<Point>) -> Result<Self> {
        if coords.len() < MIN_CITIES {
            return Err(invalid!(
                "instance needs at least {} cities, got {}",
                MIN_CITIES,
                coords.len()
            ));
        }
        for (i, p) in coords.iter().enumerate() {
            let inside = |v: f64| (0.0..=1.0).contains(&v);
            if !inside(p.x) || !inside(p.y) {
                return Err(invalid!("city {} at ({}, {}) lies outside [0,1]^2", i, p.x, p.y));
            }
        }
        Ok(Self { id, coords, optimal_tour: None })
    }

    pub fn with_tour(mut self, order: Vec<usize>) -> Result<Self> {
        self.optimal_tour = Some(Tour::new(&self.coords, order)?);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn tour_length(&self, order: &[usize]) -> Result<f64> {
        tour_length(&self.coords, order)
    }
}

/// `n` i.i.d. uniform cities in the unit square; the id is set to `seed`.
pub fn generate_instance(n: usize, seed: u64) -> Result<Instance> {
    if n < MIN_CITIES {
        return Err(invalid!("instance needs at least {} cities, got {}", MIN_CITIES, n));
    }
    let mut rng = rng_from_seed(seed);
    let coords = (0..n).map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>())).collect();
    Instance::new(seed, coords)
}

/// Directed k-nearest-neighbour graph of an instance.
///
/// Edges are grouped by source node in ascending order; within a group they
/// run from the nearest neighbour outwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    pub coords: Vec<Point>,
    pub edges: Vec<(usize, usize)>,
    pub edge_feat: Vec<f64>,
    pub labels: Option<Vec<bool>>,
}

impl SparseGraph {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Largest out-degree in the graph.
    pub fn max_out_degree(&self) -> usize {
        let mut deg = vec![0usize; self.n()];
        for &(s, _) in &self.edges {
            deg[s] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    pub fn positive_count(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().filter(|&&b| b).count())
    }
}

/// Builds the directed k-NN graph: each node points to its `min(k, n-1)`
/// nearest neighbours, distance ties going to the smaller index.
pub fn knn_sparsify(points: &[Point], k: usize) -> Result<SparseGraph> {
    if k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    let n = points.len();
    let degree = k.min(n.saturating_sub(1));
    let mut edges = Vec::with_capacity(n * degree);
    let mut edge_feat = Vec::with_capacity(n * degree);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for u in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&v| v != u).map(|v| (points[u].dist(&points[v]), v)));
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if degree < cand.len() {
            cand.select_nth_unstable_by(degree, by_dist);
            cand.truncate(degree);
        }
        cand.sort_unstable_by(by_dist);
        for &(d, v) in &cand {
            edges.push((u, v));
            edge_feat.push(d);
        }
    }
    Ok(SparseGraph { coords: points.to_vec(), edges, edge_feat, labels: None })
}

/// Labels every directed edge with whether its endpoints are adjacent on
/// `optimal`. Also returns the number of undirected tour edges that have no
/// directed counterpart in the graph (the coverage deficit).
pub fn label_edges(graph: &SparseGraph, optimal: &Tour) -> Result<(SparseGraph, usize)> {
    let n = graph.n();
    if optimal.len() != n {
        return Err(invalid!("tour covers {} nodes but the graph has {}", optimal.len(), n));
    }
    check_permutation(&optimal.order, n)?;
    let adj = optimal.neighbours();
    let labels: Vec<bool> = graph
        .edges
        .iter()
        .map(|&(u, v)| adj[u][0] == v || adj[u][1] == v)
        .collect();

    let mut present = alloc::collections::BTreeSet::new();
    for &(u, v) in &graph.edges {
        present.insert((u.min(v), u.max(v)));
    }
    let mut deficit = 0;
    for pos in 0..n {
        let a = optimal.order[pos];
        let b = optimal.order[(pos + 1) % n];
        if !present.contains(&(a.min(b), a.max(b))) {
            deficit += 1;
        }
    }
    let mut out = graph.clone();
    out.labels = Some(labels);
    Ok((out, deficit))
}

/// Per-directed-edge probability of membership in the optimal tour.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub probs: Vec<f64>,
}

impl Heatmap {
    pub fn new(n: usize, edges: Vec<(usize, usize)>, probs: Vec<f64>) -> Result<Self> {
        if edges.len() != probs.len() {
            return Err(invalid!("{} edges but {} probabilities", edges.len(), probs.len()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid!("probability {} outside [0,1]", p));
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= n || d >= n || s == d) {
            return Err(invalid!("edge {}->{} invalid for {} nodes", s, d, n));
        }
        Ok(Self { n, edges, probs })
    }

    /// Constant heatmap over the edges of `graph`.
    pub fn uniform(graph: &SparseGraph, p: f64) -> Self {
        Self { n: graph.n(), edges: graph.edges.clone(), probs: vec![p; graph.edge_count()] }
    }
}
