//! Turning heatmaps into tours: roulette sampling, beam search and 2-opt.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math;
use crate::rng::{derive_seed, rng_from_seed};
use crate::tsp::{check_permutation, Heatmap, Point, Tour};

/// Minimum length decrease for a 2-opt move to count as an improvement.
const IMPROVEMENT_TOL: f64 = 1e-12;

/// Dense symmetric distance table.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(points: &[Point]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = points[i].dist(&points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Closed-cycle length, summed in the same order as [`crate::tsp::tour_length`].
    pub fn cycle_length(&self, order: &[usize]) -> f64 {
        let n = order.len();
        if n == 0 {
            return 0.0;
        }
        let mut total = self.get(order[n - 1], order[0]);
        for w in order.windows(2) {
            total += self.get(w[0], w[1]);
        }
        total
    }
}

/// First-improvement 2-opt. Position 0 stays fixed; for every pair of
/// positions `i < j` the segment `i..=j` is reversed as soon as doing so
/// shortens the tour, and scanning repeats until a full pass finds nothing.
pub fn two_opt_order(dm: &DistanceMatrix, order: &mut [usize]) {
    let n = order.len();
    if n < 4 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..n - 1 {
            for j in (i + 1)..n {
                let a = order[i - 1];
                let b = order[i];
                let c = order[j];
                let d = order[(j + 1) % n];
                let delta = dm.get(a, c) + dm.get(b, d) - dm.get(a, b) - dm.get(c, d);
                if delta < -IMPROVEMENT_TOL {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
}

/// 2-opt on a validated tour; the result is never longer than the input.
pub fn two_opt(points: &[Point], tour: &Tour) -> Result<Tour> {
    check_permutation(&tour.order, points.len())?;
    let dm = DistanceMatrix::new(points);
    let mut order = tour.order.clone();
    two_opt_order(&dm, &mut order);
    let length = crate::tsp::cycle_length(points, &order);
    if length < tour.length {
        Ok(Tour { order, length })
    } else {
        Ok(tour.clone())
    }
}

/// Symmetric node-to-node scores derived from a directed heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    n: usize,
    scores: Vec<f64>,
}

impl ScoreTable {
    /// Averages the available directed probabilities of each pair; pairs with
    /// no edge in either direction get `epsilon_prob`. The diagonal is zero.
    pub fn symmetrize(heatmap: &Heatmap, epsilon_prob: f64) -> Self {
        let n = heatmap.n;
        let mut sum = vec![0.0; n * n];
        let mut count = vec![0u8; n * n];
        for (&(u, v), &p) in heatmap.edges.iter().zip(&heatmap.probs) {
            for idx in [u * n + v, v * n + u] {
                sum[idx] += p;
                count[idx] += 1;
            }
        }
        let scores = (0..n * n)
            .map(|idx| {
                if idx / n == idx % n {
                    0.0
                } else if count[idx] == 0 {
                    epsilon_prob
                } else {
                    sum[idx] / f64::from(count[idx])
                }
            })
            .collect();
        Self { n, scores }
    }

    /// Table with the same score on every off-diagonal pair.
    pub fn constant(n: usize, value: f64) -> Self {
        let scores = (0..n * n).map(|idx| if idx / n == idx % n { 0.0 } else { value }).collect();
        Self { n, scores }
    }

    pub fn from_dense(n: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != n * n {
            return Err(invalid!("score table needs {} entries, got {}", n * n, scores.len()));
        }
        Ok(Self { n, scores })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.scores[u * self.n + v]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Roulette-wheel construction: random start, then each next node is drawn
/// from all unvisited nodes with probability proportional to its score.
pub fn roulette_order(scores: &ScoreTable, seed: u64) -> Vec<usize> {
    let n = scores.n();
    let mut rng = rng_from_seed(seed);
    let mut order = Vec::with_capacity(n);
    if n == 0 {
        return order;
    }
    let mut unvisited: Vec<usize> = (0..n).collect();
    let start = rng.gen_range(0..n);
    unvisited.swap_remove(start);
    unvisited.sort_unstable();
    order.push(start);
    let mut current = start;
    while !unvisited.is_empty() {
        let total: f64 = unvisited.iter().map(|&v| scores.get(current, v)).sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = unvisited.len() - 1;
            for (slot, &v) in unvisited.iter().enumerate() {
                acc += scores.get(current, v);
                if r < acc {
                    chosen = slot;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..unvisited.len())
        };
        current = unvisited.remove(pick);
        order.push(current);
    }
    order
}

/// Log-score of the closed cycle `order`, with scores floored at `floor`.
pub fn path_log_score(scores: &ScoreTable, order: &[usize], floor: f64) -> f64 {
    let n = order.len();
    (0..n).map(|i| math::ln(scores.get(order[i], order[(i + 1) % n]).max(floor))).sum()
}

#[derive(Clone)]
struct Partial {
    score: f64,
    path: Vec<usize>,
    visited: Vec<bool>,
}

fn rank_partials(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// Deterministic beam search from node 0. Partial tours are ranked by their
/// summed log-scores (ties: lexicographically smaller path first); the best
/// closed cycle is returned.
pub fn beam_order(scores: &ScoreTable, beam_width: usize, floor: f64) -> Result<Vec<usize>> {
    if beam_width == 0 {
        return Err(invalid!("beam width must be at least 1"));
    }
    let n = scores.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let lg = |u: usize, v: usize| math::ln(scores.get(u, v).max(floor));
    let mut visited0 = vec![false; n];
    visited0[0] = true;
    let mut beam = vec![Partial { score: 0.0, path: vec![0], visited: visited0 }];
    for _ in 1..n {
        let mut cands: Vec<(f64, Vec<usize>)> = Vec::with_capacity(beam.len() * n);
        let mut origin: Vec<usize> = Vec::with_capacity(beam.len() * n);
        for (bi, p) in beam.iter().enumerate() {
            let last = *p.path.last().unwrap();
            for v in 0..n {
                if !p.visited[v] {
                    let mut path = p.path.clone();
                    path.push(v);
                    cands.push((p.score + lg(last, v), path));
                    origin.push(bi);
                }
            }
        }
        let mut idx: Vec<usize> = (0..cands.len()).collect();
        idx.sort_by(|&a, &b| rank_partials(&cands[a], &cands[b]));
        idx.truncate(beam_width);
        beam = idx
            .into_iter()
            .map(|i| {
                let mut visited = beam[origin[i]].visited.clone();
                visited[*cands[i].1.last().unwrap()] = true;
                Partial { score: cands[i].0, path: core::mem::take(&mut cands[i].1), visited }
            })
            .collect();
    }
    let best = beam
        .into_iter()
        .map(|p| {
            let closing = lg(*p.path.last().unwrap(), 0);
            (p.score + closing, p.path)
        })
        .min_by(rank_partials)
        .unwrap();
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Roulette,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub samples: usize,
    pub beam_width: usize,
    pub two_opt: bool,
    pub epsilon_prob: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Roulette,
            samples: 200,
            beam_width: 5,
            two_opt: true,
            epsilon_prob: 1e-8,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid!("samples must be at least 1"));
        }
        if self.beam_width == 0 {
            return Err(invalid!("beam width must be at least 1"));
        }
        if !(self.epsilon_prob > 0.0) {
            return Err(invalid!("epsilon_prob must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStats {
    /// Final length of every constructed tour, in sample order.
    pub sample_lengths: Vec<f64>,
    /// Index of the winning sample.
    pub best_sample: usize,
}

/// One roulette sample (and its 2-opt refinement if enabled). Sample `s`
/// draws from the seed `derive_seed(config.seed, s)`, so any prefix of
/// samples is reproducible on its own.
pub fn roulette_sample(
    dm: &DistanceMatrix,
    scores: &ScoreTable,
    config: &SearchConfig,
    sample: usize,
) -> (Vec<usize>, f64) {
    let mut order = roulette_order(scores, derive_seed(config.seed, sample as u64));
    if config.two_opt {
        two_opt_order(dm, &mut order);
    }
    let len = dm.cycle_length(&order);
    (order, len)
}

/// Reduces per-sample results by (length, sample index).
pub fn pick_best(results: Vec<(Vec<usize>, f64)>) -> (Vec<usize>, SolveStats) {
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 < results[best].1 {
            best = i;
        }
    }
    let sample_lengths = results.iter().map(|r| r.1).collect();
    let order = results.into_iter().nth(best).map(|r| r.0).unwrap_or_default();
    (order, SolveStats { sample_lengths, best_sample: best })
}

/// Heatmap-guided search for one instance.
pub fn solve(points: &[Point], heatmap: &Heatmap, config: &SearchConfig) -> Result<(Tour, SolveStats)> {
    config.validate()?;
    if heatmap.n != points.len() {
        return Err(invalid!("heatmap has {} nodes, instance has {}", heatmap.n, points.len()));
    }
    let dm = DistanceMatrix::new(points);
    let scores = ScoreTable::symmetrize(heatmap, config.epsilon_prob);
    solve_with_scores(points, &dm, &scores, config)
}

pub fn solve_with_scores(
    points: &[Point],
    dm: &DistanceMatrix,
    scores: &ScoreTable,
    config: &SearchConfig,
) -> Result<(Tour, SolveStats)> {
    config.validate()?;
    let (order, stats) = match config.strategy {
        Strategy::Roulette => {
            let results = (0..config.samples).map(|s| roulette_sample(dm, scores, config, s)).collect();
            pick_best(results)
        }
        Strategy::Beam => {
            let mut order = beam_order(scores, config.beam_width, config.epsilon_prob)?;
            if config.two_opt {
                two_opt_order(dm, &mut order);
            }
            let len = dm.cycle_length(&order);
            (order, SolveStats { sample_lengths: vec![len], best_sample: 0 })
        }
    };
    Ok((Tour::new(points, order)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::{generate_instance, knn_sparsify};

    fn square() -> Vec<Point> {
        vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0)]
    }

    #[test]
    fn two_opt_uncrosses_square() {
        let pts = square();
        let crossed = Tour::new(&pts, vec![0, 2, 1, 3]).unwrap();
        assert!((crossed.length - (2.0 + 2.0 * math::sqrt(2.0))).abs() < 1e-12);
        let fixed = two_opt(&pts, &crossed).unwrap();
        assert!((fixed.length - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_opt_fixed_point() {
        let pts = square();
        let good = Tour::new(&pts, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(two_opt(&pts, &good).unwrap(), good);
    }

    #[test]
    fn two_opt_never_lengthens() {
        for seed in 0..50 {
            let inst = generate_instance(10, seed).unwrap();
            let mut order: Vec<usize> = (0..10).collect();
            let mut rng = rng_from_seed(seed + 1000);
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let t = Tour::new(&inst.coords, order).unwrap();
            let out = two_opt(&inst.coords, &t).unwrap();
            assert!(out.length <= t.length);
            check_permutation(&out.order, 10).unwrap();
        }
    }

    #[test]
    fn symmetrize_rules() {
        let hm = Heatmap::new(4, vec![(0, 1), (1, 0), (2, 3)], vec![0.8, 0.6, 0.8]).unwrap();
        let s = ScoreTable::symmetrize(&hm, 1e-8);
        assert!((s.get(0, 1) - 0.7).abs() < 1e-15);
        assert!((s.get(1, 0) - 0.7).abs() < 1e-15);
        assert_eq!(s.get(2, 3), 0.8);
        assert_eq!(s.get(3, 2), 0.8);
        assert_eq!(s.get(0, 3), 1e-8);
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn roulette_is_permutation_and_deterministic() {
        let s = ScoreTable::constant(9, 0.3);
        for seed in 0..20 {
            let o = roulette_order(&s, seed);
            check_permutation(&o, 9).unwrap();
            assert_eq!(o, roulette_order(&s, seed));
        }
    }

    #[test]
    fn roulette_follows_dominant_score() {
        let n = 6;
        let eps = 1e-8;
        let mut dense = vec![eps; n * n];
        for i in 0..n {
            dense[i * n + i] = 0.0;
        }
        // from whichever start, node (start+1)%n dominates
        for i in 0..n {
            dense[i * n + (i + 1) % n] = 1.0;
        }
        let s = ScoreTable::from_dense(n, dense).unwrap();
        let mut hits = 0;
        let trials = 2000;
        for seed in 0..trials {
            let o = roulette_order(&s, seed);
            if o[1] == (o[0] + 1) % n {
                hits += 1;
            }
        }
        let bound = 1.0 - (n as f64 - 2.0) * eps;
        assert!(hits as f64 / trials as f64 >= bound - 1e-3);
        assert_eq!(hits, trials);
    }

    #[test]
    fn beam_width_one_is_greedy() {
        for seed in 0..20 {
            let n = 7;
            let mut rng = rng_from_seed(seed);
            let dense: Vec<f64> =
                (0..n * n).map(|i| if i / n == i % n { 0.0 } else { rng.gen::<f64>() }).collect();
            let s = ScoreTable::from_dense(n, dense).unwrap();
            let mut greedy = vec![0usize];
            let mut seen = vec![false; n];
            seen[0] = true;
            while greedy.len() < n {
                let cur = *greedy.last().unwrap();
                let next = (0..n)
                    .filter(|&v| !seen[v])
                    .max_by(|&a, &b| s.get(cur, a).total_cmp(&s.get(cur, b)).then(b.cmp(&a)))
                    .unwrap();
                seen[next] = true;
                greedy.push(next);
            }
            assert_eq!(beam_order(&s, 1, 1e-8).unwrap(), greedy);
        }
    }

    #[test]
    fn beam_rejects_zero_width() {
        assert!(beam_order(&ScoreTable::constant(5, 0.5), 0, 1e-8).is_err());
    }

    #[test]
    fn solve_uniform_heatmap_is_valid_and_deterministic() {
        let inst = generate_instance(12, 5).unwrap();
        let g = knn_sparsify(&inst.coords, 25).unwrap();
        let hm = Heatmap::uniform(&g, 0.5);
        let cfg = SearchConfig { samples: 20, seed: 3, ..SearchConfig::default() };
        let (t1, st1) = solve(&inst.coords, &hm, &cfg).unwrap();
        let (t2, _) = solve(&inst.coords, &hm, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(st1.sample_lengths.len(), 20);
        check_permutation(&t1.order, 12).unwrap();
        let beam = SearchConfig { strategy: Strategy::Beam, beam_width: 3, ..cfg };
        let (tb, _) = solve(&inst.coords, &hm, &beam).unwrap();
        check_permutation(&tb.order, 12).unwrap();
    }

    #[test]
    fn solve_rejects_bad_config() {
        let inst = generate_instance(6, 5).unwrap();
        let g = knn_sparsify(&inst.coords, 25).unwrap();
        let hm = Heatmap::uniform(&g, 0.5);
        let cfg = SearchConfig { samples: 0, ..SearchConfig::default() };
        assert!(solve(&inst.coords, &hm, &cfg).is_err());
    }
}
