//! Reference tours and scale-imbalanced dataset construction.
//!
//! Labels come from an exact Held-Karp dynamic program for small instances
//! and from multi-start 2-opt beyond that.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::search::{two_opt_order, DistanceMatrix};
use crate::tsp::{canonicalize_order, generate_instance, Instance, Point, Tour, MIN_CITIES};

/// Largest instance the exact solver accepts by default.
pub const EXACT_CUTOFF: usize = 18;

/// Hard ceiling for [`held_karp_with_cutoff`]; the DP table grows as `2^n * n`.
pub const EXACT_LIMIT: usize = 21;

/// Exact optimum by Held-Karp, for `n <= EXACT_CUTOFF`.
pub fn held_karp(points: &[Point]) -> Result<Tour> {
    held_karp_with_cutoff(points, EXACT_CUTOFF)
}

/// Held-Karp with an explicit size cutoff. The returned tour starts at node 0
/// in canonical orientation.
pub fn held_karp_with_cutoff(points: &[Point], cutoff: usize) -> Result<Tour> {
    let n = points.len();
    if n < 3 {
        return Err(invalid!("need at least 3 cities, got {}", n));
    }
    if n > cutoff.min(EXACT_LIMIT) {
        return Err(Error::Capacity(format!(
            "{} cities exceed the exact cutoff of {}; use the heuristic oracle",
            n,
            cutoff.min(EXACT_LIMIT)
        )));
    }
    let dm = DistanceMatrix::new(points);
    // Nodes 1..n are relabeled 0..m; node 0 is the fixed start.
    let m = n - 1;
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for j in 0..m {
        cost[(1 << j) * m + j] = dm.get(0, j + 1);
    }
    for mask in 1..full {
        if mask.count_ones() < 2 {
            continue;
        }
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let prev = mask ^ (1 << j);
            let row = &cost[prev * m..prev * m + m];
            let mut best = f64::INFINITY;
            let mut arg = u8::MAX;
            let mut scan = prev;
            while scan != 0 {
                let i = scan.trailing_zeros() as usize;
                scan &= scan - 1;
                let c = row[i] + dm.get(i + 1, j + 1);
                if c < best {
                    best = c;
                    arg = i as u8;
                }
            }
            cost[mask * m + j] = best;
            parent[mask * m + j] = arg;
        }
    }
    let last_mask = full - 1;
    let mut best = f64::INFINITY;
    let mut end = 0;
    for j in 0..m {
        let c = cost[last_mask * m + j] + dm.get(j + 1, 0);
        if c < best {
            best = c;
            end = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut mask = last_mask;
    let mut cur = end;
    loop {
        order.push(cur + 1);
        let p = parent[mask * m + cur];
        mask ^= 1 << cur;
        if p == u8::MAX {
            break;
        }
        cur = p as usize;
    }
    order.push(0);
    order.reverse();
    canonicalize_order(&mut order);
    Tour::new(points, order)
}

/// Best of `restarts` runs of random permutation followed by 2-opt. Restart
/// `r` uses `derive_seed(seed, r)`, so more restarts never do worse.
pub fn heuristic_oracle(points: &[Point], restarts: usize, seed: u64) -> Result<Tour> {
    if restarts == 0 {
        return Err(invalid!("restarts must be at least 1"));
    }
    let n = points.len();
    let dm = DistanceMatrix::new(points);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..restarts {
        let mut rng = rng_from_seed(derive_seed(seed, r as u64));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        two_opt_order(&dm, &mut order);
        let len = dm.cycle_length(&order);
        if best.as_ref().map_or(true, |b| len < b.0) {
            best = Some((len, order));
        }
    }
    let mut order = best.map(|b| b.1).unwrap_or_default();
    canonicalize_order(&mut order);
    Tour::new(points, order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Exact,
    Heuristic,
    /// Exact up to the cutoff, heuristic above it.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_min: usize,
    pub n_max: usize,
    pub total: usize,
    pub seed: u64,
    pub oracle_mode: OracleMode,
    pub exact_cutoff: usize,
    pub heuristic_restarts: usize,
}

impl DatasetSpec {
    pub fn new(n_min: usize, n_max: usize, total: usize, seed: u64) -> Self {
        Self {
            n_min,
            n_max,
            total,
            seed,
            oracle_mode: OracleMode::Auto,
            exact_cutoff: EXACT_CUTOFF,
            heuristic_restarts: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min < MIN_CITIES || self.n_min > self.n_max {
            return Err(invalid!(
                "size range must satisfy {} <= n_min <= n_max, got {}..={}",
                MIN_CITIES,
                self.n_min,
                self.n_max
            ));
        }
        let classes = self.n_max - self.n_min + 1;
        if self.total < classes {
            return Err(invalid!(
                "total {} cannot cover {} size classes with at least one instance each",
                self.total,
                classes
            ));
        }
        if self.oracle_mode == OracleMode::Exact && self.n_max > self.exact_cutoff.min(EXACT_LIMIT) {
            return Err(Error::Capacity(format!(
                "n_max {} exceeds the exact cutoff {}",
                self.n_max, self.exact_cutoff
            )));
        }
        if self.heuristic_restarts == 0 {
            return Err(invalid!("heuristic restarts must be at least 1"));
        }
        Ok(())
    }
}

/// Per-size instance counts inversely proportional to the size, rounded by
/// largest remainder so they sum to `total` exactly. Returns `(n, count)`
/// pairs in ascending `n`.
pub fn size_allocation(n_min: usize, n_max: usize, total: usize) -> Result<Vec<(usize, usize)>> {
    let mut spec = DatasetSpec::new(n_min, n_max, total, 0);
    spec.oracle_mode = OracleMode::Heuristic;
    spec.validate()?;
    let sizes: Vec<usize> = (n_min..=n_max).collect();
    let z: f64 = sizes.iter().map(|&n| 1.0 / n as f64).sum();
    let quotas: Vec<f64> = sizes.iter().map(|&n| total as f64 / (n as f64 * z)).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // larger remainder first; equal remainders favour the smaller size
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(invalid!(
            "total {} is too small: size {} would receive no instances",
            total,
            sizes[i]
        ));
    }
    Ok(sizes.into_iter().zip(counts).collect())
}

/// `(instance index, size)` for every instance of the dataset, sizes ascending.
pub fn dataset_plan(spec: &DatasetSpec) -> Result<Vec<(u64, usize)>> {
    spec.validate()?;
    let alloc = size_allocation(spec.n_min, spec.n_max, spec.total)?;
    let mut plan = Vec::with_capacity(spec.total);
    for (n, count) in alloc {
        for _ in 0..count {
            plan.push((plan.len() as u64, n));
        }
    }
    Ok(plan)
}

/// Reference tour for one instance according to `spec.oracle_mode`.
pub fn label_instance(spec: &DatasetSpec, points: &[Point], seed: u64) -> Result<Tour> {
    let cutoff = spec.exact_cutoff.min(EXACT_LIMIT);
    match spec.oracle_mode {
        OracleMode::Exact => held_karp_with_cutoff(points, cutoff),
        OracleMode::Auto if points.len() <= cutoff => held_karp_with_cutoff(points, cutoff),
        _ => heuristic_oracle(points, spec.heuristic_restarts, derive_seed(seed, 1)),
    }
}

/// Generates and labels instance `index` of the plan. The outcome depends only
/// on `spec` and `index`.
pub fn build_instance(spec: &DatasetSpec, index: u64, n: usize) -> Result<Instance> {
    let seed = derive_seed(spec.seed, index);
    let mut inst = generate_instance(n, seed)?;
    inst.id = index;
    inst.optimal_tour = Some(label_instance(spec, &inst.coords, seed)?);
    Ok(inst)
}

/// Sequential dataset construction; see `edgegae::parallel` for the threaded
/// equivalent, which yields identical instances.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Vec<Instance>> {
    dataset_plan(spec)?
        .into_iter()
        .map(|(index, n)| build_instance(spec, index, n))
        .collect()
}
