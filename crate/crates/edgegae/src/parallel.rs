//! Thread-pool versions of the embarrassingly parallel operations. Every
//! function here returns exactly what its sequential counterpart in
//! `edgegae-core` returns, whatever the thread count.

use std::time::{Duration, Instant};

use edgegae_core::metrics::{evaluate_instance, EvalConfig, EvalReport};
use edgegae_core::oracle::{build_instance, dataset_plan, DatasetSpec};
use edgegae_core::search::{pick_best, roulette_sample, solve_with_scores, DistanceMatrix, ScoreTable, SolveStats, Strategy};
use edgegae_core::{EdgeGae, Heatmap, Instance, Point, Tour};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};

/// A pool with `threads` workers; `None` or 0 picks the number of CPUs.
pub fn thread_pool(threads: Option<usize>) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start thread pool: {e}")))
}

pub fn build_dataset(spec: &DatasetSpec, pool: &ThreadPool) -> Result<Vec<Instance>> {
    let plan = dataset_plan(spec)?;
    let out = pool.install(|| {
        plan.par_iter()
            .map(|&(index, n)| build_instance(spec, index, n))
            .collect::<edgegae_core::Result<Vec<_>>>()
    })?;
    Ok(out)
}

pub fn evaluate(model: &EdgeGae, instances: &[Instance], config: &EvalConfig, pool: &ThreadPool) -> Result<EvalReport> {
    let records = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| evaluate_instance(model, inst, config))
            .collect::<edgegae_core::Result<Vec<_>>>()
    })?;
    Ok(EvalReport::from_records(records))
}

/// Heatmap-guided search with roulette samples spread over the pool.
/// Also returns the wall-clock time of the search.
pub fn solve(
    points: &[Point],
    heatmap: &Heatmap,
    config: &edgegae_core::search::SearchConfig,
    pool: &ThreadPool,
) -> Result<(Tour, SolveStats, Duration)> {
    config.validate()?;
    if heatmap.n != points.len() {
        return Err(edgegae_core::Error::InvalidArgument(format!(
            "heatmap has {} nodes, instance has {}",
            heatmap.n,
            points.len()
        ))
        .into());
    }
    let start = Instant::now();
    let dm = DistanceMatrix::new(points);
    let scores = ScoreTable::symmetrize(heatmap, config.epsilon_prob);
    let (tour, stats) = match config.strategy {
        Strategy::Roulette => {
            let results = pool.install(|| {
                (0..config.samples).into_par_iter().map(|s| roulette_sample(&dm, &scores, config, s)).collect()
            });
            let (order, stats) = pick_best(results);
            (Tour::new(points, order)?, stats)
        }
        Strategy::Beam => solve_with_scores(points, &dm, &scores, config)?,
    };
    Ok((tour, stats, start.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgegae_core::search::SearchConfig;
    use edgegae_core::tsp::{generate_instance, knn_sparsify};

    #[test]
    fn parallel_solve_matches_sequential() {
        let inst = generate_instance(15, 2).unwrap();
        let g = knn_sparsify(&inst.coords, 6).unwrap();
        let probs: Vec<f64> = (0..g.edges.len()).map(|i| ((i * 37) % 11) as f64 / 11.0 + 0.01).collect();
        let h = Heatmap::new(15, g.edges.clone(), probs).unwrap();
        let cfg = SearchConfig { samples: 40, seed: 9, ..SearchConfig::default() };
        let (seq, seq_stats) = edgegae_core::search::solve(&inst.coords, &h, &cfg).unwrap();
        for threads in [1, 3] {
            let pool = thread_pool(Some(threads)).unwrap();
            let (par, par_stats, _) = solve(&inst.coords, &h, &cfg, &pool).unwrap();
            assert_eq!(par, seq);
            assert_eq!(par_stats, seq_stats);
        }
    }

    #[test]
    fn parallel_dataset_matches_sequential() {
        let spec = DatasetSpec::new(5, 10, 40, 11);
        let seq = edgegae_core::oracle::build_dataset(&spec).unwrap();
        let pool = thread_pool(Some(4)).unwrap();
        assert_eq!(build_dataset(&spec, &pool).unwrap(), seq);
    }
}
