//! Supervised training loop: BCE on k-NN edge labels, Adam, and either
//! shuffled or class-balanced batches.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{BatchedGraph, EdgeGae, Mode};
use crate::nn::Adam;
use crate::rng::derive_seed;
use crate::sampler::{active_batches, active_epoch_len, shuffle_batches, ClassIndex, SamplingMode};
use crate::tsp::{knn_sparsify, label_edges, Instance, SparseGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub sampling: SamplingMode,
    pub pos_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 500, batch_size: 32, lr: 1e-3, sampling: SamplingMode::Shuffle, pos_weight: 1.0, seed: 0 }
    }
}

/// Seed used to initialize model weights for a training run.
pub fn init_seed(train_seed: u64) -> u64 {
    derive_seed(train_seed, 0)
}

/// k-NN graphs with edge labels for every instance. Returns the graphs and
/// the summed coverage deficit (tour edges missing from the sparse graphs).
pub fn labeled_graphs(instances: &[Instance], k: usize) -> Result<(Vec<SparseGraph>, usize)> {
    let mut deficit = 0;
    let graphs = instances
        .iter()
        .map(|inst| {
            let tour = inst
                .optimal_tour
                .as_ref()
                .ok_or_else(|| invalid!("instance {} has no reference tour", inst.id))?;
            let g = knn_sparsify(&inst.coords, k)?;
            let (g, d) = label_edges(&g, tour)?;
            deficit += d;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, deficit))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Zero-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

pub struct Trainer {
    pub model: EdgeGae,
    pub config: TrainConfig,
    adam: Adam,
    graphs: Vec<SparseGraph>,
    classes: ClassIndex,
    /// Epochs completed so far (non-zero when resuming).
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(mut model: EdgeGae, config: TrainConfig, graphs: Vec<SparseGraph>) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(invalid!("batch size must be at least 1"));
        }
        if !(config.lr >= 0.0) {
            return Err(invalid!("learning rate must be non-negative"));
        }
        if graphs.is_empty() {
            return Err(invalid!("training set is empty"));
        }
        if let Some(g) = graphs.iter().find(|g| g.labels.is_none()) {
            return Err(invalid!("training graph with {} nodes has no labels", g.n()));
        }
        model.pos_weight = config.pos_weight;
        let sizes: Vec<usize> = graphs.iter().map(SparseGraph::n).collect();
        Ok(Self {
            model,
            adam: Adam::new(config.lr),
            classes: ClassIndex::from_sizes(&sizes),
            config,
            graphs,
            epochs_done: 0,
        })
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn set_adam(&mut self, adam: Adam) {
        self.adam = adam;
    }

    /// Batches for a given epoch; a pure function of the config seed and the epoch.
    pub fn epoch_batches(&self, epoch: usize) -> Result<Vec<Vec<usize>>> {
        let seed = derive_seed(self.config.seed, 1 + epoch as u64);
        match self.config.sampling {
            SamplingMode::Shuffle => shuffle_batches(self.graphs.len(), self.config.batch_size, seed),
            SamplingMode::Active => active_batches(
                &self.classes,
                self.config.batch_size,
                active_epoch_len(self.graphs.len(), self.config.batch_size),
                seed,
            ),
        }
    }

    /// Forward, backward and one Adam update on the given dataset entries.
    pub fn step(&mut self, indices: &[usize]) -> Result<f64> {
        let refs: Vec<&SparseGraph> = indices.iter().map(|&i| &self.graphs[i]).collect();
        let batch = BatchedGraph::new(&refs)?;
        let (_, loss) = self.model.forward_loss(&batch, Mode::Train)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(alloc::format!("non-finite loss {loss}")));
        }
        self.model.backward()?;
        self.adam.step(&mut self.model.params);
        Ok(loss)
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.epochs_done;
        let batches = self.epoch_batches(epoch)?;
        let mut total = 0.0;
        for b in &batches {
            total += self.step(b)?;
        }
        self.epochs_done += 1;
        Ok(EpochStats { epoch, mean_loss: total / batches.len().max(1) as f64, steps: batches.len() })
    }

    /// Trains until `config.epochs` epochs are done, reporting each one.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochStats, &Self)) -> Result<Vec<EpochStats>> {
        let mut out = Vec::new();
        while self.epochs_done < self.config.epochs {
            let stats = self.run_epoch()?;
            on_epoch(&stats, self);
            out.push(stats);
        }
        Ok(out)
    }
}
