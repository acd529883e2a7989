//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//! magic `EGAE`, format version (u32), JSON metadata (u32 length + bytes),
//! tensor count (u32), then per tensor a u16-length UTF-8 name, a u8 rank,
//! u32 dims and the f64 payload in row-major order.
//!
//! Tensors are the model parameters by name, their Adam moments as
//! `<name>.adam_m` / `<name>.adam_v`, and the batch-norm running statistics
//! as `bn.<layer>.<node|edge>.{mean,var}`. Batch-norm scale and shift are
//! ordinary parameters named `bn.<layer>.<node|edge>.{gamma,beta}`.

use std::collections::BTreeMap;
use std::path::Path;

use edgegae_core::model::LayerNorms;
use edgegae_core::nn::{Adam, BatchNormState, ParamStore, Tensor};
use edgegae_core::sampler::SamplingMode;
use edgegae_core::train::{TrainConfig, Trainer};
use edgegae_core::{EdgeGae, ModelConfig, SparseGraph};
use serde::{Deserialize, Serialize};

use crate::error::{write_atomic, Error, Result};

pub const MAGIC: &[u8; 4] = b"EGAE";
pub const VERSION: u32 = 1;

/// Everything needed besides the tensors to rebuild the model and resume
/// training exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub layers: usize,
    pub hidden: usize,
    pub knn: usize,
    pub mlp_layers: usize,
    pub delta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub pos_weight: f64,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub epochs_done: usize,
    pub step_count: u64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl CheckpointMeta {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden: self.hidden,
            knn: self.knn,
            mlp_layers: self.mlp_layers,
            delta: self.delta,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            sampling: self.sampling,
            pos_weight: self.pos_weight,
            seed: self.seed,
        }
    }

    pub fn adam(&self) -> Adam {
        Adam { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: EdgeGae,
}

impl Checkpoint {
    pub fn new(model: EdgeGae, train: &TrainConfig, adam: &Adam, epochs_done: usize) -> Self {
        let c = model.config().clone();
        let bn = model.norms.first().map(|n| (n.node.momentum, n.node.epsilon)).unwrap_or((0.1, 1e-5));
        let meta = CheckpointMeta {
            layers: c.layers,
            hidden: c.hidden,
            knn: c.knn,
            mlp_layers: c.mlp_layers,
            delta: c.delta,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            pos_weight: train.pos_weight,
            seed: train.seed,
            sampling: train.sampling,
            batch_size: train.batch_size,
            epochs: train.epochs,
            epochs_done,
            step_count: model.params.step_count,
            bn_momentum: bn.0,
            bn_epsilon: bn.1,
        };
        Self { meta, model }
    }

    pub fn from_trainer(trainer: &Trainer) -> Self {
        Self::new(trainer.model.clone(), &trainer.config, trainer.adam(), trainer.epochs_done)
    }

    /// Rebuilds a trainer positioned exactly where this checkpoint was taken.
    /// `epochs` replaces the stored epoch budget.
    pub fn into_trainer(self, graphs: Vec<SparseGraph>, epochs: usize) -> Result<Trainer> {
        let mut config = self.meta.train_config();
        config.epochs = epochs;
        let adam = self.meta.adam();
        let mut t = Trainer::new(self.model, config, graphs)?;
        t.set_adam(adam);
        t.epochs_done = self.meta.epochs_done;
        Ok(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors: Vec<(String, &Tensor)> = Vec::new();
        for p in self.model.params.iter() {
            tensors.push((p.name.clone(), &p.value));
        }
        for p in self.model.params.iter() {
            tensors.push((format!("{}.adam_m", p.name), &p.adam_m));
            tensors.push((format!("{}.adam_v", p.name), &p.adam_v));
        }
        let stats: Vec<(String, Tensor)> = bn_tensors(&self.model.norms);
        for (name, t) in &stats {
            tensors.push((name.clone(), t));
        }

        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Strict decoding: the file must contain exactly the tensors the stored
    /// configuration calls for, with matching shapes, and nothing after them.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let len = len.filter(|&l| l <= r.remaining() / 8).ok_or_else(truncated)?;
            let data = r.take(len * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Format(format!("duplicate tensor {name}")));
            }
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes after last tensor", r.remaining())));
        }

        let config = meta.model_config();
        config.validate()?;
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        let layout = config.param_layout();
        for (name, dims) in &layout {
            expected.push((name.clone(), dims.clone()));
            expected.push((format!("{name}.adam_m"), dims.clone()));
            expected.push((format!("{name}.adam_v"), dims.clone()));
        }
        for (name, t) in bn_tensors(&vec![
            LayerNorms { node: BatchNormState::new(config.hidden), edge: BatchNormState::new(config.hidden) };
            config.layers
        ]) {
            expected.push((name, t.dims));
        }
        let unknown: Vec<&str> = tensors
            .keys()
            .filter(|k| !expected.iter().any(|(n, _)| n == *k))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Format(format!("unknown tensors in checkpoint: {}", unknown.join(", "))));
        }
        for (name, dims) in &expected {
            match tensors.get(name) {
                None => return Err(Error::Format(format!("checkpoint is missing tensor {name}"))),
                Some(t) if &t.dims != dims => {
                    return Err(Error::Format(format!("tensor {name} has shape {:?}, expected {:?}", t.dims, dims)))
                }
                Some(_) => {}
            }
        }

        let mut take = |name: &str| tensors.remove(name).expect("presence checked");
        let mut params = ParamStore::new();
        for (name, _) in &layout {
            let id = params.insert(name, take(name))?;
            let p = params.param_mut(id);
            p.adam_m = take(&format!("{name}.adam_m"));
            p.adam_v = take(&format!("{name}.adam_v"));
        }
        params.step_count = meta.step_count;
        let mut norms = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut site = |s: &str| BatchNormState {
                running_mean: take(&format!("bn.{l}.{s}.mean")).data,
                running_var: take(&format!("bn.{l}.{s}.var")).data,
                momentum: meta.bn_momentum,
                epsilon: meta.bn_epsilon,
            };
            let node = site("node");
            let edge = site("edge");
            norms.push(LayerNorms { node, edge });
        }
        let mut model = EdgeGae::from_parts(config, params, norms)?;
        model.pos_weight = meta.pos_weight;
        Ok(Self { meta, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn bn_tensors(norms: &[LayerNorms]) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    for (l, n) in norms.iter().enumerate() {
        for (site, s) in [("node", &n.node), ("edge", &n.edge)] {
            out.push((format!("bn.{l}.{site}.mean"), Tensor::vector(s.running_mean.clone())));
            out.push((format!("bn.{l}.{site}.var"), Tensor::vector(s.running_var.clone())));
        }
    }
    out
}

fn truncated() -> Error {
    Error::Format("checkpoint is truncated".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(truncated());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgegae_core::model::{BatchedGraph, Mode};
    use edgegae_core::tsp::{generate_instance, knn_sparsify};

    fn small() -> (EdgeGae, BatchedGraph) {
        let cfg = ModelConfig { layers: 2, hidden: 6, knn: 4, mlp_layers: 2, delta: 1e-20 };
        let mut m = EdgeGae::new(cfg, 3).unwrap();
        let g = knn_sparsify(&generate_instance(9, 5).unwrap().coords, 4).unwrap();
        let batch = BatchedGraph::new(&[&g]).unwrap();
        // move the running statistics away from their defaults
        m.forward(&batch, Mode::Train).unwrap();
        m.params.step_count = 17;
        m.params.iter_mut().for_each(|p| p.adam_m.fill(0.25));
        (m, batch)
    }

    fn ckpt() -> (Checkpoint, BatchedGraph) {
        let (m, b) = small();
        (Checkpoint::new(m, &TrainConfig::default(), &Adam::new(0.01), 3), b)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (c, batch) = ckpt();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta, c.meta);
        assert_eq!(back.model.params, c.model.params);
        assert_eq!(back.model.norms, c.model.norms);
        let a = c.model.predict(&batch).unwrap();
        let b = back.model.predict(&batch).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let (c, _) = ckpt();
        let bytes = c.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("version"));
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn unknown_tensor_is_named() {
        let (c, _) = ckpt();
        let mut bytes = c.to_bytes();
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let at = 12 + meta_len;
        let count = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        bytes[at..at + 4].copy_from_slice(&(count + 1).to_le_bytes());
        let name = b"stray.weight";
        bytes.extend_from_slice(&(name.len() as u16).to_le_bytes());
        bytes.extend_from_slice(name);
        bytes.push(1);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0.5f64.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("stray.weight"), "{err}");
    }
}
