use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::math;
use crate::rng::Rng;

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Position of the parameter in insertion order.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
    index: BTreeMap<String, usize>,
    pub step_count: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(invalid!("duplicate parameter name {}", name));
        }
        let zeros = Tensor::zeros(&value.dims);
        let id = self.entries.len();
        self.entries.push(Param {
            name: name.to_string(),
            grad: zeros.clone(),
            adam_m: zeros.clone(),
            adam_v: zeros,
            value,
        });
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        match self.index.get(name) {
            Some(&i) => Some(&mut self.entries[i]),
            None => None,
        }
    }

    #[inline]
    pub fn param(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    #[inline]
    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value.data
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].grad.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|p| p.grad.fill(0.0));
    }

    pub fn scale_grad(&mut self, factor: f64) {
        for p in &mut self.entries {
            p.grad.data.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }
}

/// `rows x cols` matrix with entries uniform in `±sqrt(6 / (rows + cols))`.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let bound = math::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor { dims: alloc::vec![rows, cols], data }
}
