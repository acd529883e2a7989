use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates only.
    Eval,
}

/// Running statistics of one batch-normalization site. The affine
/// `gamma`/`beta` are trainable and live in the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: BnMode,
    rows: usize,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Batch statistics (mean, biased variance) per channel of `x` (`rows x c`).
    pub fn batch_stats(x: &[f64], rows: usize, c: usize) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; c];
        for row in x.chunks_exact(c).take(rows) {
            mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; c];
        for row in x.chunks_exact(c).take(rows) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= rows as f64);
        (mean, var)
    }

    /// Folds batch statistics into the running estimates. The running
    /// variance uses the unbiased estimate when more than one row was seen.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64], rows: usize) {
        let unbias = if rows > 1 { rows as f64 / (rows as f64 - 1.0) } else { 1.0 };
        let mom = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - mom) * self.running_mean[c] + mom * mean[c];
            self.running_var[c] = (1.0 - mom) * self.running_var[c] + mom * var[c] * unbias;
        }
    }

    /// Normalizes `x` (`rows x c`, row-major) in place into `gamma * xhat + beta`.
    /// In train mode the batch statistics are returned so the caller can fold
    /// them in with [`update_running`](Self::update_running) once the pass is accepted.
    pub fn forward(
        &self,
        x: &mut [f64],
        rows: usize,
        gamma: &[f64],
        beta: &[f64],
        mode: BnMode,
    ) -> (BatchNormCache, Option<(Vec<f64>, Vec<f64>)>) {
        let c = self.channels();
        let (mean, inv_std, stats) = match mode {
            BnMode::Train => {
                let (mean, var) = Self::batch_stats(x, rows, c);
                let inv: Vec<f64> = var.iter().map(|&v| 1.0 / math::sqrt(v + self.epsilon)).collect();
                (mean.clone(), inv, Some((mean, var)))
            }
            BnMode::Eval => {
                let inv = self.running_var.iter().map(|&v| 1.0 / math::sqrt(v + self.epsilon)).collect();
                (self.running_mean.clone(), inv, None)
            }
        };
        let mut xhat = vec![0.0; rows * c];
        for (row, xh) in x.chunks_exact_mut(c).zip(xhat.chunks_exact_mut(c)).take(rows) {
            for k in 0..c {
                let h = (row[k] - mean[k]) * inv_std[k];
                xh[k] = h;
                row[k] = gamma[k] * h + beta[k];
            }
        }
        (BatchNormCache { mode, rows, xhat, inv_std }, stats)
    }
}

impl BatchNormCache {
    pub fn xhat(&self) -> &[f64] {
        &self.xhat
    }

    /// Backward pass: overwrites `dy` with `dx` and accumulates the affine
    /// gradients.
    pub fn backward(&self, dy: &mut [f64], gamma: &[f64], dgamma: &mut [f64], dbeta: &mut [f64]) {
        let c = gamma.len();
        let rows = self.rows;
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (g, xh) in dy.chunks_exact(c).zip(self.xhat.chunks_exact(c)).take(rows) {
            for k in 0..c {
                sum_dy[k] += g[k];
                sum_dy_xhat[k] += g[k] * xh[k];
            }
        }
        for k in 0..c {
            dgamma[k] += sum_dy_xhat[k];
            dbeta[k] += sum_dy[k];
        }
        match self.mode {
            BnMode::Eval => {
                for g in dy.chunks_exact_mut(c).take(rows) {
                    for k in 0..c {
                        g[k] *= gamma[k] * self.inv_std[k];
                    }
                }
            }
            BnMode::Train => {
                let m = rows as f64;
                for (g, xh) in dy.chunks_exact_mut(c).zip(self.xhat.chunks_exact(c)).take(rows) {
                    for k in 0..c {
                        // dxhat = dy * gamma; dx = inv_std/m * (m dxhat - sum dxhat - xhat sum dxhat*xhat)
                        let scale = gamma[k] * self.inv_std[k] / m;
                        g[k] = scale * (m * g[k] - sum_dy[k] - xh[k] * sum_dy_xhat[k]);
                    }
                }
            }
        }
    }
}
