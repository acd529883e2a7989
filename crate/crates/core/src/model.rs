//! The edge-aware residual gated graph autoencoder.
//!
//! Node features are city coordinates and edge features are Euclidean
//! distances. Both are embedded linearly to `H` channels, refined by `L`
//! residual gated layers and decoded per directed edge into the probability
//! that the edge lies on the optimal tour.
//!
//! For a directed edge `src -> dst` the encoder treats `dst` as the
//! aggregating node `i` and `src` as its neighbour `j`:
//!
//! ```text
//! e_hat = C e + D h_dst + E h_src
//! w     = sigmoid(e) / (sum over in-edges of dst of sigmoid(e) + delta)
//! h_hat = A h_dst + sum over in-edges of (w * B h_src)
//! h'    = relu(BN(h_hat)) + h        e' = relu(BN(e_hat)) + e
//! ```
//!
//! The decoder computes `d = sigmoid(F h_src + G h_dst) * J e` and feeds it
//! through an MLP ending in a sigmoid.
//!
//! Gradients are produced by hand-written reverse passes over a tape that
//! the training forward pass records.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::nn::{
    bce_loss, bce_loss_grad, gemm, xavier_uniform, BatchNormCache, BatchNormState, BnMode, MatRef,
    ParamId, ParamStore, Tensor,
};
use crate::rng::rng_from_seed;
use crate::tsp::{Heatmap, Point, SparseGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of encoder layers.
    pub layers: usize,
    /// Width of node and edge embeddings.
    pub hidden: usize,
    /// Out-degree of the k-NN input graphs.
    pub knn: usize,
    /// Fully connected layers in the output head (`H -> ... -> H -> 1`).
    pub mlp_layers: usize,
    /// Stabilizer added to the gate denominators.
    pub delta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { layers: 4, hidden: 64, knn: 25, mlp_layers: 3, delta: 1e-20 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.mlp_layers == 0 || self.knn == 0 {
            return Err(invalid!("layers, hidden, mlp_layers and knn must all be at least 1"));
        }
        if !(self.delta > 0.0) {
            return Err(invalid!("delta must be positive"));
        }
        Ok(())
    }

    /// Every parameter the model owns, with its shape, in creation order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden;
        let mut out = vec![
            (String::from("embed.node.weight"), vec![h, 2]),
            (String::from("embed.node.bias"), vec![h]),
            (String::from("embed.edge.weight"), vec![h, 1]),
            (String::from("embed.edge.bias"), vec![h]),
        ];
        for l in 0..self.layers {
            for w in ["A", "B", "C", "D", "E"] {
                out.push((format!("layer.{l}.{w}"), vec![h, h]));
            }
            for site in ["node", "edge"] {
                out.push((format!("bn.{l}.{site}.gamma"), vec![h]));
                out.push((format!("bn.{l}.{site}.beta"), vec![h]));
            }
        }
        for w in ["F", "G", "J"] {
            out.push((format!("decoder.{w}"), vec![h, h]));
        }
        for t in 0..self.mlp_layers {
            let out_dim = if t + 1 == self.mlp_layers { 1 } else { h };
            out.push((format!("mlp.{t}.weight"), vec![out_dim, h]));
            out.push((format!("mlp.{t}.bias"), vec![out_dim]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    fn bn(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Train,
            Mode::Eval => BnMode::Eval,
        }
    }
}

/// Several sparse graphs concatenated into one disjoint graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub node_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    pub coords: Vec<Point>,
    /// Edges with node indices shifted into the concatenated numbering.
    pub edges: Vec<(usize, usize)>,
    pub edge_feat: Vec<f64>,
    pub labels: Option<Vec<f64>>,
    in_ptr: Vec<usize>,
    in_edges: Vec<usize>,
}

impl BatchedGraph {
    pub fn new(graphs: &[&SparseGraph]) -> Result<Self> {
        let mut node_offsets = vec![0];
        let mut edge_offsets = vec![0];
        let mut coords = Vec::new();
        let mut edges = Vec::new();
        let mut edge_feat = Vec::new();
        let all_labeled = !graphs.is_empty() && graphs.iter().all(|g| g.labels.is_some());
        let mut labels = Vec::new();
        for g in graphs {
            let base = coords.len();
            let n = g.n();
            if g.edge_feat.len() != g.edges.len() {
                return Err(invalid!("graph has {} edges but {} edge features", g.edges.len(), g.edge_feat.len()));
            }
            for &(s, d) in &g.edges {
                if s >= n || d >= n || s == d {
                    return Err(invalid!("edge {}->{} invalid for {} nodes", s, d, n));
                }
                edges.push((s + base, d + base));
            }
            coords.extend_from_slice(&g.coords);
            edge_feat.extend_from_slice(&g.edge_feat);
            if all_labeled {
                labels.extend(g.labels.as_ref().unwrap().iter().map(|&b| if b { 1.0 } else { 0.0 }));
            }
            node_offsets.push(coords.len());
            edge_offsets.push(edges.len());
        }

        // Incoming-edge lists per node, ordered by (distance, source position,
        // edge index) so that sums do not depend on node numbering.
        let n_total = coords.len();
        let mut in_ptr = vec![0usize; n_total + 1];
        for &(_, d) in &edges {
            in_ptr[d + 1] += 1;
        }
        for i in 0..n_total {
            in_ptr[i + 1] += in_ptr[i];
        }
        let mut fill = in_ptr.clone();
        let mut in_edges = vec![0usize; edges.len()];
        for (m, &(_, d)) in edges.iter().enumerate() {
            in_edges[fill[d]] = m;
            fill[d] += 1;
        }
        for i in 0..n_total {
            in_edges[in_ptr[i]..in_ptr[i + 1]].sort_by(|&a, &b| {
                let (pa, pb) = (coords[edges[a].0], coords[edges[b].0]);
                edge_feat[a]
                    .total_cmp(&edge_feat[b])
                    .then(pa.x.total_cmp(&pb.x))
                    .then(pa.y.total_cmp(&pb.y))
                    .then(a.cmp(&b))
            });
        }

        Ok(Self {
            node_offsets,
            edge_offsets,
            coords,
            edges,
            edge_feat,
            labels: if all_labeled { Some(labels) } else { None },
            in_ptr,
            in_edges,
        })
    }

    pub fn graph_count(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Incoming edge indices of `node`.
    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[self.in_ptr[node]..self.in_ptr[node + 1]]
    }

    /// Recovers the `i`-th original graph.
    pub fn slice(&self, i: usize) -> SparseGraph {
        let (n0, n1) = (self.node_offsets[i], self.node_offsets[i + 1]);
        let (e0, e1) = (self.edge_offsets[i], self.edge_offsets[i + 1]);
        SparseGraph {
            coords: self.coords[n0..n1].to_vec(),
            edges: self.edges[e0..e1].iter().map(|&(s, d)| (s - n0, d - n0)).collect(),
            edge_feat: self.edge_feat[e0..e1].to_vec(),
            labels: self.labels.as_ref().map(|l| l[e0..e1].iter().map(|&v| v > 0.5).collect()),
        }
    }

    /// Splits batch-aligned edge probabilities into one heatmap per graph.
    pub fn heatmaps(&self, probs: &[f64]) -> Vec<Heatmap> {
        (0..self.graph_count())
            .map(|i| {
                let (n0, n1) = (self.node_offsets[i], self.node_offsets[i + 1]);
                let (e0, e1) = (self.edge_offsets[i], self.edge_offsets[i + 1]);
                Heatmap {
                    n: n1 - n0,
                    edges: self.edges[e0..e1].iter().map(|&(s, d)| (s - n0, d - n0)).collect(),
                    probs: probs[e0..e1].to_vec(),
                }
            })
            .collect()
    }
}

/// Node and edge embeddings, row-major `nodes x H` and `edges x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub hidden: usize,
    pub h: Vec<f64>,
    pub e: Vec<f64>,
}

impl LatentState {
    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(&self.e).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
struct LayerIds {
    a: ParamId,
    b: ParamId,
    c: ParamId,
    d: ParamId,
    e: ParamId,
    node_gamma: ParamId,
    node_beta: ParamId,
    edge_gamma: ParamId,
    edge_beta: ParamId,
}

#[derive(Debug, Clone)]
struct Ids {
    wh: ParamId,
    bh: ParamId,
    we: ParamId,
    be: ParamId,
    layers: Vec<LayerIds>,
    f: ParamId,
    g: ParamId,
    j: ParamId,
    mlp: Vec<(ParamId, ParamId)>,
}

impl Ids {
    fn resolve(store: &ParamStore, config: &ModelConfig) -> Result<Self> {
        let get = |name: &str| store.id(name).ok_or_else(|| invalid!("missing parameter {}", name));
        let layers = (0..config.layers)
            .map(|l| {
                Ok(LayerIds {
                    a: get(&format!("layer.{l}.A"))?,
                    b: get(&format!("layer.{l}.B"))?,
                    c: get(&format!("layer.{l}.C"))?,
                    d: get(&format!("layer.{l}.D"))?,
                    e: get(&format!("layer.{l}.E"))?,
                    node_gamma: get(&format!("bn.{l}.node.gamma"))?,
                    node_beta: get(&format!("bn.{l}.node.beta"))?,
                    edge_gamma: get(&format!("bn.{l}.edge.gamma"))?,
                    edge_beta: get(&format!("bn.{l}.edge.beta"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mlp = (0..config.mlp_layers)
            .map(|t| Ok((get(&format!("mlp.{t}.weight"))?, get(&format!("mlp.{t}.bias"))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            wh: get("embed.node.weight")?,
            bh: get("embed.node.bias")?,
            we: get("embed.edge.weight")?,
            be: get("embed.edge.bias")?,
            layers,
            f: get("decoder.F")?,
            g: get("decoder.G")?,
            j: get("decoder.J")?,
            mlp,
        })
    }
}

/// Batch-normalization running statistics of one encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorms {
    pub node: BatchNormState,
    pub edge: BatchNormState,
}

/// Intermediate values of one encoder layer needed by the reverse pass.
#[derive(Debug, Clone)]
pub struct LayerTape {
    h_in: Vec<f64>,
    e_in: Vec<f64>,
    bh: Vec<f64>,
    sig: Vec<f64>,
    den: Vec<f64>,
    gates: Vec<f64>,
    node_out: Vec<f64>,
    edge_out: Vec<f64>,
    node_bn: BatchNormCache,
    edge_bn: BatchNormCache,
    node_stats: Option<(Vec<f64>, Vec<f64>)>,
    edge_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl LayerTape {
    /// Gate vectors, one `H`-row per edge in batch order.
    pub fn gates(&self) -> &[f64] {
        &self.gates
    }
}

#[derive(Debug, Clone)]
struct DecoderTape {
    h: Vec<f64>,
    e: Vec<f64>,
    sa: Vec<f64>,
    je: Vec<f64>,
    /// Input of every MLP layer; entry 0 is the decoded edge vector.
    mlp_in: Vec<Vec<f64>>,
    /// Pre-activations of the hidden MLP layers.
    mlp_pre: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Tape {
    layers: Vec<LayerTape>,
    decoder: DecoderTape,
    edge_feat: Vec<f64>,
    coords: Vec<f64>,
    edges: Vec<(usize, usize)>,
    in_ptr: Vec<usize>,
    in_edges: Vec<usize>,
    labels: Vec<f64>,
    pos_weight: f64,
}

/// Worst disagreement between analytic and finite-difference gradients
/// within one parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheck {
    pub name: String,
    /// Largest `|analytic - numeric| / max(|numeric|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// The entry attaining the largest relative error.
    pub analytic: f64,
    pub numeric: f64,
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Edge probabilities aligned with the batch edge order.
    pub probs: Vec<f64>,
    /// Mean BCE, when the batch carries labels.
    pub loss: Option<f64>,
}

/// The model: parameters, batch-norm running statistics and the tape of the
/// most recent training forward pass.
#[derive(Debug, Clone)]
pub struct EdgeGae {
    config: ModelConfig,
    pub params: ParamStore,
    pub norms: Vec<LayerNorms>,
    /// Weight on positive labels in the loss.
    pub pos_weight: f64,
    ids: Ids,
    tape: Option<Tape>,
}

// out = x W^T (+ beta * out)
fn mm_wt(x: &[f64], rows: usize, w: &[f64], out_dim: usize, in_dim: usize, beta: f64, out: &mut [f64]) {
    gemm(1.0, MatRef::new(x, rows, in_dim), MatRef::new(w, out_dim, in_dim).t(), beta, out);
}

// dx += dy W
fn mm_w(dy: &[f64], rows: usize, w: &[f64], out_dim: usize, in_dim: usize, dx: &mut [f64]) {
    gemm(1.0, MatRef::new(dy, rows, out_dim), MatRef::new(w, out_dim, in_dim), 1.0, dx);
}

// dw += dy^T x
fn acc_wgrad(dy: &[f64], x: &[f64], rows: usize, out_dim: usize, in_dim: usize, dw: &mut [f64]) {
    gemm(1.0, MatRef::new(dy, rows, out_dim).t(), MatRef::new(x, rows, in_dim), 1.0, dw);
}

fn add_rows(src: &[f64], width: usize, dst: &mut [f64]) {
    for row in src.chunks_exact(width) {
        dst.iter_mut().zip(row).for_each(|(d, &s)| *d += s);
    }
}

impl EdgeGae {
    /// Fresh model: Xavier-uniform matrices, zero biases, unit BN scale.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        for (name, dims) in config.param_layout() {
            let value = if dims.len() == 2 {
                xavier_uniform(dims[0], dims[1], &mut rng)
            } else if name.ends_with(".gamma") {
                Tensor::vector(vec![1.0; dims[0]])
            } else {
                Tensor::zeros(&dims)
            };
            params.insert(&name, value)?;
        }
        let norms = (0..config.layers)
            .map(|_| LayerNorms { node: BatchNormState::new(config.hidden), edge: BatchNormState::new(config.hidden) })
            .collect();
        let ids = Ids::resolve(&params, &config)?;
        Ok(Self { config, params, norms, pos_weight: 1.0, ids, tape: None })
    }

    /// Reassembles a model from stored parts. The parameter set must match
    /// the configuration's layout exactly.
    pub fn from_parts(config: ModelConfig, params: ParamStore, norms: Vec<LayerNorms>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        for p in params.iter() {
            if !layout.iter().any(|(name, _)| *name == p.name) {
                return Err(invalid!("unexpected parameter {}", p.name));
            }
        }
        for (name, dims) in &layout {
            let p = params.get(name).ok_or_else(|| invalid!("missing parameter {}", name))?;
            if &p.value.dims != dims {
                return Err(invalid!("parameter {} has shape {:?}, expected {:?}", name, p.value.dims, dims));
            }
        }
        if norms.len() != config.layers
            || norms.iter().any(|n| n.node.channels() != config.hidden || n.edge.channels() != config.hidden)
        {
            return Err(invalid!("batch-norm statistics do not match the configuration"));
        }
        let ids = Ids::resolve(&params, &config)?;
        Ok(Self { config, params, norms, pos_weight: 1.0, ids, tape: None })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn w(&self, id: ParamId) -> &[f64] {
        self.params.value(id)
    }

    /// Linear input embeddings of node coordinates and edge distances.
    pub fn embed_inputs(&self, batch: &BatchedGraph) -> LatentState {
        let hd = self.config.hidden;
        let n = batch.node_count();
        let m = batch.edge_count();
        let coords: Vec<f64> = batch.coords.iter().flat_map(|p| [p.x, p.y]).collect();
        let mut h: Vec<f64> = (0..n).flat_map(|_| self.w(self.ids.bh).iter().copied()).collect();
        mm_wt(&coords, n, self.w(self.ids.wh), hd, 2, 1.0, &mut h);
        let mut e: Vec<f64> = (0..m).flat_map(|_| self.w(self.ids.be).iter().copied()).collect();
        mm_wt(&batch.edge_feat, m, self.w(self.ids.we), hd, 1, 1.0, &mut e);
        LatentState { hidden: hd, h, e }
    }

    /// One residual gated layer.
    pub fn encoder_layer(
        &self,
        state: &LatentState,
        batch: &BatchedGraph,
        layer: usize,
        mode: Mode,
    ) -> Result<(LatentState, LayerTape)> {
        if layer >= self.config.layers {
            return Err(invalid!("layer {} out of range (model has {})", layer, self.config.layers));
        }
        let hd = self.config.hidden;
        let n = batch.node_count();
        let m = batch.edge_count();
        if state.h.len() != n * hd || state.e.len() != m * hd {
            return Err(invalid!("latent state does not match the batch"));
        }
        let ids = &self.ids.layers[layer];
        let (h, e) = (&state.h, &state.e);

        let mut ah = vec![0.0; n * hd];
        let mut bh = vec![0.0; n * hd];
        let mut dh = vec![0.0; n * hd];
        let mut eh = vec![0.0; n * hd];
        mm_wt(h, n, self.w(ids.a), hd, hd, 0.0, &mut ah);
        mm_wt(h, n, self.w(ids.b), hd, hd, 0.0, &mut bh);
        mm_wt(h, n, self.w(ids.d), hd, hd, 0.0, &mut dh);
        mm_wt(h, n, self.w(ids.e), hd, hd, 0.0, &mut eh);

        // raw edge update from the incoming embeddings
        let mut edge_out = vec![0.0; m * hd];
        mm_wt(e, m, self.w(ids.c), hd, hd, 0.0, &mut edge_out);
        for (k, &(src, dst)) in batch.edges.iter().enumerate() {
            let row = &mut edge_out[k * hd..(k + 1) * hd];
            let (rd, rs) = (&dh[dst * hd..(dst + 1) * hd], &eh[src * hd..(src + 1) * hd]);
            for c in 0..hd {
                row[c] += rd[c] + rs[c];
            }
        }

        // gates from the incoming (pre-update) edge embeddings
        let sig: Vec<f64> = e.iter().map(|&v| math::sigmoid(v)).collect();
        let mut den = vec![self.config.delta; n * hd];
        let mut gates = vec![0.0; m * hd];
        let mut node_out = ah;
        for i in 0..n {
            let di = &mut den[i * hd..(i + 1) * hd];
            let mut sum = vec![0.0; hd];
            for &k in batch.in_edges(i) {
                sum.iter_mut().zip(&sig[k * hd..(k + 1) * hd]).for_each(|(d, &s)| *d += s);
            }
            let guard = gate_guard(batch.in_edges(i).len());
            di.iter_mut().zip(&sum).for_each(|(d, &s)| *d += guard * s);
            let out = &mut node_out[i * hd..(i + 1) * hd];
            for &k in batch.in_edges(i) {
                let src = batch.edges[k].0;
                let g = &mut gates[k * hd..(k + 1) * hd];
                let s = &sig[k * hd..(k + 1) * hd];
                let b = &bh[src * hd..(src + 1) * hd];
                for c in 0..hd {
                    g[c] = s[c] / di[c];
                    out[c] += g[c] * b[c];
                }
            }
        }

        let norms = &self.norms[layer];
        let bn_mode = mode.bn();
        let (node_bn, node_stats) = norms.node.forward(
            &mut node_out,
            n,
            self.w(ids.node_gamma),
            self.w(ids.node_beta),
            bn_mode,
        );
        let (edge_bn, edge_stats) = norms.edge.forward(
            &mut edge_out,
            m,
            self.w(ids.edge_gamma),
            self.w(ids.edge_beta),
            bn_mode,
        );
        let h_next: Vec<f64> = node_out.iter().zip(h).map(|(&z, &x)| math::relu(z) + x).collect();
        let e_next: Vec<f64> = edge_out.iter().zip(e).map(|(&z, &x)| math::relu(z) + x).collect();
        let tape = LayerTape {
            h_in: h.clone(),
            e_in: e.clone(),
            bh,
            sig,
            den,
            gates,
            node_out,
            edge_out,
            node_bn,
            edge_bn,
            node_stats,
            edge_stats,
        };
        Ok((LatentState { hidden: hd, h: h_next, e: e_next }, tape))
    }

    /// Runs all encoder layers, returning the final state and per-layer tapes.
    pub fn encode(&self, batch: &BatchedGraph, mode: Mode) -> Result<(LatentState, Vec<LayerTape>)> {
        let mut state = self.embed_inputs(batch);
        let mut tapes = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let (next, tape) = self.encoder_layer(&state, batch, l, mode)?;
            state = next;
            tapes.push(tape);
        }
        Ok((state, tapes))
    }

    fn decode_inner(&self, state: LatentState, batch: &BatchedGraph) -> DecoderTape {
        let hd = self.config.hidden;
        let n = batch.node_count();
        let m = batch.edge_count();
        let LatentState { h, e, .. } = state;
        let mut fh = vec![0.0; n * hd];
        let mut gh = vec![0.0; n * hd];
        let mut je = vec![0.0; m * hd];
        mm_wt(&h, n, self.w(self.ids.f), hd, hd, 0.0, &mut fh);
        mm_wt(&h, n, self.w(self.ids.g), hd, hd, 0.0, &mut gh);
        mm_wt(&e, m, self.w(self.ids.j), hd, hd, 0.0, &mut je);
        let mut sa = vec![0.0; m * hd];
        let mut d = vec![0.0; m * hd];
        for (k, &(src, dst)) in batch.edges.iter().enumerate() {
            for c in 0..hd {
                let s = math::sigmoid(fh[src * hd + c] + gh[dst * hd + c]);
                sa[k * hd + c] = s;
                d[k * hd + c] = s * je[k * hd + c];
            }
        }
        let mut mlp_in = Vec::with_capacity(self.config.mlp_layers);
        let mut mlp_pre = Vec::with_capacity(self.config.mlp_layers);
        let mut z = d;
        let mut logits = Vec::new();
        for (t, &(wid, bid)) in self.ids.mlp.iter().enumerate() {
            let out_dim = self.params.param(bid).value.len();
            let mut u: Vec<f64> = (0..m).flat_map(|_| self.w(bid).iter().copied()).collect();
            mm_wt(&z, m, self.w(wid), out_dim, hd, 1.0, &mut u);
            mlp_in.push(z);
            if t + 1 == self.config.mlp_layers {
                logits = u;
                z = Vec::new();
            } else {
                z = u.iter().map(|&v| math::relu(v)).collect();
                mlp_pre.push(u);
            }
        }
        let probs = logits.iter().map(|&v| math::sigmoid(v)).collect();
        DecoderTape { h, e, sa, je, mlp_in, mlp_pre, probs }
    }

    /// Edge-centered decoding of a final latent state into probabilities.
    pub fn decode(&self, state: LatentState, batch: &BatchedGraph) -> Result<Vec<f64>> {
        let hd = self.config.hidden;
        if state.h.len() != batch.node_count() * hd || state.e.len() != batch.edge_count() * hd {
            return Err(invalid!("latent state does not match the batch"));
        }
        Ok(self.decode_inner(state, batch).probs)
    }

    /// Eval-mode prediction. Takes `&self`, so a frozen model can serve
    /// several threads at once.
    pub fn predict(&self, batch: &BatchedGraph) -> Result<Vec<f64>> {
        let (state, _) = self.encode(batch, Mode::Eval)?;
        let probs = self.decode_inner(state, batch).probs;
        check_finite(&probs)?;
        Ok(probs)
    }

    /// Full forward pass. Train mode records a tape for [`backward`](Self::backward)
    /// and folds the batch statistics into the batch-norm running estimates.
    /// The loss is computed whenever the batch carries labels.
    pub fn forward(&mut self, batch: &BatchedGraph, mode: Mode) -> Result<ForwardOutput> {
        if batch.edge_count() == 0 {
            return Err(invalid!("batch has no edges"));
        }
        let (state, mut layers) = self.encode(batch, mode)?;
        let decoder = self.decode_inner(state, batch);
        check_finite(&decoder.probs)?;
        let loss = match &batch.labels {
            Some(labels) => Some(bce_loss(&decoder.probs, labels, self.pos_weight)?),
            None => None,
        };
        if let Some(l) = loss {
            if !l.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss {l}")));
            }
        }
        let probs = decoder.probs.clone();
        if mode == Mode::Train {
            let n_rows = batch.node_count();
            let e_rows = batch.edge_count();
            for (norms, tape) in self.norms.iter_mut().zip(layers.iter_mut()) {
                if let Some((mean, var)) = tape.node_stats.take() {
                    norms.node.update_running(&mean, &var, n_rows);
                }
                if let Some((mean, var)) = tape.edge_stats.take() {
                    norms.edge.update_running(&mean, &var, e_rows);
                }
            }
            self.tape = batch.labels.as_ref().map(|labels| Tape {
                layers,
                decoder,
                edge_feat: batch.edge_feat.clone(),
                coords: batch.coords.iter().flat_map(|p| [p.x, p.y]).collect(),
                edges: batch.edges.clone(),
                in_ptr: batch.in_ptr.clone(),
                in_edges: batch.in_edges.clone(),
                labels: labels.clone(),
                pos_weight: self.pos_weight,
            });
        } else {
            self.tape = None;
        }
        Ok(ForwardOutput { probs, loss })
    }

    /// Same as [`forward`](Self::forward) but fails without labels.
    pub fn forward_loss(&mut self, batch: &BatchedGraph, mode: Mode) -> Result<(Vec<f64>, f64)> {
        if batch.labels.is_none() {
            return Err(invalid!("loss requested for a batch without labels"));
        }
        let out = self.forward(batch, mode)?;
        Ok((out.probs, out.loss.unwrap()))
    }

    /// Accumulates `d loss / d param` into the parameter gradients.
    pub fn backward(&mut self) -> Result<()> {
        self.backward_scaled(1.0)
    }

    /// Backward pass for `scale * loss`. Consumes the tape.
    pub fn backward_scaled(&mut self, scale: f64) -> Result<()> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State(String::from("backward called without a recorded training forward pass")))?;
        let hd = self.config.hidden;
        let m = tape.edges.len();
        let n = tape.coords.len() / 2;
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        let ids = self.ids.clone();

        // loss -> logits
        let dec = &tape.decoder;
        let dprob = bce_loss_grad(&dec.probs, &tape.labels, tape.pos_weight)?;
        let mut du: Vec<f64> = dprob.iter().zip(&dec.probs).map(|(&g, &p)| scale * g * p * (1.0 - p)).collect();

        // MLP head
        let mut dd = Vec::new();
        for t in (0..self.config.mlp_layers).rev() {
            let (wid, bid) = ids.mlp[t];
            let out_dim = self.params.param(bid).value.len();
            let z = &dec.mlp_in[t];
            acc_wgrad(&du, z, m, out_dim, hd, &mut grads[idx(wid)]);
            add_rows(&du, out_dim, &mut grads[idx(bid)]);
            let mut dz = vec![0.0; m * hd];
            mm_w(&du, m, self.w(wid), out_dim, hd, &mut dz);
            if t > 0 {
                dz.iter_mut().zip(&dec.mlp_pre[t - 1]).for_each(|(g, &v)| *g *= math::relu_grad(v));
                du = dz;
            } else {
                dd = dz;
            }
        }

        // edge-centered decoder
        let mut dh = vec![0.0; n * hd];
        let mut de = vec![0.0; m * hd];
        let mut dje = vec![0.0; m * hd];
        let mut dfh = vec![0.0; n * hd];
        let mut dgh = vec![0.0; n * hd];
        for (k, &(src, dst)) in tape.edges.iter().enumerate() {
            for c in 0..hd {
                let x = k * hd + c;
                let s = dec.sa[x];
                dje[x] = dd[x] * s;
                let da = dd[x] * dec.je[x] * s * (1.0 - s);
                dfh[src * hd + c] += da;
                dgh[dst * hd + c] += da;
            }
        }
        acc_wgrad(&dfh, &dec.h, n, hd, hd, &mut grads[idx(ids.f)]);
        acc_wgrad(&dgh, &dec.h, n, hd, hd, &mut grads[idx(ids.g)]);
        acc_wgrad(&dje, &dec.e, m, hd, hd, &mut grads[idx(ids.j)]);
        mm_w(&dfh, n, self.w(ids.f), hd, hd, &mut dh);
        mm_w(&dgh, n, self.w(ids.g), hd, hd, &mut dh);
        mm_w(&dje, m, self.w(ids.j), hd, hd, &mut de);

        // encoder layers, last to first
        for (l, lt) in tape.layers.iter().enumerate().rev() {
            let li = &ids.layers[l];
            // residual branch carries dh/de through unchanged
            let mut dnode: Vec<f64> =
                dh.iter().zip(&lt.node_out).map(|(&g, &z)| g * math::relu_grad(z)).collect();
            let mut dedge: Vec<f64> =
                de.iter().zip(&lt.edge_out).map(|(&g, &z)| g * math::relu_grad(z)).collect();
            {
                let gamma = self.params.value(li.node_gamma).to_vec();
                let (mut dg, mut db) = (vec![0.0; hd], vec![0.0; hd]);
                lt.node_bn.backward(&mut dnode, &gamma, &mut dg, &mut db);
                add_into(&mut grads[idx(li.node_gamma)], &dg);
                add_into(&mut grads[idx(li.node_beta)], &db);
                let gamma = self.params.value(li.edge_gamma).to_vec();
                let (mut dg, mut db) = (vec![0.0; hd], vec![0.0; hd]);
                lt.edge_bn.backward(&mut dedge, &gamma, &mut dg, &mut db);
                add_into(&mut grads[idx(li.edge_gamma)], &dg);
                add_into(&mut grads[idx(li.edge_beta)], &db);
            }

            // node branch: h_hat = A h + sum w * (B h_src)
            acc_wgrad(&dnode, &lt.h_in, n, hd, hd, &mut grads[idx(li.a)]);
            mm_w(&dnode, n, self.w(li.a), hd, hd, &mut dh);
            let mut dbh = vec![0.0; n * hd];
            let mut dgate = vec![0.0; m * hd];
            for i in 0..n {
                let gi = &dnode[i * hd..(i + 1) * hd];
                let incoming = &tape.in_edges[tape.in_ptr[i]..tape.in_ptr[i + 1]];
                let mut acc = vec![0.0; hd];
                for &k in incoming {
                    let src = tape.edges[k].0;
                    for c in 0..hd {
                        let x = k * hd + c;
                        let dw = gi[c] * lt.bh[src * hd + c];
                        dgate[x] = dw;
                        dbh[src * hd + c] += gi[c] * lt.gates[x];
                        acc[c] += dw * lt.sig[x];
                    }
                }
                let guard = gate_guard(incoming.len());
                for &k in incoming {
                    for c in 0..hd {
                        let x = k * hd + c;
                        let den = lt.den[i * hd + c];
                        let ds = (dgate[x] - guard * acc[c] / den) / den;
                        let s = lt.sig[x];
                        de[x] += ds * s * (1.0 - s);
                    }
                }
            }
            acc_wgrad(&dbh, &lt.h_in, n, hd, hd, &mut grads[idx(li.b)]);
            mm_w(&dbh, n, self.w(li.b), hd, hd, &mut dh);

            // edge branch: e_hat = C e + D h_dst + E h_src
            acc_wgrad(&dedge, &lt.e_in, m, hd, hd, &mut grads[idx(li.c)]);
            mm_w(&dedge, m, self.w(li.c), hd, hd, &mut de);
            let mut ddh = vec![0.0; n * hd];
            let mut deh = vec![0.0; n * hd];
            for (k, &(src, dst)) in tape.edges.iter().enumerate() {
                let g = &dedge[k * hd..(k + 1) * hd];
                add_into(&mut ddh[dst * hd..(dst + 1) * hd], g);
                add_into(&mut deh[src * hd..(src + 1) * hd], g);
            }
            acc_wgrad(&ddh, &lt.h_in, n, hd, hd, &mut grads[idx(li.d)]);
            acc_wgrad(&deh, &lt.h_in, n, hd, hd, &mut grads[idx(li.e)]);
            mm_w(&ddh, n, self.w(li.d), hd, hd, &mut dh);
            mm_w(&deh, n, self.w(li.e), hd, hd, &mut dh);
        }

        // input embeddings
        acc_wgrad(&dh, &tape.coords, n, hd, 2, &mut grads[idx(ids.wh)]);
        add_rows(&dh, hd, &mut grads[idx(ids.bh)]);
        acc_wgrad(&de, &tape.edge_feat, m, hd, 1, &mut grads[idx(ids.we)]);
        add_rows(&de, hd, &mut grads[idx(ids.be)]);

        for (p, g) in self.params.iter_mut().zip(grads) {
            add_into(&mut p.grad.data, &g);
        }
        Ok(())
    }

    /// Compares the analytic gradient of every parameter entry with a central
    /// finite difference of step `h`, reporting the worst entry per parameter.
    /// Relative errors divide by `max(|numeric|, floor)`.
    /// Parameters and gradients are left as they were; batch-norm running
    /// statistics are restored.
    pub fn gradient_check(&mut self, batch: &BatchedGraph, h: f64, floor: f64) -> Result<Vec<GradCheck>> {
        let norms = self.norms.clone();
        let saved: Vec<Vec<f64>> = self.params.iter().map(|p| p.grad.data.clone()).collect();
        self.params.zero_grad();
        self.forward_loss(batch, Mode::Train)?;
        self.backward()?;
        let analytic: Vec<Vec<f64>> = self.params.iter().map(|p| p.grad.data.clone()).collect();
        let mut report = Vec::with_capacity(analytic.len());
        for (pi, grads) in analytic.iter().enumerate() {
            let id = ParamId(pi);
            let mut worst = GradCheck { name: self.params.param(id).name.clone(), ..GradCheck::default() };
            for (x, &a) in grads.iter().enumerate() {
                let orig = self.params.param(id).value.data[x];
                self.params.param_mut(id).value.data[x] = orig + h;
                let (_, up) = self.forward_loss(batch, Mode::Train)?;
                self.params.param_mut(id).value.data[x] = orig - h;
                let (_, down) = self.forward_loss(batch, Mode::Train)?;
                self.params.param_mut(id).value.data[x] = orig;
                let numeric = (up - down) / (2.0 * h);
                let abs = (a - numeric).abs();
                let rel = abs / numeric.abs().max(floor);
                worst.max_abs_error = worst.max_abs_error.max(abs);
                if rel > worst.max_rel_error {
                    worst.max_rel_error = rel;
                    worst.analytic = a;
                    worst.numeric = numeric;
                }
            }
            report.push(worst);
        }
        self.tape = None;
        self.norms = norms;
        for (p, g) in self.params.iter_mut().zip(saved) {
            p.grad.data = g;
        }
        Ok(report)
    }

    /// Whether a training tape is waiting for a backward pass.
    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

/// Relative widening of the gate denominator. With several in-edges the
/// rounded sum of sigmoids can undershoot the exact sum, which would let the
/// rounded gates add up to 1 or more; the factor keeps that sum strictly
/// below one. A single in-edge needs no widening.
fn gate_guard(in_degree: usize) -> f64 {
    1.0 + 4.0 * in_degree.saturating_sub(1) as f64 * f64::EPSILON
}

fn idx(id: ParamId) -> usize {
    id.index()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn check_finite(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric(String::from("non-finite edge probability")));
    }
    Ok(())
}
