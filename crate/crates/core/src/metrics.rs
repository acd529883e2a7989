//! Edge classification metrics, optimal gap and report aggregation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::model::{BatchedGraph, EdgeGae};
use crate::search::{solve, SearchConfig};
use crate::tsp::{knn_sparsify, label_edges, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(invalid!("{} predictions but {} labels", probs.len(), labels.len()));
        }
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// `TP / (TP + (FP + FN) / 2)`, zero when undefined.
    pub fn f1(&self) -> f64 {
        let denom = self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.tp as f64 / denom
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

pub fn f1_score(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid!("threshold must lie in (0,1), got {}", threshold));
    }
    Ok(Confusion::from_predictions(probs, labels, threshold)?.f1())
}

/// ROC AUC as the Mann-Whitney statistic with average ranks for ties.
pub fn roc_auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(invalid!("{} predictions but {} labels", probs.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(String::from("ROC AUC needs both positive and negative labels")));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie group i..=j shares their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Percentage excess of `predicted` over `oracle`.
pub fn optimal_gap(predicted: f64, oracle: f64) -> Result<f64> {
    if !(oracle > 0.0) {
        return Err(invalid!("oracle length must be positive, got {}", oracle));
    }
    Ok(100.0 * (predicted - oracle) / oracle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub id: u64,
    pub n: usize,
    pub f1: f64,
    /// `None` when the labels are single-class.
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub predicted_length: f64,
    pub oracle_length: f64,
    pub gap_percent: f64,
    pub tour: Vec<usize>,
}

impl InstanceRecord {
    /// Gaps below zero beyond float noise mean the reference was not optimal.
    pub fn gap_flagged(&self) -> bool {
        self.gap_percent < -1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and sample standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// City count of the class; `None` for the overall row.
    pub n: Option<usize>,
    pub count: usize,
    pub f1: Summary,
    /// F1 over all edges of the group pooled together.
    pub pooled_f1: f64,
    pub auc: Summary,
    pub gap: Summary,
}

impl Aggregate {
    fn over(n: Option<usize>, records: &[&InstanceRecord]) -> Self {
        let f1: Vec<f64> = records.iter().map(|r| r.f1).collect();
        let auc: Vec<f64> = records.iter().filter_map(|r| r.auc).collect();
        let gap: Vec<f64> = records.iter().map(|r| r.gap_percent).collect();
        let mut pooled = Confusion::default();
        records.iter().for_each(|r| pooled.merge(&r.confusion));
        Self {
            n,
            count: records.len(),
            f1: Summary::of(&f1),
            pooled_f1: pooled.f1(),
            auc: Summary::of(&auc),
            gap: Summary::of(&gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<InstanceRecord>,
    /// Per-size aggregates in ascending size, then the overall row.
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    pub fn from_records(mut records: Vec<InstanceRecord>) -> Self {
        records.sort_by_key(|r| r.id);
        let mut by_size: BTreeMap<usize, Vec<&InstanceRecord>> = BTreeMap::new();
        for r in &records {
            by_size.entry(r.n).or_default().push(r);
        }
        let mut aggregates: Vec<Aggregate> =
            by_size.iter().map(|(&n, rs)| Aggregate::over(Some(n), rs)).collect();
        let all: Vec<&InstanceRecord> = records.iter().collect();
        aggregates.push(Aggregate::over(None, &all));
        Self { records, aggregates }
    }

    pub fn overall(&self) -> &Aggregate {
        self.aggregates.last().expect("overall row always present")
    }

    pub fn class(&self, n: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.n == Some(n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub search: SearchConfig,
    pub f1_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { search: SearchConfig::default(), f1_threshold: 0.5 }
    }
}

/// Eval-mode forward, metrics against the reference tour, then search.
pub fn evaluate_instance(model: &EdgeGae, inst: &Instance, config: &EvalConfig) -> Result<InstanceRecord> {
    let oracle = inst
        .optimal_tour
        .as_ref()
        .ok_or_else(|| invalid!("instance {} has no reference tour", inst.id))?;
    let graph = knn_sparsify(&inst.coords, model.config().knn)?;
    let (graph, _) = label_edges(&graph, oracle)?;
    let batch = BatchedGraph::new(&[&graph])?;
    let probs = model.predict(&batch)?;
    let labels = graph.labels.as_ref().unwrap();
    let confusion = Confusion::from_predictions(&probs, labels, config.f1_threshold)?;
    let auc = match roc_auc(&probs, labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let heatmap = batch.heatmaps(&probs).pop().unwrap();
    let (tour, _) = solve(&inst.coords, &heatmap, &config.search)?;
    Ok(InstanceRecord {
        id: inst.id,
        n: inst.n(),
        f1: confusion.f1(),
        auc,
        confusion,
        predicted_length: tour.length,
        oracle_length: oracle.length,
        gap_percent: optimal_gap(tour.length, oracle.length)?,
        tour: tour.order,
    })
}

/// Sequential evaluation of a dataset.
pub fn evaluate(model: &EdgeGae, instances: &[Instance], config: &EvalConfig) -> Result<EvalReport> {
    let records = instances
        .iter()
        .map(|inst| evaluate_instance(model, inst, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_records(records))
}
