use edgegae_core::metrics::{evaluate, optimal_gap, roc_auc, EvalConfig, EvalReport, InstanceRecord};
use edgegae_core::model::{BatchedGraph, EdgeGae, ModelConfig};
use edgegae_core::train::labeled_graphs;
use edgegae_core::nn::bce_loss;
use edgegae_core::oracle::{build_dataset, held_karp, DatasetSpec};
use edgegae_core::search::SearchConfig;
use edgegae_core::tsp::{knn_sparsify, tour_length, Point};
use proptest::prelude::*;

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(x, y)| Point { x, y }), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tour_length_ignores_rotation_and_reversal(pts in points(4..30), shift in 0usize..30) {
        let n = pts.len();
        let order: Vec<usize> = (0..n).collect();
        let base = tour_length(&pts, &order).unwrap();
        let mut rotated = order.clone();
        rotated.rotate_left(shift % n);
        let mut reversed = order.clone();
        reversed.reverse();
        prop_assert!((tour_length(&pts, &rotated).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
        prop_assert!((tour_length(&pts, &reversed).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn auc_invariant_under_increasing_transforms(
        pairs in prop::collection::vec((0.0..1.0f64, any::<bool>()), 2..60),
        a in 0.1..5.0f64,
        b in -3.0..3.0f64,
    ) {
        let probs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
        let base = roc_auc(&probs, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let affine: Vec<f64> = probs.iter().map(|p| a * p + b).collect();
        let cubed: Vec<f64> = probs.iter().map(|p| p * p * p).collect();
        prop_assert!((roc_auc(&affine, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&cubed, &labels).unwrap() - base).abs() < 1e-12);
        let perfect: Vec<f64> = labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
        prop_assert_eq!(roc_auc(&perfect, &labels).unwrap(), 1.0);
    }

    #[test]
    fn bce_is_nonnegative_and_decreasing_for_positives(p in 1e-9..1.0f64, q in 1e-9..1.0f64, w in 0.1..10.0f64) {
        prop_assert!(bce_loss(&[p], &[1.0], w).unwrap() >= 0.0);
        prop_assert!(bce_loss(&[p], &[0.0], w).unwrap() >= 0.0);
        if p < q {
            prop_assert!(bce_loss(&[p], &[1.0], w).unwrap() >= bce_loss(&[q], &[1.0], w).unwrap());
        }
    }

    #[test]
    fn exact_gap_is_nonnegative(pts in points(5..9)) {
        let best = held_karp(&pts).unwrap();
        let order: Vec<usize> = (0..pts.len()).collect();
        let gap = optimal_gap(tour_length(&pts, &order).unwrap(), best.length).unwrap();
        prop_assert!(gap >= -1e-9);
    }

    #[test]
    fn knn_out_degree_is_clamped(pts in points(4..25), k in 1usize..30) {
        let g = knn_sparsify(&pts, k).unwrap();
        let n = pts.len();
        prop_assert_eq!(g.edge_count(), n * k.min(n - 1));
        for &(s, d) in &g.edges {
            prop_assert!(s != d && s < n && d < n);
        }
    }
}

#[test]
fn oracle_tours_have_zero_gap() {
    let data = build_dataset(&DatasetSpec::new(6, 9, 40, 5)).unwrap();
    let records: Vec<InstanceRecord> = data
        .iter()
        .map(|inst| {
            let t = inst.optimal_tour.clone().unwrap();
            InstanceRecord {
                id: inst.id,
                n: inst.n(),
                f1: 1.0,
                auc: Some(1.0),
                confusion: Default::default(),
                predicted_length: t.length,
                oracle_length: t.length,
                gap_percent: optimal_gap(t.length, t.length).unwrap(),
                tour: t.order,
            }
        })
        .collect();
    let report = EvalReport::from_records(records);
    assert_eq!(report.overall().gap.mean, 0.0);
    // overall mean equals the count-weighted mean of class means
    let classes = &report.aggregates[..report.aggregates.len() - 1];
    let weighted: f64 = classes.iter().map(|a| a.gap.mean * a.count as f64).sum::<f64>() / 40.0;
    assert_eq!(weighted, 0.0);
}

#[test]
fn evaluation_is_deterministic_and_consistent() {
    let data = build_dataset(&DatasetSpec::new(8, 12, 60, 77)).unwrap();
    let model = EdgeGae::new(ModelConfig::default(), 12).unwrap();
    let config = EvalConfig { search: SearchConfig { samples: 20, ..SearchConfig::default() }, f1_threshold: 0.5 };
    let a = evaluate(&model, &data, &config).unwrap();
    let b = evaluate(&model, &data, &config).unwrap();
    assert_eq!(a, b);
    for r in &a.records {
        assert!((0.0..=1.0).contains(&r.f1));
        assert!(r.gap_percent >= -1e-9);
    }
    let weighted: f64 = a.aggregates[..a.aggregates.len() - 1]
        .iter()
        .map(|c| c.gap.mean * c.count as f64)
        .sum::<f64>()
        / 60.0;
    assert!((weighted - a.overall().gap.mean).abs() < 1e-12);
}

// A single untrained network is a fixed function of edge length, which is
// informative, so its AUC sits well away from 0.5 in either direction. Chance
// level holds on average over initializations.
#[test]
fn untrained_models_rank_at_chance_on_average() {
    let data = build_dataset(&DatasetSpec::new(8, 12, 60, 77)).unwrap();
    let (graphs, _) = labeled_graphs(&data, 25).unwrap();
    let mut total = 0.0;
    for seed in 0..30 {
        let model = EdgeGae::new(ModelConfig::default(), 1000 + seed).unwrap();
        for g in &graphs {
            let p = model.predict(&BatchedGraph::new(&[g]).unwrap()).unwrap();
            total += roc_auc(&p, g.labels.as_ref().unwrap()).unwrap();
        }
    }
    let mean = total / (30 * graphs.len()) as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean AUC {mean}");
}
