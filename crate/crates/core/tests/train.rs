use edgegae_core::model::{BatchedGraph, EdgeGae, Mode, ModelConfig};
use edgegae_core::nn::Adam;
use edgegae_core::oracle::{build_dataset, DatasetSpec};
use edgegae_core::sampler::SamplingMode;
use edgegae_core::train::{init_seed, labeled_graphs, TrainConfig, Trainer};
use edgegae_core::tsp::SparseGraph;

#[test]
fn overfits_a_fixed_batch() {
    let data = build_dataset(&DatasetSpec::new(10, 10, 4, 21)).unwrap();
    let (graphs, _) = labeled_graphs(&data, 25).unwrap();
    let refs: Vec<&SparseGraph> = graphs.iter().collect();
    let batch = BatchedGraph::new(&refs).unwrap();
    let mut model = EdgeGae::new(ModelConfig::default(), 0).unwrap();
    let adam = Adam::new(1e-3);
    let mut first = None;
    for _ in 0..200 {
        let (_, loss) = model.forward_loss(&batch, Mode::Train).unwrap();
        first.get_or_insert(loss);
        model.backward().unwrap();
        adam.step(&mut model.params);
    }
    let (_, last) = model.forward_loss(&batch, Mode::Train).unwrap();
    assert!((first.unwrap() - std::f64::consts::LN_2).abs() < 0.15);
    assert!(last < 0.1, "final loss {last}");
}

fn small_trainer(sampling: SamplingMode, seed: u64) -> Trainer {
    let data = build_dataset(&DatasetSpec::new(8, 12, 100, 3)).unwrap();
    let (graphs, _) = labeled_graphs(&data, 25).unwrap();
    let cfg = ModelConfig { hidden: 16, layers: 2, ..ModelConfig::default() };
    let model = EdgeGae::new(cfg, init_seed(seed)).unwrap();
    let config = TrainConfig { epochs: 20, batch_size: 16, sampling, seed, ..TrainConfig::default() };
    Trainer::new(model, config, graphs).unwrap()
}

#[test]
fn loss_decreases_over_a_short_run() {
    for sampling in [SamplingMode::Shuffle, SamplingMode::Active] {
        let mut t = small_trainer(sampling, 1);
        let stats = t.run(|_, _| {}).unwrap();
        assert_eq!(stats.len(), 20);
        assert!(stats.last().unwrap().mean_loss < stats[0].mean_loss);
        assert_eq!(t.epochs_done, 20);
    }
}

#[test]
fn shuffle_epochs_cover_every_instance() {
    let t = small_trainer(SamplingMode::Shuffle, 2);
    for epoch in 0..3 {
        let mut seen: Vec<usize> = t.epoch_batches(epoch).unwrap().concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
    }
    assert_ne!(t.epoch_batches(0).unwrap(), t.epoch_batches(1).unwrap());
}

#[test]
fn training_is_deterministic_and_resumable() {
    let mut a = small_trainer(SamplingMode::Active, 4);
    a.config.epochs = 3;
    let full = a.run(|_, _| {}).unwrap();

    let mut b = small_trainer(SamplingMode::Active, 4);
    b.config.epochs = 1;
    let head = b.run(|_, _| {}).unwrap();
    // continue from the saved state in a fresh trainer
    let mut c = small_trainer(SamplingMode::Active, 4);
    c.model = b.model.clone();
    c.set_adam(b.adam().clone());
    c.epochs_done = b.epochs_done;
    c.config.epochs = 3;
    let tail = c.run(|_, _| {}).unwrap();

    let resumed: Vec<f64> = head.iter().chain(&tail).map(|s| s.mean_loss).collect();
    let straight: Vec<f64> = full.iter().map(|s| s.mean_loss).collect();
    assert_eq!(resumed, straight);
    for (p, q) in a.model.params.iter().zip(c.model.params.iter()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn trainer_rejects_bad_input() {
    let model = EdgeGae::new(ModelConfig::default(), 0).unwrap();
    assert!(Trainer::new(model.clone(), TrainConfig::default(), vec![]).is_err());
    let data = build_dataset(&DatasetSpec::new(8, 8, 2, 3)).unwrap();
    let (mut graphs, _) = labeled_graphs(&data, 25).unwrap();
    let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
    assert!(Trainer::new(model.clone(), cfg, graphs.clone()).is_err());
    graphs[0].labels = None;
    assert!(Trainer::new(model, TrainConfig::default(), graphs).is_err());
}
