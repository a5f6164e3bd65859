mod common;

use aggnet::aggregation::AggregationOp;
use aggnet::config::{Mode, PresetRef, TrainConfig};
use aggnet::data::{synthetic_pair, union, LabeledDataset};
use aggnet::model::{build_bundle, read_head, ModelSpec};
use aggnet::train::{
    evaluate, evaluate_with, initial_bundle, joint_objective, train, Heads, JointBatch, JointParams, JointWeights,
};
use aggnet::{Error, ParamSet, Tensor};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn micro_config(mode: Mode, epochs: usize, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::joint(epochs, seed);
    c.mode = mode;
    c.preset = PresetRef::Inline(micro_spec());
    c.batch_size = 16;
    c
}

fn small_pair(seed: u64, per_class: usize) -> Vec<LabeledDataset> {
    let (a, b) = synthetic_pair(seed, per_class, 10).unwrap();
    vec![a, b]
}

fn shared_head(h: &Heads) -> ParamSet {
    match h {
        Heads::Shared(h) => read_head(h).clone(),
        Heads::PerModel { .. } => panic!("joint runs share one head"),
    }
}

#[test]
fn zero_epochs_returns_the_initialisation() {
    let config = micro_config(Mode::Joint, 0, 5);
    let out = train(&config, &small_pair(0, 4)).unwrap();
    let init = initial_bundle(&config).unwrap();
    assert_eq!(out.extractors, init.extractors);
    assert_eq!(out.star, init.star);
    assert_eq!(shared_head(&out.heads), *read_head(&init.head));
    assert!(out.history.is_empty());
}

#[test]
fn training_is_deterministic() {
    let data = small_pair(1, 6);
    for mode in [Mode::Joint, Mode::BaselineSeparate] {
        let config = micro_config(mode, 1, 3);
        let a = train(&config, &data).unwrap();
        let b = train(&config, &data).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.extractors, b.extractors);
        assert_eq!(a.star, b.star);
        assert_eq!(a.history.len(), 1);
    }
}

#[test]
fn baseline_modes_train_only_their_models() {
    let data = small_pair(1, 4);
    let sep = train(&micro_config(Mode::BaselineSeparate, 1, 0), &data).unwrap();
    let star = train(&micro_config(Mode::BaselineStar, 1, 0), &data).unwrap();
    let init = initial_bundle(&micro_config(Mode::BaselineSeparate, 1, 0)).unwrap();
    assert_eq!(sep.trained, [true, true, false]);
    assert_eq!(star.trained, [false, false, true]);
    assert_eq!(sep.star, init.star);
    assert_ne!(sep.extractors[0], init.extractors[0]);
    assert_eq!(star.extractors, init.extractors);
    assert_ne!(star.star, init.star);
    let names: Vec<_> = sep.history[0].models.iter().map(|m| m.model.as_str()).collect();
    assert_eq!(names, ["N1", "N2"]);
    assert!(matches!(sep.heads, Heads::PerModel { .. }));
}

#[test]
fn mismatched_datasets_are_data_errors() {
    let mut data = small_pair(0, 2);
    let config = micro_config(Mode::Joint, 1, 0);
    assert!(matches!(train(&config, &data[..1]), Err(Error::Data(_))));
    data[1] = LabeledDataset::new("k5", data[1].images.clone(), vec![0; data[1].len()], 5).unwrap();
    assert!(matches!(train(&config, &data), Err(Error::Data(_))));
}

#[test]
fn divergence_is_a_numerics_error_with_its_step() {
    let mut config = micro_config(Mode::Joint, 3, 0);
    config.lr = 1e6;
    match train(&config, &small_pair(0, 4)) {
        Err(Error::Numerics { step, .. }) => assert!(step.is_some()),
        other => panic!("expected a numerics error, got {:?}", other.map(|b| b.history)),
    }
}

fn micro_step(seed: u64) -> (ModelSpec, JointParams, JointBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = micro_spec();
    let b = build_bundle(&spec, 2, seed).unwrap();
    let params = JointParams { extractors: b.extractors, star: b.star, head: read_head(&b.head).clone() };
    let batch = JointBatch {
        parts: (0..2).map(|_| random_batch(&mut rng, 3, 10)).collect(),
        union: random_batch(&mut rng, 3, 10),
    };
    (spec, params, batch)
}

fn all_zero(p: &ParamSet) -> bool {
    p.iter().all(|(_, e)| e.tensor.data().iter().all(|&v| v == 0.0))
}

#[test]
fn head_coupling_without_the_regulariser() {
    let (spec, params, batch) = micro_step(2);
    let only_first = JointWeights { task: vec![1.0, 0.0, 0.0], lambda_agg: 0.0 };
    let g = joint_objective(&spec, &params, &batch, &only_first, AggregationOp::Sum, true).unwrap().grads.unwrap();
    assert!(all_zero(&g.extractors[1]));
    assert!(all_zero(&g.star));
    assert!(!all_zero(&g.extractors[0]));
    assert!(!all_zero(&g.head));

    // with lambda = 0 each extractor's gradient is its own task term's
    let full = JointWeights::uniform(2, 0.0);
    let gf = joint_objective(&spec, &params, &batch, &full, AggregationOp::Sum, true).unwrap().grads.unwrap();
    assert_eq!(gf.extractors[0], g.extractors[0]);
}

#[test]
fn objective_gradient_matches_central_differences() {
    let check = objective_fd(11, 50);
    eprintln!("objective fd: {check:?}");
    assert!(check.error <= 1e-2 && check.redrawn <= 10, "{check:?}");
}

#[test]
fn short_desk_run_reduces_objective_and_regulariser() {
    let data = small_pair(4, 20);
    let mut config = TrainConfig::joint(5, 4);
    config.batch_size = 16;
    let out = train(&config, &data).unwrap();
    let (j0, agg0) = out.initial.unwrap();
    let last = out.history.last().unwrap();
    assert!(last.loss_total < j0, "{} vs {j0}", last.loss_total);
    assert!(last.loss_agg_end < agg0 / 10.0, "{} vs {agg0}", last.loss_agg_end);
}

#[test]
fn perfect_stub_scores_one() {
    let images =
        Tensor::new(vec![3, 1, 32, 32], [0.0f32, 0.3, 0.7].iter().flat_map(|&v| vec![v; 1024]).collect()).unwrap();
    let ds = LabeledDataset::new("toy", images, vec![0, 3, 7], 10).unwrap();
    let acc = evaluate_with(&ds, |x| {
        let n = x.shape()[0];
        let mut logits = vec![0.0f32; n * 10];
        for (i, img) in x.data().chunks(1024).enumerate() {
            logits[i * 10 + (img[0] * 10.0).round() as usize] = 1.0;
        }
        Ok(Tensor::new(vec![n, 10], logits).unwrap())
    })
    .unwrap();
    assert_eq!(acc, 1.0);
    let empty = LabeledDataset::empty_like(&ds);
    assert!(matches!(evaluate_with(&empty, Ok), Err(Error::Data(_))));
}

#[test]
fn fresh_models_score_near_chance() {
    let (a, _) = synthetic_pair(0, 30, 10).unwrap();
    let accs: Vec<f64> = (0..5)
        .map(|seed| {
            let b = build_bundle(&ModelSpec::vgg_lite(), 1, seed).unwrap();
            evaluate(&b.model(0), &a).unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.10).abs() <= 0.05, "{accs:?}");
}

#[test]
fn union_accuracy_by_source_matches_the_parts() {
    let (a, b) = synthetic_pair(3, 8, 10).unwrap();
    let u = union(&a, &b).unwrap();
    let model = build_bundle(&ModelSpec::vgg_lite(), 1, 1).unwrap().model(0);
    assert_eq!(u.len(), a.len() + b.len());
    assert_eq!(evaluate(&model, &u.from_source(0)).unwrap(), evaluate(&model, &a).unwrap());
    assert_eq!(evaluate(&model, &u.from_source(1)).unwrap(), evaluate(&model, &b).unwrap());
}
